#include "amigo/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

namespace amigo::net {

namespace {

std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

sockaddr_in make_addr(const Endpoint& ep) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    std::string ip = ep.host.empty() ? "0.0.0.0" : resolve_ipv4(ep.host);
    if (inet_pton(AF_INET, ip.c_str(), &addr.sin_addr) != 1) throw network_error("bad address '" + ip + "'");
    return addr;
}

timeval to_timeval(std::chrono::milliseconds t) {
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(t.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((t.count() % 1000) * 1000);
    return tv;
}

}  // namespace

Endpoint parse_endpoint(std::string_view text, std::uint16_t default_port) {
    Endpoint ep;
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos) {
        if (default_port == 0) throw validation_error("endpoint '" + std::string(text) + "' needs a port");
        ep.host = std::string(text);
        ep.port = default_port;
        return ep;
    }
    ep.host = std::string(text.substr(0, colon));
    auto port_text = text.substr(colon + 1);
    unsigned port = 0;
    auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port > 65535)
        throw validation_error("bad port in endpoint '" + std::string(text) + "'");
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
}

bool is_ipv4_literal(std::string_view host) {
    std::string h(host);
    in_addr a{};
    return inet_pton(AF_INET, h.c_str(), &a) == 1;
}

void Socket::reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    pending_.clear();
}

void Socket::shutdown() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::shutdown_write() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

std::size_t Socket::send_some(std::string_view data) {
    for (;;) {
        ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
        if (n >= 0) return static_cast<std::size_t>(n);
        if (errno == EINTR) continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK) return 0;
        throw network_error(errno_text("send"));
    }
}

void Socket::set_recv_timeout(std::chrono::milliseconds t) {
    auto tv = to_timeval(t);
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

void Socket::set_send_timeout(std::chrono::milliseconds t) {
    auto tv = to_timeval(t);
    ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

void Socket::send_all(std::string_view data) {
    while (!data.empty()) {
        ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw network_error(errno_text("send"));
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

std::size_t Socket::recv_some(char* buf, std::size_t len) {
    if (!pending_.empty()) {
        std::size_t n = std::min(len, pending_.size());
        std::memcpy(buf, pending_.data(), n);
        pending_.erase(0, n);
        return n;
    }
    for (;;) {
        ssize_t n = ::recv(fd_, buf, len, 0);
        if (n >= 0) return static_cast<std::size_t>(n);
        if (errno == EINTR) continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK) throw network_error("receive timed out");
        throw network_error(errno_text("recv"));
    }
}

std::optional<std::string> Socket::recv_line(std::size_t max_len) {
    for (;;) {
        if (auto nl = pending_.find('\n'); nl != std::string::npos) {
            std::string line = pending_.substr(0, nl);
            pending_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        if (pending_.size() > max_len) throw network_error("line too long");
        char buf[1024];
        ssize_t n;
        do {
            n = ::recv(fd_, buf, sizeof buf, 0);
        } while (n < 0 && errno == EINTR);
        if (n < 0) {
            if (errno == EAGAIN || errno == EWOULDBLOCK) throw network_error("receive timed out");
            throw network_error(errno_text("recv"));
        }
        if (n == 0) return std::nullopt;
        pending_.append(buf, static_cast<std::size_t>(n));
    }
}

std::string resolve_ipv4(const std::string& host) {
    if (is_ipv4_literal(host)) return host;
    if (host == "localhost") return "127.0.0.1";
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || !res)
        throw network_error("cannot resolve '" + host + "': " + gai_strerror(rc));
    char buf[INET_ADDRSTRLEN];
    auto* sin = reinterpret_cast<sockaddr_in*>(res->ai_addr);
    inet_ntop(AF_INET, &sin->sin_addr, buf, sizeof buf);
    ::freeaddrinfo(res);
    return buf;
}

Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout) {
    auto addr = make_addr(ep);
    Socket s{::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0)};
    if (!s.valid()) throw network_error(errno_text("socket"));
    int flags = ::fcntl(s.fd(), F_GETFL, 0);
    ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    if (rc < 0 && errno != EINPROGRESS) throw network_error(errno_text("connect to " + ep.to_string()));
    if (rc < 0) {
        pollfd p{s.fd(), POLLOUT, 0};
        int pr;
        do {
            pr = ::poll(&p, 1, static_cast<int>(timeout.count()));
        } while (pr < 0 && errno == EINTR);
        if (pr == 0) throw network_error("connect to " + ep.to_string() + " timed out");
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            errno = err;
            throw network_error(errno_text("connect to " + ep.to_string()));
        }
    }
    ::fcntl(s.fd(), F_SETFL, flags);
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
}

Socket listen_tcp(const Endpoint& ep, int backlog) {
    auto addr = make_addr(ep);
    Socket s{::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0)};
    if (!s.valid()) throw network_error(errno_text("socket"));
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
        throw network_error(errno_text("bind " + ep.to_string()));
    if (::listen(s.fd(), backlog) < 0) throw network_error(errno_text("listen " + ep.to_string()));
    return s;
}

Socket bind_udp(const Endpoint& ep) {
    auto addr = make_addr(ep);
    Socket s{::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0)};
    if (!s.valid()) throw network_error(errno_text("socket"));
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
        throw network_error(errno_text("bind udp " + ep.to_string()));
    return s;
}

std::uint16_t local_port(const Socket& s) {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    if (::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len) < 0)
        throw network_error(errno_text("getsockname"));
    return ntohs(addr.sin_port);
}

}  // namespace amigo::net
