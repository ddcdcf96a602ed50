#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "amigo/error.hpp"

namespace amigo::net {

/// host:port pair. Hosts may be names or IPv4 literals.
struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    std::string to_string() const { return host + ":" + std::to_string(port); }
    bool operator==(const Endpoint&) const = default;
};

/// Parses "host:port"; `default_port` applies when the port is omitted
/// (0 means a port is mandatory).
Endpoint parse_endpoint(std::string_view text, std::uint16_t default_port = 0);

/// Owning file descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { reset(); }

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void reset();
    /// shutdown(2) both directions; unblocks a thread stuck in accept/recv.
    void shutdown();
    /// Half-close: no more sends from this side.
    void shutdown_write();

    void set_recv_timeout(std::chrono::milliseconds t);
    void set_send_timeout(std::chrono::milliseconds t);

    /// Sends everything or throws network_error.
    void send_all(std::string_view data);
    /// Sends what the kernel accepts before the send timeout; 0 means the
    /// timeout expired with nothing written.
    std::size_t send_some(std::string_view data);
    /// Returns bytes received, 0 on orderly close; throws on timeout/error.
    std::size_t recv_some(char* buf, std::size_t len);
    /// Reads up to and excluding '\n' (a trailing '\r' is dropped). Returns
    /// nullopt if the peer closes before a newline arrives.
    std::optional<std::string> recv_line(std::size_t max_len = 4096);

private:
    int fd_ = -1;
    std::string pending_;  // bytes read past the last returned line
};

/// IPv4 address for a host name or literal; throws network_error.
std::string resolve_ipv4(const std::string& host);

Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout);

/// Bound, listening TCP socket. Port 0 picks an ephemeral port.
Socket listen_tcp(const Endpoint& ep, int backlog = 128);

/// Bound UDP socket.
Socket bind_udp(const Endpoint& ep);

/// Local port of a bound socket.
std::uint16_t local_port(const Socket& s);

bool is_ipv4_literal(std::string_view host);

}  // namespace amigo::net
