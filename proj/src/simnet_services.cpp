#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>

#include <queue>
#include <sstream>

#include "httplib.h"

#include "amigo/dns_codec.hpp"
#include "amigo/simnet.hpp"
#include "tcp_service.hpp"

namespace amigo::simnet {

namespace {

using SteadyClock = std::chrono::steady_clock;

double seconds_since(SteadyClock::time_point t0) {
    return std::chrono::duration<double>(SteadyClock::now() - t0).count();
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

struct Counters {
    std::atomic<std::uint64_t> hop_requests{0}, hop_bytes{0};
    std::atomic<std::uint64_t> tp_requests{0}, tp_down{0}, tp_up{0};
    std::atomic<std::uint64_t> dns_requests{0}, dns_bytes{0};
    std::atomic<std::uint64_t> http_requests{0}, http_body{0};
    std::mutex assets_mu;
    std::map<std::string, AssetTally> assets;
};

class LiveHarness final : public Harness {
public:
    LiveHarness(const Scenario& scenario, const BindAddrs& addrs) : scenario_(scenario) {
        for (const auto& a : scenario_.assets) {
            counters_.assets[a.path];
            asset_index_[a.path] = std::make_unique<std::atomic<std::uint64_t>>(0);
        }
        for (const auto& t : scenario_.targets) target_index_[t.name] = std::make_unique<std::atomic<std::uint64_t>>(0);

        hop_ = std::make_unique<detail::TcpService>(
            net::Endpoint{addrs.host, addrs.hop_port}, [this](net::Socket& s) { handle_hop(s); }, stopper_);
        throughput_ = std::make_unique<detail::TcpService>(
            net::Endpoint{addrs.host, addrs.throughput_port}, [this](net::Socket& s) { handle_throughput(s); },
            stopper_);
        dns_socket_ = net::bind_udp({addrs.host, addrs.dns_port});
        setup_http();
        http_port_ = addrs.http_port == 0 ? http_.bind_to_any_port(addrs.host)
                                          : (http_.bind_to_port(addrs.host, addrs.http_port) ? addrs.http_port : -1);
        if (http_port_ <= 0) throw network_error("simnet: cannot bind HTTP service on " + addrs.host);

        endpoints_.hop = {addrs.host, hop_->port()};
        endpoints_.throughput = {addrs.host, throughput_->port()};
        endpoints_.dns = {addrs.host, net::local_port(dns_socket_)};
        endpoints_.http = {addrs.host, static_cast<std::uint16_t>(http_port_)};

        hop_->start();
        throughput_->start();
        dns_rx_ = std::thread([this] { dns_receive_loop(); });
        dns_tx_ = std::thread([this] { dns_send_loop(); });
        http_thread_ = std::thread([this] { http_.listen_after_bind(); });
        http_.wait_until_ready();
    }

    ~LiveHarness() override { shutdown(); }

    const Endpoints& endpoints() const override { return endpoints_; }

    MetricsSnapshot metrics() const override {
        MetricsSnapshot m;
        m.hop_requests = counters_.hop_requests;
        m.hop_bytes = counters_.hop_bytes;
        m.throughput_requests = counters_.tp_requests;
        m.throughput_bytes_down = counters_.tp_down;
        m.throughput_bytes_up = counters_.tp_up;
        m.dns_requests = counters_.dns_requests;
        m.dns_bytes = counters_.dns_bytes;
        m.http_requests = counters_.http_requests;
        m.http_body_bytes = counters_.http_body;
        std::lock_guard lock(counters_.assets_mu);
        m.assets = counters_.assets;
        return m;
    }

    void shutdown() override {
        if (shut_.exchange(true)) return;
        stopper_.stop();
        {
            std::lock_guard lock(dns_mu_);
            dns_cv_.notify_all();
        }
        http_.stop();
        if (http_thread_.joinable()) http_thread_.join();
        hop_->stop();
        throughput_->stop();
        if (dns_rx_.joinable()) dns_rx_.join();
        if (dns_tx_.joinable()) dns_tx_.join();
        dns_socket_.reset();
    }

private:
    // Hop-reveal: "HOP <target> <k>" -> "HOP <k> <addr>" | "END <k> <addr>".
    void handle_hop(net::Socket& sock) {
        sock.set_recv_timeout(std::chrono::milliseconds(5000));
        auto line = sock.recv_line();
        if (!line) return;
        ++counters_.hop_requests;
        counters_.hop_bytes += line->size() + 1;
        auto toks = split_ws(*line);
        if (toks.size() != 3 || toks[0] != "HOP") return;
        const auto* target = scenario_.find_target(toks[1]);
        if (!target) return;  // unreachable: close without a reply
        int k = 0;
        try {
            k = std::stoi(toks[2]);
        } catch (const std::exception&) {
            return;
        }
        int n = static_cast<int>(target->hop_cumulative_delays_ms.size());
        if (k < 1 || k > n) return;
        auto idx = (*target_index_.at(target->name))++;
        double jitter = target->jitter_ms * keyed_uniform(scenario_.seed, target->name + "/hop" + std::to_string(k), idx);
        if (!stopper_.sleep_for(std::chrono::duration<double, std::milli>(
                target->hop_cumulative_delays_ms[static_cast<std::size_t>(k - 1)] + jitter)))
            return;
        std::size_t tindex = static_cast<std::size_t>(target - scenario_.targets.data());
        std::string reply = std::string(k == n ? "END " : "HOP ") + std::to_string(k) + " 10." +
                            std::to_string(tindex + 1) + "." + std::to_string(k) + ".1\n";
        sock.send_all(reply);
        counters_.hop_bytes += reply.size();
    }

    // Throughput: "DOWN <s>" streams for s seconds then closes; "UP <s>"
    // reads for s seconds then answers "OK <bytes>".
    void handle_throughput(net::Socket& sock) {
        sock.set_recv_timeout(std::chrono::milliseconds(5000));
        auto line = sock.recv_line();
        if (!line) return;
        auto toks = split_ws(*line);
        if (toks.size() != 2 || (toks[0] != "DOWN" && toks[0] != "UP")) return;
        double duration = 0;
        try {
            duration = std::stod(toks[1]);
        } catch (const std::exception&) {
            return;
        }
        if (!(duration > 0) || duration > 600) return;
        ++counters_.tp_requests;
        auto t0 = SteadyClock::now();
        bool down = toks[0] == "DOWN";
        double rate = (down ? scenario_.throughput.down_cap_mbps : scenario_.throughput.up_cap_mbps) * 1e6 / 8.0;
        TokenBucket bucket(rate, 0.0);
        std::vector<char> buf(16 * 1024, 'x');
        if (down) {
            sock.set_send_timeout(std::chrono::milliseconds(50));
            while (!stopper_.stopped()) {
                double now = seconds_since(t0);
                if (now >= duration) break;
                auto avail = bucket.available(now);
                if (avail == 0) {
                    stopper_.sleep_for(std::chrono::duration<double>(std::max(bucket.wait_for(buf.size() / 4), 0.001)));
                    continue;
                }
                auto n = sock.send_some({buf.data(), std::min(avail, buf.size())});
                bucket.consume(n);
                counters_.tp_down += n;
            }
            return;
        }
        std::uint64_t received = 0;
        sock.set_recv_timeout(std::chrono::milliseconds(50));
        while (!stopper_.stopped()) {
            double now = seconds_since(t0);
            if (now >= duration) break;
            auto avail = bucket.available(now);
            if (avail == 0) {
                stopper_.sleep_for(std::chrono::duration<double>(std::max(bucket.wait_for(buf.size() / 4), 0.001)));
                continue;
            }
            std::size_t n = 0;
            try {
                n = sock.recv_some(buf.data(), std::min(avail, buf.size()));
            } catch (const Error&) {
                continue;  // receive timeout: nothing arrived in this slice
            }
            if (n == 0) break;
            bucket.consume(n);
            received += n;
        }
        counters_.tp_up += received;
        sock.send_all("OK " + std::to_string(received) + "\n");
        // Drain until the client closes so the reply is not lost to a reset.
        sock.set_recv_timeout(std::chrono::milliseconds(200));
        auto drain_until = SteadyClock::now() + std::chrono::seconds(3);
        try {
            while (SteadyClock::now() < drain_until && !stopper_.stopped())
                if (sock.recv_some(buf.data(), buf.size()) == 0) break;
        } catch (const Error&) {
        }
    }

    struct PendingReply {
        SteadyClock::time_point due;
        std::string wire;
        sockaddr_in to;
        bool operator>(const PendingReply& o) const { return due > o.due; }
    };

    void dns_receive_loop() {
        char buf[1500];
        while (!stopper_.stopped()) {
            pollfd p{dns_socket_.fd(), POLLIN, 0};
            if (::poll(&p, 1, 50) <= 0) continue;
            sockaddr_in from{};
            socklen_t len = sizeof from;
            ssize_t n = ::recvfrom(dns_socket_.fd(), buf, sizeof buf, 0, reinterpret_cast<sockaddr*>(&from), &len);
            if (n <= 0) continue;
            ++counters_.dns_requests;
            counters_.dns_bytes += static_cast<std::uint64_t>(n);
            dns::Response resp;
            try {
                auto q = dns::decode_query({buf, static_cast<std::size_t>(n)});
                resp.id = q.id;
                resp.name = q.name;
                const auto& fails = scenario_.dns.fail_domains;
                if (std::find(fails.begin(), fails.end(), q.name) != fails.end()) {
                    resp.rcode = dns::Rcode::server_failure;
                } else if (auto it = scenario_.dns.records.find(q.name); it != scenario_.dns.records.end() &&
                                                                          q.qtype == dns::kTypeA) {
                    resp.answers.push_back(it->second);
                } else {
                    resp.rcode = dns::Rcode::nx_domain;
                }
            } catch (const Error&) {
                continue;  // not a query we understand: drop it
            }
            PendingReply reply{SteadyClock::now() + std::chrono::duration_cast<SteadyClock::duration>(
                                                         std::chrono::duration<double, std::milli>(scenario_.dns.delay_ms)),
                               dns::encode_response(resp), from};
            std::lock_guard lock(dns_mu_);
            dns_queue_.push(std::move(reply));
            dns_cv_.notify_one();
        }
    }

    void dns_send_loop() {
        std::unique_lock lock(dns_mu_);
        while (!stopper_.stopped()) {
            if (dns_queue_.empty()) {
                dns_cv_.wait_for(lock, std::chrono::milliseconds(50));
                continue;
            }
            auto due = dns_queue_.top().due;
            if (SteadyClock::now() < due) {
                dns_cv_.wait_until(lock, due);
                continue;
            }
            auto reply = dns_queue_.top();
            dns_queue_.pop();
            lock.unlock();
            ::sendto(dns_socket_.fd(), reply.wire.data(), reply.wire.size(), 0,
                     reinterpret_cast<const sockaddr*>(&reply.to), sizeof reply.to);
            counters_.dns_bytes += reply.wire.size();
            lock.lock();
        }
    }

    void setup_http() {
        http_.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(metrics().to_json().dump(), "application/json");
        });
        http_.Get(".*", [this](const httplib::Request& req, httplib::Response& res) {
            ++counters_.http_requests;
            const auto* asset = scenario_.find_asset(req.path);
            if (!asset) {
                res.status = 404;
                res.set_content("not found", "text/plain");
                return;
            }
            auto idx = (*asset_index_.at(asset->path))++;
            auto decision = cache_decision(*asset, idx, scenario_.seed);
            // An edge miss pays an origin fetch of twice the think time, a
            // shield miss one more.
            double wait_ms = asset->think_time_ms;
            if (decision.edge == CacheStatus::miss) wait_ms += 2 * asset->think_time_ms;
            if (decision.shield == CacheStatus::miss) wait_ms += asset->think_time_ms;
            if (!stopper_.sleep_for(std::chrono::duration<double, std::milli>(wait_ms))) {
                res.status = 503;
                return;
            }
            for (const auto& [k, v] : decision.headers) res.set_header(k, v);
            std::string body(asset->bytes, '\0');
            for (std::size_t i = 0; i < body.size(); ++i) body[i] = static_cast<char>('a' + (i % 26));
            res.set_content(std::move(body), "application/javascript");
            counters_.http_body += asset->bytes;
            std::lock_guard lock(counters_.assets_mu);
            auto& t = counters_.assets[asset->path];
            ++t.requests;
            if (decision.edge == CacheStatus::hit) ++t.hits;
            else ++t.misses;
        });
    }

    Scenario scenario_;
    detail::Stopper stopper_;
    mutable Counters counters_;
    std::map<std::string, std::unique_ptr<std::atomic<std::uint64_t>>> asset_index_;
    std::map<std::string, std::unique_ptr<std::atomic<std::uint64_t>>> target_index_;

    std::unique_ptr<detail::TcpService> hop_;
    std::unique_ptr<detail::TcpService> throughput_;

    net::Socket dns_socket_;
    std::thread dns_rx_, dns_tx_;
    std::mutex dns_mu_;
    std::condition_variable dns_cv_;
    std::priority_queue<PendingReply, std::vector<PendingReply>, std::greater<>> dns_queue_;

    httplib::Server http_;
    int http_port_ = 0;
    std::thread http_thread_;

    Endpoints endpoints_;
    std::atomic<bool> shut_{false};
};

}  // namespace

std::unique_ptr<Harness> serve(const Scenario& scenario, const BindAddrs& addrs) {
    for (const auto& c : validate_scenario(scenario))
        if (!c.ok) throw validation_error("scenario check failed: " + c.name);
    return std::make_unique<LiveHarness>(scenario, addrs);
}

}  // namespace amigo::simnet
