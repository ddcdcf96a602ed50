#pragma once

#include <poll.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <thread>

#include "amigo/net.hpp"

namespace amigo::detail {

/// Shared stop flag with interruptible sleeps.
class Stopper {
public:
    /// False when woken by stop().
    bool sleep_for(std::chrono::duration<double, std::milli> d) {
        std::unique_lock lock(mu_);
        return !cv_.wait_for(lock, d, [this] { return stopped_; });
    }
    void stop() {
        {
            std::lock_guard lock(mu_);
            stopped_ = true;
        }
        cv_.notify_all();
    }
    bool stopped() const {
        std::lock_guard lock(mu_);
        return stopped_;
    }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    bool stopped_ = false;
};

/// Thread-per-connection TCP acceptor.
class TcpService {
public:
    using Handler = std::function<void(net::Socket&)>;

    TcpService(const net::Endpoint& bind, Handler handler, Stopper& stopper)
        : listener_(net::listen_tcp(bind)), handler_(std::move(handler)), stopper_(stopper) {}

    ~TcpService() { stop(); }

    std::uint16_t port() const { return net::local_port(listener_); }

    void start() { acceptor_ = std::thread([this] { accept_loop(); }); }

    void stop() {
        if (stopped_.exchange(true)) return;
        if (acceptor_.joinable()) acceptor_.join();
        std::list<std::unique_ptr<Conn>> conns;
        {
            std::lock_guard lock(mu_);
            for (auto& c : conns_) c->sock.shutdown();
            conns.swap(conns_);
        }
        for (auto& c : conns)
            if (c->thread.joinable()) c->thread.join();
        listener_.reset();
    }

private:
    struct Conn {
        net::Socket sock;
        std::thread thread;
        std::atomic<bool> done{false};
    };

    void accept_loop() {
        while (!stopper_.stopped() && !stopped_) {
            pollfd p{listener_.fd(), POLLIN, 0};
            int rc = ::poll(&p, 1, 50);
            if (rc <= 0) continue;
            int fd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
            if (fd < 0) continue;
            auto conn = std::make_unique<Conn>();
            conn->sock = net::Socket{fd};
            Conn* raw = conn.get();
            std::lock_guard lock(mu_);
            reap_locked();
            conns_.push_back(std::move(conn));
            raw->thread = std::thread([this, raw] {
                try {
                    handler_(raw->sock);
                } catch (const std::exception&) {
                    // A broken client connection never takes the service down.
                }
                std::lock_guard lock(mu_);
                raw->sock.reset();
                raw->done = true;
            });
        }
    }

    void reap_locked() {
        for (auto it = conns_.begin(); it != conns_.end();) {
            if ((*it)->done) {
                (*it)->thread.join();
                it = conns_.erase(it);
            } else {
                ++it;
            }
        }
    }

    net::Socket listener_;
    Handler handler_;
    Stopper& stopper_;
    std::thread acceptor_;
    std::atomic<bool> stopped_{false};
    std::mutex mu_;
    std::list<std::unique_ptr<Conn>> conns_;
};

}  // namespace amigo::detail
