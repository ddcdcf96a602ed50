#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "amigo/domain.hpp"

namespace amigo::test {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("amigo-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Instant at(const char* rfc3339) { return parse_rfc3339(rfc3339); }

inline MeasurementRecord record(std::string id, std::string network, Payload payload,
                                Instant ts = parse_rfc3339("2026-05-04T12:00:00Z"), std::string device = "dev-1") {
    MeasurementRecord r;
    r.record_id = std::move(id);
    r.device_id = std::move(device);
    r.network_id = std::move(network);
    r.experiment_kind = payload_kind(payload);
    r.timestamp = ts;
    r.payload = std::move(payload);
    return r;
}

inline SpeedtestResult speed(double down_mbps, double up_mbps = 5.0, double duration_s = 10.0) {
    SpeedtestResult s;
    s.duration_s = duration_s;
    s.bytes_down = static_cast<Bytes>(down_mbps * 1e6 / 8.0 * duration_s);
    s.bytes_up = static_cast<Bytes>(up_mbps * 1e6 / 8.0 * duration_s);
    s.down_mbps = static_cast<double>(s.bytes_down) * 8.0 / duration_s / 1e6;
    s.up_mbps = static_cast<double>(s.bytes_up) * 8.0 / duration_s / 1e6;
    return s;
}

inline LatencyResult latency(double final_rtt_ms, int hops = 3) {
    LatencyResult r;
    r.target = "t";
    for (int i = 1; i <= hops; ++i) {
        double rtt = final_rtt_ms * i / hops;
        r.hops.push_back({i, "10.0.0." + std::to_string(i), 3, 0, rtt, rtt, rtt});
    }
    r.hop_count = hops;
    r.final_avg_rtt_ms = r.hops.back().avg_rtt_ms;
    return r;
}

inline DnsResult dns(double ms, std::string resolver = "192.0.2.53", bool ok = true) {
    DnsResult d;
    d.domain = "example.sim";
    d.resolver_ip = resolver;
    d.resolver_class = classify_resolver(resolver);
    d.lookup_ms = ms;
    d.success = ok;
    return d;
}

inline CdnResult cdn(std::string name, double ms, CacheStatus edge, CacheStatus shield = CacheStatus::unknown) {
    CdnResult c;
    c.cdn_name = std::move(name);
    c.url = "http://cdn.sim/x.js";
    c.http_status = 200;
    c.total_ms = ms;
    c.bytes = 1000;
    c.edge_status = edge;
    c.shield_status = shield;
    return c;
}

inline NetworkRegistry registry_of(const std::vector<std::pair<std::string, Continent>>& nets) {
    NetworkRegistry r;
    for (const auto& [id, cont] : nets) r.add(id, {"op-" + id, "XX", cont});
    return r;
}

}  // namespace amigo::test
