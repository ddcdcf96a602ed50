#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "amigo/domain.hpp"
#include "amigo/net.hpp"
#include "amigo/probes.hpp"

namespace amigo::simnet {

// ---------------------------------------------------------------------------
// Scenario

struct TargetPath {
    std::string name;
    std::vector<double> hop_cumulative_delays_ms;
    double jitter_ms = 0;
};

struct DnsConfig {
    double delay_ms = 0;
    std::map<std::string, std::string> records;  // domain -> IPv4
    std::vector<std::string> fail_domains;       // answered with SERVFAIL
};

struct ThroughputConfig {
    double down_cap_mbps = 30;
    double up_cap_mbps = 10;
};

enum class CacheMode { always_hit, always_miss, hit_ratio };
enum class HeaderStyle { cf, x_cache_single, x_cache_dual };

struct CachePolicy {
    CacheMode mode = CacheMode::always_hit;
    double hit_ratio = 1.0;  // used by CacheMode::hit_ratio
    HeaderStyle header_style = HeaderStyle::cf;
};

struct Asset {
    std::string path;
    Bytes bytes = 0;
    double think_time_ms = 0;
    CachePolicy cache_policy;
};

struct Scenario {
    std::uint64_t seed = 0;
    std::vector<TargetPath> targets;
    DnsConfig dns;
    ThroughputConfig throughput;
    std::vector<Asset> assets;

    const TargetPath* find_target(const std::string& name) const;
    const Asset* find_asset(const std::string& path) const;
};

/// One invariant evaluated by validate_scenario.
struct Check {
    std::string name;
    bool ok = true;
    std::string detail;
};

/// Every invariant with its outcome, in a stable order.
std::vector<Check> validate_scenario(const Scenario& s);

/// Decodes the JSON scenario document. Structural problems are parse errors.
Scenario parse_scenario(const Json& doc);
Json scenario_to_json(const Scenario& s);

/// Reads, decodes and validates; the first failed check becomes a
/// validation_error naming it.
Scenario load_scenario(const std::filesystem::path& path);

/// Scenario used by the demo and as the shipped sample.
Scenario default_scenario();

// ---------------------------------------------------------------------------
// Keyed randomness

/// Counter-based PRNG: a stateless hash of (seed, stream, index), so draws
/// do not depend on request order or on other streams.
std::uint64_t keyed_hash(std::uint64_t seed, std::string_view stream, std::uint64_t index, std::uint64_t lane = 0);

/// Uniform in [0, 1).
double keyed_uniform(std::uint64_t seed, std::string_view stream, std::uint64_t index, std::uint64_t lane = 0);

struct CacheDecision {
    CacheStatus shield = CacheStatus::unknown;
    CacheStatus edge = CacheStatus::unknown;
    probes::HeaderList headers;
};

CacheDecision cache_decision(const Asset& asset, std::uint64_t request_index, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Bandwidth shaping

/// Continuous-refill token bucket holding at most 100 ms worth of bytes, so
/// any window of w seconds serves at most rate * (w + 0.1) bytes. Time is
/// passed in explicitly.
class TokenBucket {
public:
    TokenBucket(double bytes_per_s, double start_s, double burst_s = 0.1);

    /// Whole bytes that may be sent at time `now_s`.
    std::size_t available(double now_s);
    void consume(std::size_t n);
    /// Seconds until `n` bytes are available (0 if already).
    double wait_for(std::size_t n) const;

    double rate() const { return rate_; }

private:
    double rate_;
    double capacity_;
    double tokens_;
    double last_s_;
};

// ---------------------------------------------------------------------------
// Live harness

struct BindAddrs {
    std::string host = "127.0.0.1";
    std::uint16_t hop_port = 0;  // 0 picks an ephemeral port
    std::uint16_t throughput_port = 0;
    std::uint16_t dns_port = 0;
    std::uint16_t http_port = 0;
};

struct Endpoints {
    net::Endpoint hop;
    net::Endpoint throughput;
    net::Endpoint dns;
    net::Endpoint http;
};

struct AssetTally {
    std::uint64_t requests = 0;
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
};

struct MetricsSnapshot {
    std::uint64_t hop_requests = 0;
    std::uint64_t hop_bytes = 0;
    std::uint64_t throughput_requests = 0;
    std::uint64_t throughput_bytes_down = 0;
    std::uint64_t throughput_bytes_up = 0;
    std::uint64_t dns_requests = 0;
    std::uint64_t dns_bytes = 0;
    std::uint64_t http_requests = 0;
    std::uint64_t http_body_bytes = 0;
    std::map<std::string, AssetTally> assets;

    Json to_json() const;
};

class Harness {
public:
    virtual ~Harness() = default;
    virtual const Endpoints& endpoints() const = 0;
    virtual MetricsSnapshot metrics() const = 0;
    /// Stops every service and joins its threads. Idempotent.
    virtual void shutdown() = 0;
};

/// Starts hop-reveal, throughput, DNS and HTTP services. Throws
/// network_error when a port cannot be bound.
std::unique_ptr<Harness> serve(const Scenario& scenario, const BindAddrs& addrs = {});

// ---------------------------------------------------------------------------
// In-process model

/// Deterministic stand-in for the live services, used on a simulated clock
/// where probes must not take wall time. Every value is a keyed draw over
/// (scenario seed, device key, network, per-instance counter), so two runs
/// with the same inputs agree bit for bit.
///
/// Each network gets a fixed profile from its id: a latency multiplier, a
/// throughput share of the scenario cap, a DNS multiplier and a slowdown for
/// Google DNS.
class Model final : public probes::ProbeSuite {
public:
    Model(Scenario scenario, std::string device_key);

    struct NetworkProfile {
        double latency_scale = 1;
        double throughput_share = 1;
        double dns_scale = 1;
        double google_dns_scale = 1;
    };
    NetworkProfile profile(const std::string& network_id) const;

    probes::Measured<SpeedtestResult> speedtest(const probes::ProbeContext& ctx, const net::Endpoint& server,
                                                double duration_s) override;
    probes::Measured<LatencyResult> latency(const probes::ProbeContext& ctx, const net::Endpoint& hop_server,
                                            const std::string& target, int max_hops, int probes_per_hop) override;
    probes::Measured<DnsResult> dns(const probes::ProbeContext& ctx, const std::string& domain,
                                    const net::Endpoint& resolver) override;
    probes::Measured<CdnResult> cdn(const probes::ProbeContext& ctx, const std::string& cdn_name,
                                    const std::string& url, const std::optional<net::Endpoint>& resolver) override;
    probes::Measured<WebResult> web(const probes::ProbeContext& ctx, const std::string& url,
                                    const std::optional<net::Endpoint>& resolver) override;

private:
    double draw(std::string_view stream, std::uint64_t lane = 0);
    double base_rtt_ms(const std::string& network_id) const;

    Scenario scenario_;
    std::string device_key_;
    std::uint64_t counter_ = 0;
    std::map<std::string, std::uint64_t> asset_requests_;
};

}  // namespace amigo::simnet
