#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "amigo/domain.hpp"
#include "amigo/net.hpp"

namespace amigo::probes {

using namespace std::chrono_literals;

/// A probe result plus the bytes it moved, for data-ledger accounting.
template <typename T>
struct Measured {
    T result;
    Bytes bytes = 0;
};

// ---------------------------------------------------------------------------
// Latency and path (hop-reveal protocol).

/// Sends `HOP <target> <k>` for k = 1..max_hops, `probes_per_hop` times per
/// hop, each over a fresh connection to `hop_server`. Stops at the `END`
/// reply. A hop whose probes all fail ends the walk and leaves the result
/// incomplete.
Measured<LatencyResult> probe_latency(const net::Endpoint& hop_server, const std::string& target, int max_hops,
                                      int probes_per_hop, Millis timeout = 2000ms);

/// Hop report document: {target, probes_per_hop, complete, hubs: [{hop,
/// address, sent, lost, avg_ms, best_ms, worst_ms}]}.
std::string emit_hop_report(const LatencyResult& r, int probes_per_hop);

/// Throws parse_error naming the offending field. Hubs must be numbered
/// 1..n in order and non-empty.
LatencyResult parse_hop_report(std::string_view text);

// ---------------------------------------------------------------------------
// Throughput (line-prefixed TCP protocol: "DOWN <s>" / "UP <s>").

enum class Direction { down, up };

struct SpeedSample {
    Direction direction = Direction::down;
    Bytes bytes = 0;
    double duration_s = 0;  // requested
    double elapsed_s = 0;   // observed
    double mbps = 0;
    bool flagged = false;   // stalled or more than 10% short of the requested duration
};

/// bytes * 8 / duration / 1e6
double compute_throughput_mbps(Bytes bytes, double duration_s);

/// Throws network_error when the server cannot be reached.
SpeedSample probe_speed(const net::Endpoint& server, Direction direction, double duration_s);

/// Download then upload. Connection failures land in SpeedtestResult::error.
Measured<SpeedtestResult> run_speedtest(const net::Endpoint& server, double duration_s);

// ---------------------------------------------------------------------------
// DNS.

/// A-record lookup over UDP. Timeouts and malformed or negative answers give
/// success = false; a timeout reports lookup_ms = timeout.
Measured<DnsResult> probe_dns(const std::string& domain, const net::Endpoint& resolver, Millis timeout = 5000ms);

// ---------------------------------------------------------------------------
// HTTP: CDN fetch and web timing.

enum class HeaderSource { x_cache, cf_cache_status, none };

struct CacheHeaderParse {
    CacheStatus shield_status = CacheStatus::unknown;
    CacheStatus edge_status = CacheStatus::unknown;
    HeaderSource source_header = HeaderSource::none;
    bool operator==(const CacheHeaderParse&) const = default;
};

using HeaderList = std::vector<std::pair<std::string, std::string>>;

/// cf-cache-status wins over x-cache. A single x-cache token is the edge;
/// two tokens are (shield, edge). Tokens other than HIT/MISS are unknown.
CacheHeaderParse parse_cache_headers(const HeaderList& headers);
CacheHeaderParse parse_cache_headers(const std::map<std::string, std::string>& headers);

struct Url {
    std::string host;
    std::uint16_t port = 80;
    std::string path = "/";
};

/// http:// only.
Url parse_url(std::string_view url);

/// Phase offsets are cumulative from request start, like curl's
/// time_namelookup / time_connect / time_starttransfer / time_total.
struct HttpFetch {
    int status = 0;
    HeaderList headers;
    Bytes body_bytes = 0;
    Bytes wire_bytes = 0;
    double dns_ms = 0;
    double connect_ms = 0;
    double ttfb_ms = 0;
    double total_ms = 0;
    std::string failed_phase;  // empty on success
    std::string error;
};

/// Host names go to `resolver` when given, else to the system resolver.
HttpFetch http_get(std::string_view url, const std::optional<net::Endpoint>& resolver, Millis timeout = 10000ms);

Measured<CdnResult> probe_cdn(const std::string& cdn_name, const std::string& url,
                              const std::optional<net::Endpoint>& resolver = std::nullopt, Millis timeout = 10000ms);

Measured<WebResult> probe_web(const std::string& url, const std::optional<net::Endpoint>& resolver = std::nullopt,
                              Millis timeout = 10000ms);

// ---------------------------------------------------------------------------
// YouTube stats-for-nerds import.

struct YoutubeParse {
    YoutubeStatSeries series;
    std::size_t skipped_blocks = 0;  // blocks without a resolution
};

/// Blocks start with a timestamp line ("[<rfc3339>]" or "Timestamp: <rfc3339>").
/// Recognised labels, case-insensitive: "Current / Optimal Res", "Current Res",
/// "Resolution"; "Buffer Health"; "Dropped Frames" or "Viewport / Frames"
/// ("... / N dropped of M"). An empty log yields an empty series; a
/// non-empty log without a single timestamped block is a parse error.
YoutubeParse parse_youtube_stats(std::string_view log_text);

/// Bucket for a frame height: the largest standard height not above it.
Resolution resolution_for_height(int height);

}  // namespace amigo::probes

namespace amigo::probes {

/// Where and when a probe runs. Live probes ignore it; the simulated
/// network model keys its per-network behaviour on it.
struct ProbeContext {
    std::string network_id;
    Instant now{};
};

/// The probe suite an agent drives. LiveProbes goes over real sockets;
/// simnet::Model answers from the scenario without touching the network.
class ProbeSuite {
public:
    virtual ~ProbeSuite() = default;

    virtual Measured<SpeedtestResult> speedtest(const ProbeContext& ctx, const net::Endpoint& server,
                                                double duration_s) = 0;
    virtual Measured<LatencyResult> latency(const ProbeContext& ctx, const net::Endpoint& hop_server,
                                            const std::string& target, int max_hops, int probes_per_hop) = 0;
    virtual Measured<DnsResult> dns(const ProbeContext& ctx, const std::string& domain,
                                    const net::Endpoint& resolver) = 0;
    virtual Measured<CdnResult> cdn(const ProbeContext& ctx, const std::string& cdn_name, const std::string& url,
                                    const std::optional<net::Endpoint>& resolver) = 0;
    virtual Measured<WebResult> web(const ProbeContext& ctx, const std::string& url,
                                    const std::optional<net::Endpoint>& resolver) = 0;
};

class LiveProbes final : public ProbeSuite {
public:
    Measured<SpeedtestResult> speedtest(const ProbeContext&, const net::Endpoint& server, double duration_s) override {
        return run_speedtest(server, duration_s);
    }
    Measured<LatencyResult> latency(const ProbeContext&, const net::Endpoint& hop_server, const std::string& target,
                                    int max_hops, int probes_per_hop) override {
        return probe_latency(hop_server, target, max_hops, probes_per_hop);
    }
    Measured<DnsResult> dns(const ProbeContext&, const std::string& domain, const net::Endpoint& resolver) override {
        return probe_dns(domain, resolver);
    }
    Measured<CdnResult> cdn(const ProbeContext&, const std::string& cdn_name, const std::string& url,
                            const std::optional<net::Endpoint>& resolver) override {
        return probe_cdn(cdn_name, url, resolver);
    }
    Measured<WebResult> web(const ProbeContext&, const std::string& url,
                            const std::optional<net::Endpoint>& resolver) override {
        return probe_web(url, resolver);
    }
};

}  // namespace amigo::probes
