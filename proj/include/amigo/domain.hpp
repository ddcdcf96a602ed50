#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "amigo/error.hpp"
#include "amigo/time.hpp"

namespace amigo {

using Json = nlohmann::json;
using Bytes = std::uint64_t;

inline constexpr Bytes kGiB = Bytes{1} << 30;

// ---------------------------------------------------------------------------
// Enumerations. Wire names are lower-snake and match the enumerator names.

enum class Connectivity { wifi, mobile, both, none };
enum class Continent { europe, australia, asia, central_south_america, africa, other };
enum class ExperimentKind { speedtest, latency, dns, cdn, web, youtube };
enum class ConnectivityRequirement { mobile_only, any };
enum class InstructionState { pending, delivered, acked, failed };
enum class Resolution { r144, r240, r360, r480, r720, r1080 };

// Classification enums are declared in increasing order of the measured
// quantity, so std::to_underlying gives the monotone ordering.
enum class SpeedClass { slow, average, fast };
enum class LatencyClass { exceptional, good_to_average, less_desirable, unclassified };
enum class SpeedIndexClass { fast, moderate, slow };
enum class CacheStatus { hit, miss, unknown };
enum class ResolverClass { google_dns, operator_local };

template <typename E>
struct EnumTraits;

#define AMIGO_ENUM_NAMES(Type, ...)                                         \
    template <>                                                             \
    struct EnumTraits<Type> {                                               \
        static constexpr auto names = std::to_array<std::string_view>({__VA_ARGS__}); \
        static constexpr std::string_view type_name = #Type;                \
    }

AMIGO_ENUM_NAMES(Connectivity, "wifi", "mobile", "both", "none");
AMIGO_ENUM_NAMES(Continent, "europe", "australia", "asia", "central_south_america", "africa", "other");
AMIGO_ENUM_NAMES(ExperimentKind, "speedtest", "latency", "dns", "cdn", "web", "youtube");
AMIGO_ENUM_NAMES(ConnectivityRequirement, "mobile_only", "any");
AMIGO_ENUM_NAMES(InstructionState, "pending", "delivered", "acked", "failed");
AMIGO_ENUM_NAMES(Resolution, "r144", "r240", "r360", "r480", "r720", "r1080");
AMIGO_ENUM_NAMES(SpeedClass, "slow", "average", "fast");
AMIGO_ENUM_NAMES(LatencyClass, "exceptional", "good_to_average", "less_desirable", "unclassified");
AMIGO_ENUM_NAMES(SpeedIndexClass, "fast", "moderate", "slow");
AMIGO_ENUM_NAMES(CacheStatus, "hit", "miss", "unknown");
AMIGO_ENUM_NAMES(ResolverClass, "google_dns", "operator_local");

#undef AMIGO_ENUM_NAMES

template <typename E>
constexpr std::string_view to_string(E value) {
    return EnumTraits<E>::names[static_cast<std::size_t>(value)];
}

template <typename E>
E enum_from_string(std::string_view text) {
    const auto& names = EnumTraits<E>::names;
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == text) return static_cast<E>(i);
    throw parse_error("unknown " + std::string(EnumTraits<E>::type_name) + " value '" + std::string(text) + "'");
}

template <typename E>
constexpr std::size_t enum_count() {
    return EnumTraits<E>::names.size();
}

template <typename E>
constexpr std::array<E, EnumTraits<E>::names.size()> enum_values() {
    std::array<E, EnumTraits<E>::names.size()> out{};
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<E>(i);
    return out;
}

/// Pixel height of a resolution bucket, e.g. r720 -> 720.
int resolution_height(Resolution r);

// ---------------------------------------------------------------------------
// Classifiers. Thresholds are inclusive at the marked endpoints.

SpeedClass classify_speed(double mbps);
LatencyClass classify_latency(double rtt_ms);
SpeedIndexClass classify_speed_index(double seconds);
ResolverClass classify_resolver(std::string_view ipv4);

bool is_valid_ipv4(std::string_view text);

struct Thresholds {
    double speed_slow_max_mbps = 15.0;
    double speed_fast_min_mbps = 30.0;
    double latency_exceptional_max_ms = 20.0;
    double latency_good_min_ms = 50.0;
    double latency_good_max_ms = 100.0;
    double latency_less_desirable_min_ms = 150.0;
    double speed_index_fast_max_s = 3.4;
    double speed_index_slow_min_s = 5.8;
    int battery_floor_pct = 15;
    Bytes daily_data_cap = 4 * kGiB;
    std::array<std::string_view, 2> google_dns = {"8.8.8.8", "8.8.4.4"};
};

inline constexpr Thresholds kThresholds{};

Json thresholds_json();

// ---------------------------------------------------------------------------
// Device status and network registry.

struct GeoPoint {
    double lat = 0;
    double lon = 0;
    bool operator==(const GeoPoint&) const = default;
};

struct DeviceStatus {
    std::string device_id;
    Instant timestamp{};
    std::optional<int> battery_pct;  // absent when the battery sensor failed
    Connectivity connectivity = Connectivity::none;
    std::string operator_name;
    std::string network_id;
    std::optional<GeoPoint> gps;
    Bytes data_used_today = 0;
    std::string agent_version;
    bool operator==(const DeviceStatus&) const = default;
};

void validate(const DeviceStatus& s);

struct NetworkInfo {
    std::string operator_name;
    std::string country;
    Continent continent = Continent::other;
    bool operator==(const NetworkInfo&) const = default;
};

class NetworkRegistry {
public:
    void add(const std::string& network_id, NetworkInfo info);
    const NetworkInfo* find(const std::string& network_id) const;
    const std::map<std::string, NetworkInfo>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }

    /// CSV with header row "network_id,operator,country,continent".
    static NetworkRegistry parse_csv(std::string_view text);
    static NetworkRegistry load_csv(const std::string& path);
    std::string to_csv() const;

private:
    std::map<std::string, NetworkInfo> entries_;
};

// ---------------------------------------------------------------------------
// Instructions.

struct PauseKind {
    Millis duration{};
    bool operator==(const PauseKind&) const = default;
};
struct ResumeKind {
    bool operator==(const ResumeKind&) const = default;
};
struct RunNowKind {
    std::string experiment_id;
    bool operator==(const RunNowKind&) const = default;
};
struct OpenTunnelKind {
    std::string host;
    int port = 0;
    bool operator==(const OpenTunnelKind&) const = default;
};
struct UpdateConfigKind {
    std::string key;
    std::string value;
    bool operator==(const UpdateConfigKind&) const = default;
};

using InstructionKind = std::variant<PauseKind, ResumeKind, RunNowKind, OpenTunnelKind, UpdateConfigKind>;

std::string_view kind_name(const InstructionKind& kind);

struct Instruction {
    std::string id;
    std::string device_id;
    Instant created_at{};
    InstructionKind kind;
    InstructionState state = InstructionState::pending;
    std::optional<std::string> outcome;
    bool operator==(const Instruction&) const = default;
};

void validate(const InstructionKind& kind);
void validate(const Instruction& instr);

/// Legal lifecycle edges: pending -> delivered -> {acked, failed}.
bool is_legal_transition(InstructionState from, InstructionState to);

// ---------------------------------------------------------------------------
// Experiments.

struct ScheduleRule {
    Millis interval = std::chrono::minutes{30};
    ConnectivityRequirement connectivity_required = ConnectivityRequirement::mobile_only;
    int battery_floor_pct = kThresholds.battery_floor_pct;
    Bytes daily_data_cap = kThresholds.daily_data_cap;
    bool operator==(const ScheduleRule&) const = default;
};

void validate(const ScheduleRule& rule);

struct ExperimentSpec {
    std::string id;
    ExperimentKind kind = ExperimentKind::dns;
    Json params = Json::object();  // "targets": [...] plus kind-specific options
    ScheduleRule schedule;
    bool operator==(const ExperimentSpec&) const = default;

    std::vector<std::string> targets() const;
    std::string param_string(const std::string& key, const std::string& fallback = {}) const;
    double param_number(const std::string& key, double fallback) const;
};

void validate(const ExperimentSpec& spec);

// ---------------------------------------------------------------------------
// Measurement payloads.

struct SpeedtestResult {
    double down_mbps = 0;
    double up_mbps = 0;
    Bytes bytes_down = 0;
    Bytes bytes_up = 0;
    double duration_s = 0;
    bool flagged = false;  // a direction stalled or ran more than 10% short
    std::string error;
    bool operator==(const SpeedtestResult&) const = default;
};

struct HopStat {
    int hop_index = 1;
    std::string address;
    int sent = 0;
    int lost = 0;
    double avg_rtt_ms = 0;
    double best_rtt_ms = 0;
    double worst_rtt_ms = 0;
    bool operator==(const HopStat&) const = default;
};

struct LatencyResult {
    std::string target;
    std::vector<HopStat> hops;
    int hop_count = 0;
    double final_avg_rtt_ms = 0;
    bool complete = true;  // false when the terminal hop was never reached
    bool operator==(const LatencyResult&) const = default;
};

struct DnsResult {
    std::string domain;
    std::string resolver_ip;
    ResolverClass resolver_class = ResolverClass::operator_local;
    double lookup_ms = 0;
    bool success = false;
    std::string answer;  // first A record, empty on failure
    std::string error;
    bool operator==(const DnsResult&) const = default;
};

struct CdnResult {
    std::string cdn_name;
    std::string url;
    int http_status = 0;
    double total_ms = 0;
    Bytes bytes = 0;
    CacheStatus shield_status = CacheStatus::unknown;
    CacheStatus edge_status = CacheStatus::unknown;
    std::string error;
    bool operator==(const CdnResult&) const = default;
};

struct WebResult {
    std::string url;
    double dns_ms = 0;
    double connect_ms = 0;
    double ttfb_ms = 0;
    double total_ms = 0;
    Bytes bytes = 0;
    int http_status = 0;
    std::optional<double> speed_index_s;  // imported, never measured
    std::string failed_phase;             // "dns", "connect", "ttfb", "body" or empty
    bool operator==(const WebResult&) const = default;
};

struct YoutubeSample {
    Instant timestamp{};
    Resolution resolution = Resolution::r144;
    double buffer_health_s = 0;
    int dropped_frames = 0;
    bool operator==(const YoutubeSample&) const = default;
};

struct YoutubeStatSeries {
    std::vector<YoutubeSample> samples;
    bool operator==(const YoutubeStatSeries&) const = default;
};

using Payload = std::variant<SpeedtestResult, LatencyResult, DnsResult, CdnResult, WebResult, YoutubeStatSeries>;

/// Experiment kind implied by the payload alternative.
ExperimentKind payload_kind(const Payload& p);

struct MeasurementRecord {
    std::string record_id;
    std::string device_id;
    std::string network_id;
    ExperimentKind experiment_kind = ExperimentKind::dns;
    Instant timestamp{};
    Payload payload;
    bool operator==(const MeasurementRecord&) const = default;
};

void validate(const MeasurementRecord& rec);

/// Bytes a record's measurement moved over the network, for data accounting.
Bytes payload_bytes(const Payload& p);

// ---------------------------------------------------------------------------
// Identifiers.

/// 128-bit identifiers rendered as 32 lowercase hex characters. Seeded
/// generators give reproducible sequences for simulation.
class IdGenerator {
public:
    IdGenerator();
    explicit IdGenerator(std::uint64_t seed) : rng_(seed) {}
    std::string next();

private:
    std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// JSON codec (nlohmann ADL hooks).


template <typename E>
    requires std::is_enum_v<E> && requires { EnumTraits<E>::names; }
void to_json(Json& j, E e) {
    j = std::string(to_string(e));
}

template <typename E>
    requires std::is_enum_v<E> && requires { EnumTraits<E>::names; }
void from_json(const Json& j, E& e) {
    if (!j.is_string()) throw parse_error("expected string for " + std::string(EnumTraits<E>::type_name));
    e = enum_from_string<E>(j.get<std::string>());
}

#define AMIGO_DECLARE_JSON(T)       \
    void to_json(Json& j, const T& v); \
    void from_json(const Json& j, T& v)

AMIGO_DECLARE_JSON(GeoPoint);
AMIGO_DECLARE_JSON(DeviceStatus);
AMIGO_DECLARE_JSON(NetworkInfo);
AMIGO_DECLARE_JSON(InstructionKind);
AMIGO_DECLARE_JSON(Instruction);
AMIGO_DECLARE_JSON(ScheduleRule);
AMIGO_DECLARE_JSON(ExperimentSpec);
AMIGO_DECLARE_JSON(SpeedtestResult);
AMIGO_DECLARE_JSON(HopStat);
AMIGO_DECLARE_JSON(LatencyResult);
AMIGO_DECLARE_JSON(DnsResult);
AMIGO_DECLARE_JSON(CdnResult);
AMIGO_DECLARE_JSON(WebResult);
AMIGO_DECLARE_JSON(YoutubeSample);
AMIGO_DECLARE_JSON(YoutubeStatSeries);
AMIGO_DECLARE_JSON(MeasurementRecord);

#undef AMIGO_DECLARE_JSON

/// Decodes a JSON value, converting library exceptions into parse errors
/// that name the failing type.
template <typename T>
T decode(const Json& j, std::string_view what) {
    try {
        return j.get<T>();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw parse_error(std::string(what) + ": " + e.what());
    }
}

}  // namespace amigo

// Instant is a std::chrono type, so ADL cannot find hooks in namespace amigo.
template <>
struct nlohmann::adl_serializer<amigo::Instant> {
    static void to_json(amigo::Json& j, amigo::Instant t) { j = amigo::format_rfc3339(t); }
    static void from_json(const amigo::Json& j, amigo::Instant& t) {
        if (!j.is_string()) throw amigo::parse_error("timestamp must be an RFC 3339 string");
        t = amigo::parse_rfc3339(j.get<std::string>());
    }
};
