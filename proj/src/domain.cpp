#include "amigo/domain.hpp"

#include <arpa/inet.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace amigo {

int resolution_height(Resolution r) {
    static constexpr std::array<int, 6> heights{144, 240, 360, 480, 720, 1080};
    return heights[static_cast<std::size_t>(r)];
}

namespace {

void require_non_negative(double v, const char* what) {
    if (std::isnan(v) || v < 0) throw validation_error(std::string(what) + " must be a non-negative number");
}

}  // namespace

SpeedClass classify_speed(double mbps) {
    require_non_negative(mbps, "speed");
    if (mbps <= kThresholds.speed_slow_max_mbps) return SpeedClass::slow;
    if (mbps < kThresholds.speed_fast_min_mbps) return SpeedClass::average;
    return SpeedClass::fast;
}

LatencyClass classify_latency(double rtt_ms) {
    require_non_negative(rtt_ms, "rtt");
    if (rtt_ms <= kThresholds.latency_exceptional_max_ms) return LatencyClass::exceptional;
    if (rtt_ms >= kThresholds.latency_good_min_ms && rtt_ms <= kThresholds.latency_good_max_ms)
        return LatencyClass::good_to_average;
    if (rtt_ms >= kThresholds.latency_less_desirable_min_ms) return LatencyClass::less_desirable;
    return LatencyClass::unclassified;
}

SpeedIndexClass classify_speed_index(double seconds) {
    require_non_negative(seconds, "speed index");
    if (seconds <= kThresholds.speed_index_fast_max_s) return SpeedIndexClass::fast;
    if (seconds < kThresholds.speed_index_slow_min_s) return SpeedIndexClass::moderate;
    return SpeedIndexClass::slow;
}

bool is_valid_ipv4(std::string_view text) {
    if (text.empty() || text.size() > 15) return false;
    std::string s(text);
    in_addr addr{};
    return inet_pton(AF_INET, s.c_str(), &addr) == 1;
}

ResolverClass classify_resolver(std::string_view ipv4) {
    if (!is_valid_ipv4(ipv4)) throw validation_error("malformed IPv4 address '" + std::string(ipv4) + "'");
    for (auto google : kThresholds.google_dns)
        if (ipv4 == google) return ResolverClass::google_dns;
    return ResolverClass::operator_local;
}

Json thresholds_json() {
    const auto& t = kThresholds;
    return Json{
        {"speed_mbps", {{"slow_max", t.speed_slow_max_mbps}, {"fast_min", t.speed_fast_min_mbps}}},
        {"latency_ms",
         {{"exceptional_max", t.latency_exceptional_max_ms},
          {"good_to_average_min", t.latency_good_min_ms},
          {"good_to_average_max", t.latency_good_max_ms},
          {"less_desirable_min", t.latency_less_desirable_min_ms}}},
        {"speed_index_s", {{"fast_max", t.speed_index_fast_max_s}, {"slow_min", t.speed_index_slow_min_s}}},
        {"battery_floor_pct", t.battery_floor_pct},
        {"daily_data_cap_bytes", t.daily_data_cap},
        {"stale_after_s", 15 * 60},
        {"google_dns", {std::string(t.google_dns[0]), std::string(t.google_dns[1])}},
    };
}

// ---------------------------------------------------------------------------

void validate(const DeviceStatus& s) {
    if (s.device_id.empty()) throw validation_error("status.device_id must be non-empty");
    if (s.battery_pct && (*s.battery_pct < 0 || *s.battery_pct > 100))
        throw validation_error("status.battery_pct out of range [0, 100]: " + std::to_string(*s.battery_pct));
    if (s.gps) {
        if (!(s.gps->lat >= -90 && s.gps->lat <= 90)) throw validation_error("status.gps.lat out of range");
        if (!(s.gps->lon >= -180 && s.gps->lon <= 180)) throw validation_error("status.gps.lon out of range");
    }
}

void NetworkRegistry::add(const std::string& network_id, NetworkInfo info) {
    if (network_id.empty()) throw validation_error("registry: empty network_id");
    if (!entries_.emplace(network_id, std::move(info)).second)
        throw validation_error("registry: duplicate network_id '" + network_id + "'");
}

const NetworkInfo* NetworkRegistry::find(const std::string& network_id) const {
    auto it = entries_.find(network_id);
    return it == entries_.end() ? nullptr : &it->second;
}

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

NetworkRegistry NetworkRegistry::parse_csv(std::string_view text) {
    NetworkRegistry reg;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cols = split_csv_line(line);
        if (!header_seen) {
            header_seen = true;
            if (!cols.empty() && cols[0] == "network_id") continue;
        }
        if (cols.size() != 4)
            throw parse_error("registry line " + std::to_string(lineno) + ": expected 4 columns, got " +
                              std::to_string(cols.size()));
        Continent continent;
        try {
            continent = enum_from_string<Continent>(cols[3]);
        } catch (const Error& e) {
            throw parse_error("registry line " + std::to_string(lineno) + ": " + e.what());
        }
        reg.add(cols[0], NetworkInfo{cols[1], cols[2], continent});
    }
    return reg;
}

NetworkRegistry NetworkRegistry::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read registry file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

std::string NetworkRegistry::to_csv() const {
    std::string out = "network_id,operator,country,continent\n";
    for (const auto& [id, info] : entries_) {
        out += csv_field(id) + "," + csv_field(info.operator_name) + "," + csv_field(info.country) + "," +
               std::string(to_string(info.continent)) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string_view kind_name(const InstructionKind& kind) {
    static constexpr std::array<std::string_view, 5> names{"pause", "resume", "run_now", "open_tunnel",
                                                           "update_config"};
    return names[kind.index()];
}

void validate(const InstructionKind& kind) {
    std::visit(
        [](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, PauseKind>) {
                if (k.duration.count() <= 0) throw validation_error("pause duration must be positive");
            } else if constexpr (std::is_same_v<K, RunNowKind>) {
                if (k.experiment_id.empty()) throw validation_error("run_now requires an experiment_id");
            } else if constexpr (std::is_same_v<K, OpenTunnelKind>) {
                if (k.host.empty()) throw validation_error("open_tunnel requires a host");
                if (k.port < 1 || k.port > 65535) throw validation_error("open_tunnel port out of range");
            } else if constexpr (std::is_same_v<K, UpdateConfigKind>) {
                if (k.key.empty()) throw validation_error("update_config requires a key");
            }
        },
        kind);
}

void validate(const Instruction& instr) {
    if (instr.device_id.empty()) throw validation_error("instruction.device_id must be non-empty");
    validate(instr.kind);
    bool terminal = instr.state == InstructionState::acked || instr.state == InstructionState::failed;
    if (terminal != instr.outcome.has_value())
        throw validation_error("instruction outcome must be present exactly when the state is terminal");
}

bool is_legal_transition(InstructionState from, InstructionState to) {
    using S = InstructionState;
    return (from == S::pending && to == S::delivered) ||
           (from == S::delivered && (to == S::acked || to == S::failed));
}

void validate(const ScheduleRule& rule) {
    if (rule.interval.count() <= 0) throw validation_error("schedule interval must be positive");
    if (rule.battery_floor_pct < 0 || rule.battery_floor_pct > 100)
        throw validation_error("schedule battery_floor_pct out of range [0, 100]");
}

std::vector<std::string> ExperimentSpec::targets() const {
    std::vector<std::string> out;
    if (auto it = params.find("targets"); it != params.end() && it->is_array())
        for (const auto& t : *it)
            if (t.is_string()) out.push_back(t.get<std::string>());
    return out;
}

std::string ExperimentSpec::param_string(const std::string& key, const std::string& fallback) const {
    if (auto it = params.find(key); it != params.end()) {
        if (it->is_string()) return it->get<std::string>();
        return it->dump();
    }
    return fallback;
}

double ExperimentSpec::param_number(const std::string& key, double fallback) const {
    if (auto it = params.find(key); it != params.end()) {
        if (it->is_number()) return it->get<double>();
        if (it->is_string()) {
            try {
                return std::stod(it->get<std::string>());
            } catch (const std::exception&) {
                throw validation_error("experiment param '" + key + "' is not numeric");
            }
        }
    }
    return fallback;
}

void validate(const ExperimentSpec& spec) {
    if (spec.id.empty()) throw validation_error("experiment id must be non-empty");
    if (spec.kind == ExperimentKind::youtube)
        throw validation_error("experiment '" + spec.id + "': youtube results are imported, not scheduled");
    if (!spec.params.is_object()) throw validation_error("experiment '" + spec.id + "': params must be an object");
    if (spec.kind != ExperimentKind::speedtest && spec.targets().empty())
        throw validation_error("experiment '" + spec.id + "': at least one target required");
    validate(spec.schedule);
}

// ---------------------------------------------------------------------------

ExperimentKind payload_kind(const Payload& p) {
    static constexpr std::array<ExperimentKind, 6> kinds{ExperimentKind::speedtest, ExperimentKind::latency,
                                                         ExperimentKind::dns,       ExperimentKind::cdn,
                                                         ExperimentKind::web,       ExperimentKind::youtube};
    return kinds[p.index()];
}

namespace {

void check(bool ok, const std::string& what) {
    if (!ok) throw validation_error(what);
}

void validate_payload(const SpeedtestResult& r) {
    check(r.down_mbps >= 0 && r.up_mbps >= 0 && r.duration_s >= 0, "speedtest fields must be non-negative");
    if (r.duration_s > 0 && r.error.empty()) {
        auto consistent = [&](double mbps, Bytes bytes) {
            double expect = static_cast<double>(bytes) * 8.0 / r.duration_s / 1e6;
            return std::abs(mbps - expect) <= 0.01 * std::max(expect, 1e-9) + 1e-9;
        };
        check(consistent(r.down_mbps, r.bytes_down), "speedtest down_mbps inconsistent with bytes/duration");
        check(consistent(r.up_mbps, r.bytes_up), "speedtest up_mbps inconsistent with bytes/duration");
    }
}

void validate_payload(const LatencyResult& r) {
    check(r.hop_count == static_cast<int>(r.hops.size()), "latency hop_count must equal number of hops");
    for (std::size_t i = 0; i < r.hops.size(); ++i) {
        const auto& h = r.hops[i];
        check(h.hop_index == static_cast<int>(i) + 1, "latency hops must be numbered 1..n in order");
        check(h.sent >= 0 && h.lost >= 0 && h.lost <= h.sent, "hop lost must not exceed sent");
        check(h.avg_rtt_ms >= 0, "hop avg rtt must be non-negative");
        if (h.sent > h.lost)
            check(h.best_rtt_ms <= h.avg_rtt_ms && h.avg_rtt_ms <= h.worst_rtt_ms, "hop rtt must satisfy best<=avg<=worst");
    }
    double last = r.hops.empty() ? 0.0 : r.hops.back().avg_rtt_ms;
    check(std::abs(r.final_avg_rtt_ms - last) < 1e-9, "final_avg_rtt_ms must equal last hop avg rtt");
}

void validate_payload(const DnsResult& r) {
    check(r.lookup_ms >= 0, "dns lookup_ms must be non-negative");
    check(classify_resolver(r.resolver_ip) == r.resolver_class, "dns resolver_class inconsistent with resolver_ip");
}

void validate_payload(const CdnResult& r) { check(r.total_ms >= 0, "cdn total_ms must be non-negative"); }

void validate_payload(const WebResult& r) {
    check(r.dns_ms >= 0 && r.connect_ms >= 0 && r.ttfb_ms >= 0 && r.total_ms >= 0, "web timings must be non-negative");
    if (r.failed_phase.empty()) {
        check(r.dns_ms <= r.total_ms, "web dns_ms must not exceed total_ms");
        check(r.ttfb_ms <= r.total_ms, "web ttfb_ms must not exceed total_ms");
    }
    if (r.speed_index_s) check(*r.speed_index_s >= 0, "speed_index_s must be non-negative");
}

void validate_payload(const YoutubeStatSeries& r) {
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        check(r.samples[i].buffer_health_s >= 0, "youtube buffer_health_s must be non-negative");
        if (i > 0) check(r.samples[i - 1].timestamp <= r.samples[i].timestamp, "youtube timestamps must be non-decreasing");
    }
}

}  // namespace

void validate(const MeasurementRecord& rec) {
    check(!rec.record_id.empty(), "record_id must be non-empty");
    check(!rec.device_id.empty(), "record device_id must be non-empty");
    check(payload_kind(rec.payload) == rec.experiment_kind, "payload does not match experiment_kind " +
                                                                 std::string(to_string(rec.experiment_kind)));
    std::visit([](const auto& p) { validate_payload(p); }, rec.payload);
}

Bytes payload_bytes(const Payload& p) {
    return std::visit(
        [](const auto& r) -> Bytes {
            using R = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<R, SpeedtestResult>) return r.bytes_down + r.bytes_up;
            else if constexpr (std::is_same_v<R, CdnResult> || std::is_same_v<R, WebResult>) return r.bytes;
            else return 0;
        },
        p);
}

// ---------------------------------------------------------------------------

IdGenerator::IdGenerator() {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd()};
    rng_.seed(seq);
}

std::string IdGenerator::next() {
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng_()),
                  static_cast<unsigned long long>(rng_()));
    return buf;
}

// ---------------------------------------------------------------------------
// JSON


namespace {

template <typename T>
void field(const Json& j, const char* name, T& out) {
    auto it = j.find(name);
    if (it == j.end()) throw parse_error(std::string("missing field '") + name + "'");
    try {
        out = it->template get<T>();
    } catch (const Error& e) {
        throw parse_error(std::string("field '") + name + "': " + e.what());
    } catch (const std::exception& e) {
        throw parse_error(std::string("field '") + name + "': " + e.what());
    }
}

template <typename T>
void optional_field(const Json& j, const char* name, T& out) {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) return;
    field(j, name, out);
}

template <typename T>
void optional_field(const Json& j, const char* name, std::optional<T>& out) {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) {
        out.reset();
        return;
    }
    T v{};
    field(j, name, v);
    out = std::move(v);
}

void require_object(const Json& j, const char* what) {
    if (!j.is_object()) throw parse_error(std::string(what) + " must be a JSON object");
}

}  // namespace

void to_json(Json& j, const GeoPoint& v) { j = Json{{"lat", v.lat}, {"lon", v.lon}}; }
void from_json(const Json& j, GeoPoint& v) {
    require_object(j, "gps");
    field(j, "lat", v.lat);
    field(j, "lon", v.lon);
}

void to_json(Json& j, const DeviceStatus& v) {
    j = Json{{"device_id", v.device_id},
             {"timestamp", v.timestamp},
             {"battery_pct", v.battery_pct ? Json(*v.battery_pct) : Json(nullptr)},
             {"connectivity", v.connectivity},
             {"operator_name", v.operator_name},
             {"network_id", v.network_id},
             {"gps", v.gps ? Json(*v.gps) : Json(nullptr)},
             {"data_used_today", v.data_used_today},
             {"agent_version", v.agent_version}};
}
void from_json(const Json& j, DeviceStatus& v) {
    require_object(j, "DeviceStatus");
    field(j, "device_id", v.device_id);
    field(j, "timestamp", v.timestamp);
    optional_field(j, "battery_pct", v.battery_pct);
    field(j, "connectivity", v.connectivity);
    optional_field(j, "operator_name", v.operator_name);
    optional_field(j, "network_id", v.network_id);
    optional_field(j, "gps", v.gps);
    field(j, "data_used_today", v.data_used_today);
    optional_field(j, "agent_version", v.agent_version);
}

void to_json(Json& j, const NetworkInfo& v) {
    j = Json{{"operator_name", v.operator_name}, {"country", v.country}, {"continent", v.continent}};
}
void from_json(const Json& j, NetworkInfo& v) {
    require_object(j, "NetworkInfo");
    field(j, "operator_name", v.operator_name);
    field(j, "country", v.country);
    field(j, "continent", v.continent);
}

void to_json(Json& j, const InstructionKind& v) {
    j = Json{{"type", std::string(kind_name(v))}};
    std::visit(
        [&j](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, PauseKind>) {
                j["duration_s"] = to_seconds(k.duration);
            } else if constexpr (std::is_same_v<K, RunNowKind>) {
                j["experiment_id"] = k.experiment_id;
            } else if constexpr (std::is_same_v<K, OpenTunnelKind>) {
                j["host"] = k.host;
                j["port"] = k.port;
            } else if constexpr (std::is_same_v<K, UpdateConfigKind>) {
                j["key"] = k.key;
                j["value"] = k.value;
            }
        },
        v);
}
void from_json(const Json& j, InstructionKind& v) {
    require_object(j, "instruction kind");
    std::string type;
    field(j, "type", type);
    if (type == "pause") {
        double secs = 0;
        field(j, "duration_s", secs);
        v = PauseKind{Millis{static_cast<std::int64_t>(std::llround(secs * 1000.0))}};
    } else if (type == "resume") {
        v = ResumeKind{};
    } else if (type == "run_now") {
        RunNowKind k;
        field(j, "experiment_id", k.experiment_id);
        v = k;
    } else if (type == "open_tunnel") {
        OpenTunnelKind k;
        field(j, "host", k.host);
        field(j, "port", k.port);
        v = k;
    } else if (type == "update_config") {
        UpdateConfigKind k;
        field(j, "key", k.key);
        if (auto it = j.find("value"); it != j.end() && !it->is_string()) k.value = it->dump();
        else field(j, "value", k.value);
        v = k;
    } else {
        throw parse_error("unknown instruction kind '" + type + "'");
    }
}

void to_json(Json& j, const Instruction& v) {
    j = Json{{"id", v.id},
             {"device_id", v.device_id},
             {"created_at", v.created_at},
             {"kind", v.kind},
             {"state", v.state},
             {"outcome", v.outcome ? Json(*v.outcome) : Json(nullptr)}};
}
void from_json(const Json& j, Instruction& v) {
    require_object(j, "Instruction");
    optional_field(j, "id", v.id);
    field(j, "device_id", v.device_id);
    optional_field(j, "created_at", v.created_at);
    field(j, "kind", v.kind);
    optional_field(j, "state", v.state);
    optional_field(j, "outcome", v.outcome);
}

void to_json(Json& j, const ScheduleRule& v) {
    j = Json{{"interval_s", to_seconds(v.interval)},
             {"connectivity_required", v.connectivity_required},
             {"battery_floor_pct", v.battery_floor_pct},
             {"daily_data_cap", v.daily_data_cap}};
}
void from_json(const Json& j, ScheduleRule& v) {
    require_object(j, "ScheduleRule");
    v = ScheduleRule{};
    if (auto it = j.find("interval_s"); it != j.end()) {
        double secs = 0;
        field(j, "interval_s", secs);
        v.interval = Millis{static_cast<std::int64_t>(std::llround(secs * 1000.0))};
    }
    optional_field(j, "connectivity_required", v.connectivity_required);
    optional_field(j, "battery_floor_pct", v.battery_floor_pct);
    optional_field(j, "daily_data_cap", v.daily_data_cap);
}

void to_json(Json& j, const ExperimentSpec& v) {
    j = Json{{"id", v.id}, {"kind", v.kind}, {"params", v.params}, {"schedule", v.schedule}};
}
void from_json(const Json& j, ExperimentSpec& v) {
    require_object(j, "ExperimentSpec");
    field(j, "id", v.id);
    field(j, "kind", v.kind);
    v.params = j.value("params", Json::object());
    v.schedule = ScheduleRule{};
    optional_field(j, "schedule", v.schedule);
}

void to_json(Json& j, const SpeedtestResult& v) {
    j = Json{{"down_mbps", v.down_mbps}, {"up_mbps", v.up_mbps},   {"bytes_down", v.bytes_down},
             {"bytes_up", v.bytes_up},   {"duration_s", v.duration_s}, {"flagged", v.flagged}};
    if (!v.error.empty()) j["error"] = v.error;
}
void from_json(const Json& j, SpeedtestResult& v) {
    require_object(j, "SpeedtestResult");
    field(j, "down_mbps", v.down_mbps);
    field(j, "up_mbps", v.up_mbps);
    field(j, "bytes_down", v.bytes_down);
    field(j, "bytes_up", v.bytes_up);
    field(j, "duration_s", v.duration_s);
    optional_field(j, "flagged", v.flagged);
    optional_field(j, "error", v.error);
}

void to_json(Json& j, const HopStat& v) {
    j = Json{{"hop_index", v.hop_index},   {"address", v.address},         {"sent", v.sent},
             {"lost", v.lost},             {"avg_rtt_ms", v.avg_rtt_ms},   {"best_rtt_ms", v.best_rtt_ms},
             {"worst_rtt_ms", v.worst_rtt_ms}};
}
void from_json(const Json& j, HopStat& v) {
    require_object(j, "HopStat");
    field(j, "hop_index", v.hop_index);
    field(j, "address", v.address);
    field(j, "sent", v.sent);
    field(j, "lost", v.lost);
    field(j, "avg_rtt_ms", v.avg_rtt_ms);
    field(j, "best_rtt_ms", v.best_rtt_ms);
    field(j, "worst_rtt_ms", v.worst_rtt_ms);
}

void to_json(Json& j, const LatencyResult& v) {
    j = Json{{"target", v.target},
             {"hops", v.hops},
             {"hop_count", v.hop_count},
             {"final_avg_rtt_ms", v.final_avg_rtt_ms},
             {"complete", v.complete}};
}
void from_json(const Json& j, LatencyResult& v) {
    require_object(j, "LatencyResult");
    field(j, "target", v.target);
    field(j, "hops", v.hops);
    field(j, "hop_count", v.hop_count);
    field(j, "final_avg_rtt_ms", v.final_avg_rtt_ms);
    optional_field(j, "complete", v.complete);
}

void to_json(Json& j, const DnsResult& v) {
    j = Json{{"domain", v.domain},         {"resolver_ip", v.resolver_ip}, {"resolver_class", v.resolver_class},
             {"lookup_ms", v.lookup_ms},   {"success", v.success}};
    if (!v.answer.empty()) j["answer"] = v.answer;
    if (!v.error.empty()) j["error"] = v.error;
}
void from_json(const Json& j, DnsResult& v) {
    require_object(j, "DnsResult");
    field(j, "domain", v.domain);
    field(j, "resolver_ip", v.resolver_ip);
    field(j, "resolver_class", v.resolver_class);
    field(j, "lookup_ms", v.lookup_ms);
    field(j, "success", v.success);
    optional_field(j, "answer", v.answer);
    optional_field(j, "error", v.error);
}

void to_json(Json& j, const CdnResult& v) {
    j = Json{{"cdn_name", v.cdn_name}, {"url", v.url},     {"http_status", v.http_status},
             {"total_ms", v.total_ms}, {"bytes", v.bytes}, {"shield_status", v.shield_status},
             {"edge_status", v.edge_status}};
    if (!v.error.empty()) j["error"] = v.error;
}
void from_json(const Json& j, CdnResult& v) {
    require_object(j, "CdnResult");
    field(j, "cdn_name", v.cdn_name);
    field(j, "url", v.url);
    field(j, "http_status", v.http_status);
    field(j, "total_ms", v.total_ms);
    field(j, "bytes", v.bytes);
    field(j, "shield_status", v.shield_status);
    field(j, "edge_status", v.edge_status);
    optional_field(j, "error", v.error);
}

void to_json(Json& j, const WebResult& v) {
    j = Json{{"url", v.url},         {"dns_ms", v.dns_ms},     {"connect_ms", v.connect_ms},
             {"ttfb_ms", v.ttfb_ms}, {"total_ms", v.total_ms}, {"bytes", v.bytes},
             {"http_status", v.http_status},
             {"speed_index_s", v.speed_index_s ? Json(*v.speed_index_s) : Json(nullptr)}};
    if (!v.failed_phase.empty()) j["failed_phase"] = v.failed_phase;
}
void from_json(const Json& j, WebResult& v) {
    require_object(j, "WebResult");
    field(j, "url", v.url);
    field(j, "dns_ms", v.dns_ms);
    field(j, "connect_ms", v.connect_ms);
    field(j, "ttfb_ms", v.ttfb_ms);
    field(j, "total_ms", v.total_ms);
    field(j, "bytes", v.bytes);
    optional_field(j, "http_status", v.http_status);
    optional_field(j, "speed_index_s", v.speed_index_s);
    optional_field(j, "failed_phase", v.failed_phase);
}

void to_json(Json& j, const YoutubeSample& v) {
    j = Json{{"timestamp", v.timestamp},
             {"resolution", v.resolution},
             {"buffer_health_s", v.buffer_health_s},
             {"dropped_frames", v.dropped_frames}};
}
void from_json(const Json& j, YoutubeSample& v) {
    require_object(j, "YoutubeSample");
    field(j, "timestamp", v.timestamp);
    field(j, "resolution", v.resolution);
    field(j, "buffer_health_s", v.buffer_health_s);
    field(j, "dropped_frames", v.dropped_frames);
}

void to_json(Json& j, const YoutubeStatSeries& v) { j = Json{{"samples", v.samples}}; }
void from_json(const Json& j, YoutubeStatSeries& v) {
    require_object(j, "YoutubeStatSeries");
    field(j, "samples", v.samples);
}

void to_json(Json& j, const MeasurementRecord& v) {
    j = Json{{"record_id", v.record_id},
             {"device_id", v.device_id},
             {"network_id", v.network_id},
             {"experiment_kind", v.experiment_kind},
             {"timestamp", v.timestamp}};
    std::visit([&j](const auto& p) { j["payload"] = p; }, v.payload);
}
void from_json(const Json& j, MeasurementRecord& v) {
    require_object(j, "MeasurementRecord");
    field(j, "record_id", v.record_id);
    field(j, "device_id", v.device_id);
    optional_field(j, "network_id", v.network_id);
    field(j, "experiment_kind", v.experiment_kind);
    field(j, "timestamp", v.timestamp);
    auto it = j.find("payload");
    if (it == j.end()) throw parse_error("missing field 'payload'");
    try {
        switch (v.experiment_kind) {
            case ExperimentKind::speedtest: v.payload = it->get<SpeedtestResult>(); break;
            case ExperimentKind::latency: v.payload = it->get<LatencyResult>(); break;
            case ExperimentKind::dns: v.payload = it->get<DnsResult>(); break;
            case ExperimentKind::cdn: v.payload = it->get<CdnResult>(); break;
            case ExperimentKind::web: v.payload = it->get<WebResult>(); break;
            case ExperimentKind::youtube: v.payload = it->get<YoutubeStatSeries>(); break;
        }
    } catch (const std::exception& e) {
        throw parse_error("payload does not match experiment_kind " + std::string(to_string(v.experiment_kind)) +
                          ": " + e.what());
    }
}

}  // namespace amigo
