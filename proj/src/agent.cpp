#include "amigo/agent.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

namespace amigo::agent {

namespace {

Json read_json_file(const std::filesystem::path& path, std::string_view what) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read " + std::string(what) + " " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw parse_error(path.string() + ": " + e.what());
    }
}

void write_atomically(const std::filesystem::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot write " + tmp.string());
        out << text;
        out.flush();
        if (!out) throw io_error("write to " + tmp.string() + " failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw io_error("cannot replace " + path.string() + ": " + ec.message());
}

std::string day_string(Instant t) { return format_rfc3339(t).substr(0, 10); }

std::optional<Instant> optional_instant(const Json& j, const char* key) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) return it->get<Instant>();
    return std::nullopt;
}

Json instant_or_null(const std::optional<Instant>& t) { return t ? Json(*t) : Json(nullptr); }

std::vector<net::Endpoint> resolvers_of(const ExperimentSpec& spec) {
    std::vector<net::Endpoint> out;
    if (auto it = spec.params.find("resolvers"); it != spec.params.end() && it->is_array())
        for (const auto& r : *it) out.push_back(net::parse_endpoint(r.get<std::string>(), 53));
    if (auto it = spec.params.find("resolver"); it != spec.params.end() && it->is_string())
        out.push_back(net::parse_endpoint(it->get<std::string>(), 53));
    return out;
}

std::optional<net::Endpoint> optional_resolver(const ExperimentSpec& spec) {
    auto r = resolvers_of(spec);
    if (r.empty()) return std::nullopt;
    return r.front();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration.

void validate(const AgentConfig& c) {
    if (c.device_id.empty()) throw validation_error("agent config: device_id must be non-empty");
    if (c.report_interval <= Millis::zero()) throw validation_error("agent config: report_interval must be positive");
    if (c.nightly_reset_hour < 0 || c.nightly_reset_hour > 23)
        throw validation_error("agent config: nightly_reset_hour must be in 0..23");
    validate(c.default_schedule);
    std::set<std::string> ids;
    for (const auto& e : c.experiments) {
        validate(e);
        if (!ids.insert(e.id).second) throw validation_error("agent config: duplicate experiment id '" + e.id + "'");
        auto need_server = [&] {
            if (e.param_string("server").empty())
                throw validation_error("experiment '" + e.id + "': params.server required");
            net::parse_endpoint(e.param_string("server"));
        };
        switch (e.kind) {
            case ExperimentKind::speedtest:
            case ExperimentKind::latency: need_server(); break;
            case ExperimentKind::dns:
                if (resolvers_of(e).empty())
                    throw validation_error("experiment '" + e.id + "': params.resolver or params.resolvers required");
                for (const auto& r : resolvers_of(e))
                    if (!is_valid_ipv4(r.host))
                        throw validation_error("experiment '" + e.id + "': resolver must be an IPv4 address");
                break;
            default: break;
        }
    }
}

AgentConfig parse_agent_config(const Json& doc) {
    if (!doc.is_object()) throw parse_error("agent config must be a JSON object");
    static const std::set<std::string> known{"device_id",   "server_url",         "report_interval_s", "schedule",
                                             "experiments", "spool_dir",          "nightly_reset_hour",
                                             "agent_version", "id_seed"};
    for (const auto& [k, v] : doc.items())
        if (!known.count(k)) throw validation_error("agent config: unknown key '" + k + "'");
    AgentConfig c;
    try {
        c.device_id = doc.value("device_id", std::string{});
        c.server_url = doc.value("server_url", c.server_url);
        if (doc.contains("report_interval_s"))
            c.report_interval = Millis{std::llround(doc.at("report_interval_s").get<double>() * 1000.0)};
        if (doc.contains("schedule")) c.default_schedule = decode<ScheduleRule>(doc.at("schedule"), "schedule");
        for (const auto& e : doc.value("experiments", Json::array())) {
            auto spec = decode<ExperimentSpec>(e, "experiment");
            if (!e.contains("schedule")) spec.schedule = c.default_schedule;
            c.experiments.push_back(std::move(spec));
        }
        c.spool_dir = doc.value("spool_dir", c.spool_dir.string());
        c.nightly_reset_hour = doc.value("nightly_reset_hour", c.nightly_reset_hour);
        c.agent_version = doc.value("agent_version", c.agent_version);
        if (doc.contains("id_seed")) c.id_seed = doc.at("id_seed").get<std::uint64_t>();
    } catch (const Json::exception& e) {
        throw parse_error(std::string("agent config: ") + e.what());
    }
    validate(c);
    return c;
}

AgentConfig load_agent_config(const std::filesystem::path& path) {
    return parse_agent_config(read_json_file(path, "agent config"));
}

Json agent_config_to_json(const AgentConfig& c) {
    Json j{{"device_id", c.device_id},
           {"server_url", c.server_url},
           {"report_interval_s", to_seconds(c.report_interval)},
           {"schedule", c.default_schedule},
           {"experiments", c.experiments},
           {"spool_dir", c.spool_dir.string()},
           {"nightly_reset_hour", c.nightly_reset_hour},
           {"agent_version", c.agent_version}};
    if (c.id_seed) j["id_seed"] = *c.id_seed;
    return j;
}

Json state_to_json(const AgentState& s) {
    Json last = Json::object();
    for (const auto& [id, t] : s.last_run) last[id] = t;
    return Json{{"paused_until", instant_or_null(s.paused_until)},
                {"last_run", last},
                {"ledger", {{"utc_day", s.ledger.utc_day}, {"used", s.ledger.used}}},
                {"forced", s.forced}};
}

AgentState state_from_json(const Json& j) {
    AgentState s;
    try {
        s.paused_until = optional_instant(j, "paused_until");
        const Json last = j.value("last_run", Json::object());
        for (const auto& [id, t] : last.items()) s.last_run[id] = t.get<Instant>();
        const auto& ledger = j.at("ledger");
        s.ledger.utc_day = ledger.at("utc_day").get<std::int64_t>();
        s.ledger.used = ledger.at("used").get<Bytes>();
        s.forced = j.value("forced", std::set<std::string>{});
    } catch (const Json::exception& e) {
        throw parse_error(std::string("agent state: ") + e.what());
    }
    return s;
}

// ---------------------------------------------------------------------------
// Sensors.

ScriptedSensors::ScriptedSensors(std::vector<Point> points) : points_(std::move(points)) {
    if (points_.empty()) throw validation_error("sensor timeline needs at least one point");
    for (std::size_t i = 1; i < points_.size(); ++i)
        if (points_[i].at < points_[i - 1].at)
            throw validation_error("sensor timeline points must be in time order (point " + std::to_string(i) + ")");
}

ScriptedSensors ScriptedSensors::parse(const Json& doc) {
    if (!doc.is_object() || !doc.contains("points") || !doc.at("points").is_array())
        throw parse_error("sensor timeline must be an object with a 'points' array");
    std::optional<Instant> start = optional_instant(doc, "start");
    std::vector<Point> points;
    SensorReading carry;
    try {
        for (const auto& p : doc.at("points")) {
            Point pt;
            if (p.contains("at")) {
                pt.at = p.at("at").get<Instant>();
            } else if (p.contains("offset_s")) {
                if (!start) throw parse_error("sensor timeline: offset_s needs a 'start' instant");
                pt.at = *start + Millis{std::llround(p.at("offset_s").get<double>() * 1000.0)};
            } else {
                throw parse_error("sensor timeline: every point needs 'at' or 'offset_s'");
            }
            if (auto it = p.find("battery_pct"); it != p.end())
                carry.battery_pct = it->is_null() ? std::nullopt : std::optional<int>(it->get<int>());
            if (auto it = p.find("connectivity"); it != p.end())
                carry.connectivity =
                    it->is_null() ? std::nullopt : std::optional<Connectivity>(it->get<Connectivity>());
            if (auto it = p.find("operator_name"); it != p.end()) carry.operator_name = it->get<std::string>();
            if (auto it = p.find("network_id"); it != p.end()) carry.network_id = it->get<std::string>();
            if (auto it = p.find("gps"); it != p.end())
                carry.gps = it->is_null() ? std::nullopt : std::optional<GeoPoint>(it->get<GeoPoint>());
            pt.reading = carry;
            points.push_back(std::move(pt));
        }
    } catch (const Json::exception& e) {
        throw parse_error(std::string("sensor timeline: ") + e.what());
    }
    return ScriptedSensors(std::move(points));
}

ScriptedSensors ScriptedSensors::load(const std::filesystem::path& path) {
    return parse(read_json_file(path, "sensor timeline"));
}

SensorReading ScriptedSensors::read(Instant now) {
    auto it = std::upper_bound(points_.begin(), points_.end(), now,
                               [](Instant t, const Point& p) { return t < p.at; });
    if (it == points_.begin()) return points_.front().reading;
    return std::prev(it)->reading;
}

HostSensors::HostSensors(std::filesystem::path sys_root) : sys_root_(std::move(sys_root)) {}

namespace {

std::optional<std::string> read_line(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::string s;
    if (!in || !std::getline(in, s)) return std::nullopt;
    return s;
}

std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? v : "";
}

}  // namespace

SensorReading HostSensors::read(Instant) {
    SensorReading r;
    std::error_code ec;
    for (const auto& e : std::filesystem::directory_iterator(sys_root_ / "class/power_supply", ec)) {
        if (read_line(e.path() / "type") != "Battery") continue;
        if (auto cap = read_line(e.path() / "capacity")) {
            try {
                int pct = std::stoi(*cap);
                if (pct >= 0 && pct <= 100) r.battery_pct = pct;
            } catch (const std::exception&) {
            }
        }
        break;
    }
    bool wifi = false, mobile = false, any = false;
    std::error_code ec2;
    for (const auto& e : std::filesystem::directory_iterator(sys_root_ / "class/net", ec2)) {
        const auto name = e.path().filename().string();
        if (name == "lo") continue;
        any = true;
        if (read_line(e.path() / "operstate") != "up") continue;
        if (name.rfind("ww", 0) == 0 || name.rfind("rmnet", 0) == 0 || name.rfind("ccmni", 0) == 0) mobile = true;
        else if (name.rfind("wl", 0) == 0 || name.rfind("en", 0) == 0 || name.rfind("eth", 0) == 0) wifi = true;
    }
    if (any || !ec2) r.connectivity = wifi && mobile ? Connectivity::both
                                      : wifi       ? Connectivity::wifi
                                      : mobile     ? Connectivity::mobile
                                                   : Connectivity::none;
    r.operator_name = env_or_empty("AMIGO_OPERATOR");
    r.network_id = env_or_empty("AMIGO_NETWORK_ID");
    if (auto gps = env_or_empty("AMIGO_GPS"); !gps.empty()) {
        auto comma = gps.find(',');
        try {
            if (comma != std::string::npos) {
                GeoPoint g{std::stod(gps.substr(0, comma)), std::stod(gps.substr(comma + 1))};
                if (g.lat >= -90 && g.lat <= 90 && g.lon >= -180 && g.lon <= 180) r.gps = g;
            }
        } catch (const std::exception&) {
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Links.

int LocalLink::post_status(const DeviceStatus& status) { return server_.ingest_status(status); }

std::vector<Instruction> LocalLink::fetch_instructions(const std::string& device_id) {
    return server_.fetch_instructions(device_id);
}

void LocalLink::ack(const std::string& device_id, const std::string& instruction_id, const AckOutcome& outcome) {
    server_.ack_instruction(device_id, instruction_id, outcome.state, outcome.detail);
}

server::SubmitOutcome LocalLink::submit(const std::string& device_id, const std::vector<MeasurementRecord>& records) {
    return server_.submit_results(device_id, records);
}

void FlakyLink::check() const {
    if (down_()) throw network_error("control server unreachable");
}

int FlakyLink::post_status(const DeviceStatus& status) {
    check();
    return inner_.post_status(status);
}

std::vector<Instruction> FlakyLink::fetch_instructions(const std::string& device_id) {
    check();
    return inner_.fetch_instructions(device_id);
}

void FlakyLink::ack(const std::string& device_id, const std::string& instruction_id, const AckOutcome& outcome) {
    check();
    inner_.ack(device_id, instruction_id, outcome);
}

server::SubmitOutcome FlakyLink::submit(const std::string& device_id, const std::vector<MeasurementRecord>& records) {
    check();
    return inner_.submit(device_id, records);
}

// ---------------------------------------------------------------------------
// Spool.

Spool::Spool(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw io_error("cannot create spool dir " + dir_.string() + ": " + ec.message());
    std::vector<std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
        auto name = e.path().filename().string();
        if (name.rfind("spool-", 0) == 0 && e.path().extension() == ".jsonl") files.push_back(name);
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::ifstream in(dir_ / f, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        const std::string text = buf.str();
        std::size_t pos = 0;
        bool torn = false;
        while (pos < text.size()) {
            auto nl = text.find('\n', pos);
            if (nl == std::string::npos) {
                torn = true;
                break;
            }
            std::string_view line(text.data() + pos, nl - pos);
            pos = nl + 1;
            if (line.empty()) continue;
            try {
                queue_.push_back({f, decode<MeasurementRecord>(Json::parse(line), "spooled record")});
            } catch (const std::exception& e) {
                throw parse_error((dir_ / f).string() + ": " + e.what());
            }
        }
        if (torn) rewrite(f);
    }
}

void Spool::push(const MeasurementRecord& rec) {
    const std::string file = "spool-" + day_string(rec.timestamp) + ".jsonl";
    std::ofstream out(dir_ / file, std::ios::binary | std::ios::app);
    out << Json(rec).dump() << '\n';
    out.flush();
    if (!out) throw io_error("cannot append to spool " + (dir_ / file).string());
    queue_.push_back({file, rec});
}

std::vector<MeasurementRecord> Spool::front(std::size_t n) const {
    std::vector<MeasurementRecord> out;
    for (std::size_t i = 0; i < n && i < queue_.size(); ++i) out.push_back(queue_[i].record);
    return out;
}

void Spool::pop(std::size_t n) {
    std::set<std::string> touched;
    for (std::size_t i = 0; i < n && !queue_.empty(); ++i) {
        touched.insert(queue_.front().file);
        queue_.pop_front();
    }
    for (const auto& f : touched) rewrite(f);
}

void Spool::rewrite(const std::string& file) {
    std::string text;
    for (const auto& e : queue_)
        if (e.file == file) text += Json(e.record).dump() + "\n";
    if (text.empty()) {
        std::filesystem::remove(dir_ / file);
        return;
    }
    write_atomically(dir_ / file, text);
}

// ---------------------------------------------------------------------------
// Scheduling.

void to_json(Json& j, const Decision& d) {
    j = Json{{"at", d.at},
             {"experiment_id", d.experiment_id},
             {"ran", d.ran},
             {"forced", d.forced},
             {"battery_pct", d.battery_pct ? Json(*d.battery_pct) : Json(nullptr)},
             {"connectivity", d.connectivity},
             {"data_used_today", d.data_used_today},
             {"last_run", instant_or_null(d.last_run)},
             {"paused_until", instant_or_null(d.paused_until)},
             {"rule", d.rule},
             {"reason", d.reason}};
}

void from_json(const Json& j, Decision& d) {
    d.at = j.at("at").get<Instant>();
    d.experiment_id = j.at("experiment_id").get<std::string>();
    d.ran = j.at("ran").get<bool>();
    d.forced = j.value("forced", false);
    d.battery_pct = j.at("battery_pct").is_null() ? std::nullopt : std::optional<int>(j.at("battery_pct").get<int>());
    d.connectivity = j.at("connectivity").get<Connectivity>();
    d.data_used_today = j.at("data_used_today").get<Bytes>();
    d.last_run = optional_instant(j, "last_run");
    d.paused_until = optional_instant(j, "paused_until");
    d.rule = j.at("rule").get<ScheduleRule>();
    d.reason = j.value("reason", std::string{});
}

std::optional<std::string> blocking_gate(const ExperimentSpec& spec, const AgentState& state,
                                         const DeviceStatus& status, Instant now, bool forced) {
    const auto& rule = spec.schedule;
    if (state.paused_until && *state.paused_until > now) return "paused";
    if (!status.battery_pct || *status.battery_pct < rule.battery_floor_pct) return "battery";
    bool link_ok = rule.connectivity_required == ConnectivityRequirement::mobile_only
                       ? status.connectivity == Connectivity::mobile
                       : status.connectivity != Connectivity::none;
    if (!link_ok) return "connectivity";
    if (status.data_used_today >= rule.daily_data_cap) return "data_cap";
    if (!forced) {
        auto it = state.last_run.find(spec.id);
        if (it != state.last_run.end() && now < it->second + rule.interval) return "interval";
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Agent.

Agent::Agent(AgentConfig config, SensorSource& sensors, ServerLink& link, probes::ProbeSuite& probes)
    : config_(std::move(config)),
      sensors_(sensors),
      link_(link),
      probes_(probes),
      spool_(config_.spool_dir),
      ids_(config_.id_seed ? IdGenerator(*config_.id_seed) : IdGenerator()) {
    validate(config_);
    if (auto p = config_.spool_dir / "state.json"; std::filesystem::exists(p))
        state_ = state_from_json(read_json_file(p, "agent state"));
}

std::string Agent::next_record_id() { return ids_.next(); }

void Agent::save_state() const { write_atomically(config_.spool_dir / "state.json", state_to_json(state_).dump()); }

DeviceStatus Agent::collect_status(Instant now) {
    account_data(0, now);
    SensorReading r;
    try {
        r = sensors_.read(now);
    } catch (const std::exception& e) {
        spdlog::warn("{}: sensor read failed: {}", config_.device_id, e.what());
    }
    network_id_ = r.network_id;
    DeviceStatus s;
    s.device_id = config_.device_id;
    s.timestamp = now;
    s.battery_pct = r.battery_pct;
    s.connectivity = r.connectivity.value_or(Connectivity::none);
    s.operator_name = r.operator_name;
    s.network_id = r.network_id;
    s.gps = r.gps;
    s.data_used_today = state_.ledger.used;
    s.agent_version = config_.agent_version;
    return s;
}

void Agent::account_data(Bytes bytes, Instant now) {
    const auto day = utc_day(now);
    if (state_.ledger.utc_day != day) {
        state_.ledger = {day, 0};
    } else if (bytes == 0) {
        return;
    }
    state_.ledger.used += bytes;
    save_state();
}

MeasurementRecord Agent::make_record(ExperimentKind kind, Payload payload, const std::string& network_id,
                                     Instant now) {
    return {ids_.next(), config_.device_id, network_id, kind, now, std::move(payload)};
}

std::vector<MeasurementRecord> Agent::run_experiment(const ExperimentSpec& spec, Instant now) {
    std::vector<MeasurementRecord> out;
    Bytes used = 0;
    const std::string network = network_id_;
    const probes::ProbeContext ctx{network, now};
    auto add = [&](Payload p, Bytes bytes) {
        used += bytes;
        out.push_back(make_record(spec.kind, std::move(p), network, now));
    };
    switch (spec.kind) {
        case ExperimentKind::speedtest: {
            double duration = spec.param_number("duration_s", 10.0);
            try {
                auto m = probes_.speedtest(ctx, net::parse_endpoint(spec.param_string("server")), duration);
                add(m.result, m.bytes);
            } catch (const Error& e) {
                SpeedtestResult r;
                r.duration_s = duration;
                r.flagged = true;
                r.error = e.what();
                add(r, 0);
            }
            break;
        }
        case ExperimentKind::latency: {
            int max_hops = static_cast<int>(spec.param_number("max_hops", 30));
            int per_hop = static_cast<int>(spec.param_number("probes_per_hop", 3));
            for (const auto& target : spec.targets()) {
                try {
                    auto m = probes_.latency(ctx, net::parse_endpoint(spec.param_string("server")), target, max_hops,
                                             per_hop);
                    add(m.result, m.bytes);
                } catch (const Error&) {
                    LatencyResult r;
                    r.target = target;
                    r.complete = false;
                    add(r, 0);
                }
            }
            break;
        }
        case ExperimentKind::dns:
            for (const auto& target : spec.targets())
                for (const auto& resolver : resolvers_of(spec)) {
                    try {
                        auto m = probes_.dns(ctx, target, resolver);
                        add(m.result, m.bytes);
                    } catch (const Error& e) {
                        DnsResult r;
                        r.domain = target;
                        r.resolver_ip = resolver.host;
                        r.resolver_class = classify_resolver(resolver.host);
                        r.error = e.what();
                        add(r, 0);
                    }
                }
            break;
        case ExperimentKind::cdn:
            for (const auto& target : spec.targets()) {
                std::string name = spec.param_string("cdn");
                try {
                    if (name.empty()) name = probes::parse_url(target).host;
                    auto m = probes_.cdn(ctx, name, target, optional_resolver(spec));
                    add(m.result, m.bytes);
                } catch (const Error& e) {
                    CdnResult r;
                    r.cdn_name = name;
                    r.url = target;
                    r.error = e.what();
                    add(r, 0);
                }
            }
            break;
        case ExperimentKind::web:
            for (const auto& target : spec.targets()) {
                try {
                    auto m = probes_.web(ctx, target, optional_resolver(spec));
                    add(m.result, m.bytes);
                } catch (const Error&) {
                    WebResult r;
                    r.url = target;
                    r.failed_phase = "connect";
                    add(r, 0);
                }
            }
            break;
        case ExperimentKind::youtube:
            throw validation_error("youtube experiments are imported from logs, not scheduled");
    }
    state_.last_run[spec.id] = now;
    state_.forced.erase(spec.id);
    for (const auto& r : out) spool_.push(r);
    account_data(used, now);
    save_state();
    return out;
}

void Agent::spool_records(const std::vector<MeasurementRecord>& records) {
    for (const auto& r : records) {
        validate(r);
        spool_.push(r);
    }
}

bool Agent::update_config(const std::string& key, const std::string& value) {
    AgentConfig next = config_;
    auto number = [&] {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    };
    auto for_schedules = [&](auto&& f) {
        f(next.default_schedule);
        for (auto& e : next.experiments) f(e.schedule);
    };
    try {
        if (key == "report_interval_s") {
            next.report_interval = Millis{std::llround(number() * 1000.0)};
        } else if (key == "nightly_reset_hour") {
            next.nightly_reset_hour = static_cast<int>(number());
        } else if (key == "schedule.interval_s") {
            Millis v{std::llround(number() * 1000.0)};
            for_schedules([&](ScheduleRule& r) { r.interval = v; });
        } else if (key == "schedule.battery_floor_pct") {
            int v = static_cast<int>(number());
            for_schedules([&](ScheduleRule& r) { r.battery_floor_pct = v; });
        } else if (key == "schedule.daily_data_cap") {
            auto v = static_cast<Bytes>(number());
            for_schedules([&](ScheduleRule& r) { r.daily_data_cap = v; });
        } else if (key == "schedule.connectivity_required") {
            auto v = enum_from_string<ConnectivityRequirement>(value);
            for_schedules([&](ScheduleRule& r) { r.connectivity_required = v; });
        } else {
            return false;
        }
        validate(next);
    } catch (const std::exception&) {
        throw validation_error("invalid value '" + value + "' for " + key);
    }
    config_ = std::move(next);
    return true;
}

AckOutcome Agent::apply_instruction(const Instruction& instr, Instant now) {
    if (instr.device_id != config_.device_id)
        return {InstructionState::failed, "instruction addressed to " + instr.device_id};
    return std::visit(
        [&](const auto& k) -> AckOutcome {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, PauseKind>) {
                state_.paused_until = now + k.duration;
                save_state();
                return {InstructionState::acked, "paused until " + format_rfc3339(*state_.paused_until)};
            } else if constexpr (std::is_same_v<K, ResumeKind>) {
                state_.paused_until.reset();
                save_state();
                return {InstructionState::acked, "resumed"};
            } else if constexpr (std::is_same_v<K, RunNowKind>) {
                bool known = std::any_of(config_.experiments.begin(), config_.experiments.end(),
                                         [&](const auto& e) { return e.id == k.experiment_id; });
                if (!known) return {InstructionState::failed, "unknown experiment '" + k.experiment_id + "'"};
                state_.forced.insert(k.experiment_id);
                save_state();
                return {InstructionState::acked, "run_now queued for " + k.experiment_id};
            } else if constexpr (std::is_same_v<K, OpenTunnelKind>) {
                return {InstructionState::acked, "stub: tunnel requested " + k.host + ":" + std::to_string(k.port)};
            } else {
                try {
                    if (!update_config(k.key, k.value))
                        return {InstructionState::failed, "unknown config key '" + k.key + "'"};
                } catch (const Error& e) {
                    return {InstructionState::failed, e.what()};
                }
                return {InstructionState::acked, "set " + k.key + "=" + k.value};
            }
        },
        instr.kind);
}

void Agent::nightly_reset(Instant now) {
    state_.paused_until.reset();
    state_.forced.clear();
    last_reset_day_ = utc_day(now);
    save_state();
}

void Agent::flush_acks() {
    while (!unsent_acks_.empty()) {
        const auto& [id, outcome] = unsent_acks_.front();
        try {
            link_.ack(config_.device_id, id, outcome);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::network) throw;
            spdlog::warn("{}: ack of {} refused: {}", config_.device_id, id, e.what());
        }
        unsent_acks_.erase(unsent_acks_.begin());
    }
}

void Agent::upload_spool() {
    constexpr std::size_t kBatch = 100;
    while (!spool_.empty()) {
        auto batch = spool_.front(kBatch);
        auto outcome = link_.submit(config_.device_id, batch);
        for (const auto& r : outcome.rejected)
            spdlog::warn("{}: record {} rejected: {}", config_.device_id, r.record_id, r.reason);
        spool_.pop(batch.size());
    }
}

void Agent::report_tick(Instant now) {
    last_report_ = now;
    try {
        link_.post_status(collect_status(now));
        flush_acks();
        for (const auto& instr : link_.fetch_instructions(config_.device_id))
            unsent_acks_.emplace_back(instr.id, apply_instruction(instr, now));
        flush_acks();
        upload_spool();
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::network) throw;
        ++upload_failures_;
        spdlog::debug("{}: report failed, retrying next tick: {}", config_.device_id, e.what());
    }
}

void Agent::step(Instant now) {
    if (!last_reset_day_) last_reset_day_ = utc_hour(now) >= config_.nightly_reset_hour ? utc_day(now) : utc_day(now) - 1;
    if (utc_hour(now) >= config_.nightly_reset_hour && utc_day(now) != *last_reset_day_) nightly_reset(now);
    if (!last_report_ || now - *last_report_ >= config_.report_interval) report_tick(now);
    for (const auto& spec : config_.experiments) {
        auto status = collect_status(now);
        bool forced = state_.forced.count(spec.id) > 0;
        auto gate = blocking_gate(spec, state_, status, now, forced);
        Decision d;
        d.at = now;
        d.experiment_id = spec.id;
        d.ran = !gate;
        d.forced = forced;
        d.battery_pct = status.battery_pct;
        d.connectivity = status.connectivity;
        d.data_used_today = status.data_used_today;
        if (auto it = state_.last_run.find(spec.id); it != state_.last_run.end()) d.last_run = it->second;
        d.paused_until = state_.paused_until;
        d.rule = spec.schedule;
        d.reason = gate.value_or("ok");
        decisions_.push_back(d);
        if (!gate) run_experiment(spec, now);
    }
}

}  // namespace amigo::agent
