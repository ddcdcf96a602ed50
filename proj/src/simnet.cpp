#include "amigo/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace amigo::simnet {

// ---------------------------------------------------------------------------
// Scenario

const TargetPath* Scenario::find_target(const std::string& name) const {
    for (const auto& t : targets)
        if (t.name == name) return &t;
    return nullptr;
}

const Asset* Scenario::find_asset(const std::string& path) const {
    for (const auto& a : assets)
        if (a.path == path) return &a;
    return nullptr;
}

std::vector<Check> validate_scenario(const Scenario& s) {
    std::vector<Check> out;
    auto add = [&](std::string name, bool ok, std::string detail = {}) {
        out.push_back({std::move(name), ok, std::move(detail)});
    };

    std::set<std::string> names;
    for (const auto& t : s.targets) {
        std::string pre = "target '" + t.name + "': ";
        add(pre + "name unique", !t.name.empty() && names.insert(t.name).second,
            t.name.empty() ? "empty name" : "duplicate target name");
        add(pre + "at least one hop", !t.hop_cumulative_delays_ms.empty());
        bool increasing = true;
        bool non_negative = true;
        for (std::size_t i = 0; i < t.hop_cumulative_delays_ms.size(); ++i) {
            if (t.hop_cumulative_delays_ms[i] < 0) non_negative = false;
            if (i > 0 && !(t.hop_cumulative_delays_ms[i] > t.hop_cumulative_delays_ms[i - 1])) increasing = false;
        }
        add(pre + "hop delays non-negative", non_negative);
        add(pre + "hop delays strictly increasing", increasing, increasing ? "" : "cumulative hop delays must strictly increase");
        add(pre + "jitter non-negative", t.jitter_ms >= 0);
    }

    add("dns: delay non-negative", s.dns.delay_ms >= 0);
    bool records_ok = true;
    std::string bad_record;
    for (const auto& [domain, ip] : s.dns.records)
        if (domain.empty() || !is_valid_ipv4(ip)) {
            records_ok = false;
            bad_record = domain;
        }
    add("dns: records map domains to IPv4 addresses", records_ok, records_ok ? "" : "bad record for '" + bad_record + "'");

    add("throughput: down cap positive", s.throughput.down_cap_mbps > 0);
    add("throughput: up cap positive", s.throughput.up_cap_mbps > 0);

    std::set<std::string> paths;
    for (const auto& a : s.assets) {
        std::string pre = "asset '" + a.path + "': ";
        add(pre + "path unique", paths.insert(a.path).second, "duplicate asset path");
        add(pre + "path starts with '/'", !a.path.empty() && a.path.front() == '/');
        add(pre + "think time non-negative", a.think_time_ms >= 0);
        bool ratio_ok = a.cache_policy.hit_ratio >= 0 && a.cache_policy.hit_ratio <= 1;
        add(pre + "hit_ratio within [0, 1]", ratio_ok,
            ratio_ok ? "" : "hit_ratio " + Json(a.cache_policy.hit_ratio).dump() + " outside [0, 1]");
    }
    return out;
}

namespace {

template <typename T>
T get_field(const Json& j, const char* name, const std::string& where) {
    auto it = j.find(name);
    if (it == j.end()) throw parse_error(where + "missing field '" + name + "'");
    try {
        return it->get<T>();
    } catch (const std::exception& e) {
        throw parse_error(where + "field '" + name + "': " + e.what());
    }
}

template <typename T>
T get_or(const Json& j, const char* name, T fallback, const std::string& where) {
    if (!j.contains(name)) return fallback;
    return get_field<T>(j, name, where);
}

CacheMode parse_mode(const std::string& s) {
    if (s == "always_hit") return CacheMode::always_hit;
    if (s == "always_miss") return CacheMode::always_miss;
    if (s == "hit_ratio") return CacheMode::hit_ratio;
    throw parse_error("unknown cache mode '" + s + "'");
}

HeaderStyle parse_style(const std::string& s) {
    if (s == "cf") return HeaderStyle::cf;
    if (s == "x_cache_single") return HeaderStyle::x_cache_single;
    if (s == "x_cache_dual") return HeaderStyle::x_cache_dual;
    throw parse_error("unknown header style '" + s + "'");
}

const char* mode_name(CacheMode m) {
    switch (m) {
        case CacheMode::always_hit: return "always_hit";
        case CacheMode::always_miss: return "always_miss";
        case CacheMode::hit_ratio: return "hit_ratio";
    }
    return "";
}

const char* style_name(HeaderStyle s) {
    switch (s) {
        case HeaderStyle::cf: return "cf";
        case HeaderStyle::x_cache_single: return "x_cache_single";
        case HeaderStyle::x_cache_dual: return "x_cache_dual";
    }
    return "";
}

}  // namespace

Scenario parse_scenario(const Json& doc) {
    if (!doc.is_object()) throw parse_error("scenario must be a JSON object");
    Scenario s;
    s.seed = get_or<std::uint64_t>(doc, "seed", 0, "scenario: ");
    for (const auto& t : doc.value("targets", Json::array())) {
        TargetPath p;
        p.name = get_field<std::string>(t, "name", "target: ");
        std::string where = "target '" + p.name + "': ";
        p.hop_cumulative_delays_ms = get_field<std::vector<double>>(t, "hop_cumulative_delays_ms", where);
        p.jitter_ms = get_or<double>(t, "jitter_ms", 0.0, where);
        s.targets.push_back(std::move(p));
    }
    if (auto it = doc.find("dns"); it != doc.end()) {
        s.dns.delay_ms = get_or<double>(*it, "delay_ms", 0.0, "dns: ");
        s.dns.records = get_or<std::map<std::string, std::string>>(*it, "records", {}, "dns: ");
        s.dns.fail_domains = get_or<std::vector<std::string>>(*it, "fail_domains", {}, "dns: ");
    }
    if (auto it = doc.find("throughput"); it != doc.end()) {
        const Json& caps = it->contains("cap_mbps") ? it->at("cap_mbps") : *it;
        if (caps.is_number()) {
            s.throughput.down_cap_mbps = s.throughput.up_cap_mbps = caps.get<double>();
        } else {
            s.throughput.down_cap_mbps = get_or<double>(caps, "down", s.throughput.down_cap_mbps, "throughput: ");
            s.throughput.up_cap_mbps = get_or<double>(caps, "up", s.throughput.up_cap_mbps, "throughput: ");
        }
    }
    for (const auto& a : doc.value("assets", Json::array())) {
        Asset asset;
        asset.path = get_field<std::string>(a, "path", "asset: ");
        std::string where = "asset '" + asset.path + "': ";
        asset.bytes = get_field<Bytes>(a, "bytes", where);
        asset.think_time_ms = get_or<double>(a, "think_time_ms", 0.0, where);
        if (auto cp = a.find("cache_policy"); cp != a.end()) {
            asset.cache_policy.mode = parse_mode(get_field<std::string>(*cp, "mode", where));
            asset.cache_policy.header_style = parse_style(get_or<std::string>(*cp, "header_style", "cf", where));
            if (asset.cache_policy.mode == CacheMode::hit_ratio)
                asset.cache_policy.hit_ratio = get_field<double>(*cp, "hit_ratio", where);
            else
                asset.cache_policy.hit_ratio = asset.cache_policy.mode == CacheMode::always_hit ? 1.0 : 0.0;
        }
        s.assets.push_back(std::move(asset));
    }
    return s;
}

Json scenario_to_json(const Scenario& s) {
    Json targets = Json::array();
    for (const auto& t : s.targets)
        targets.push_back({{"name", t.name}, {"hop_cumulative_delays_ms", t.hop_cumulative_delays_ms}, {"jitter_ms", t.jitter_ms}});
    Json assets = Json::array();
    for (const auto& a : s.assets) {
        Json cp{{"mode", mode_name(a.cache_policy.mode)}, {"header_style", style_name(a.cache_policy.header_style)}};
        if (a.cache_policy.mode == CacheMode::hit_ratio) cp["hit_ratio"] = a.cache_policy.hit_ratio;
        assets.push_back({{"path", a.path}, {"bytes", a.bytes}, {"think_time_ms", a.think_time_ms}, {"cache_policy", cp}});
    }
    return Json{{"seed", s.seed},
                {"targets", targets},
                {"dns", {{"delay_ms", s.dns.delay_ms}, {"records", s.dns.records}, {"fail_domains", s.dns.fail_domains}}},
                {"throughput", {{"cap_mbps", {{"down", s.throughput.down_cap_mbps}, {"up", s.throughput.up_cap_mbps}}}}},
                {"assets", assets}};
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read scenario file '" + path.string() + "'");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const std::exception& e) {
        throw parse_error("scenario '" + path.string() + "' is not valid JSON: " + e.what());
    }
    Scenario s = parse_scenario(doc);
    for (const auto& c : validate_scenario(s))
        if (!c.ok) throw validation_error("scenario check failed: " + c.name + (c.detail.empty() ? "" : " (" + c.detail + ")"));
    return s;
}

Scenario default_scenario() {
    Scenario s;
    s.seed = 20230501;
    s.targets = {
        {"google.sim", {10, 25, 60}, 2},
        {"facebook.sim", {8, 20, 35, 70}, 3},
        {"amazon.sim", {12, 30, 55, 90, 140}, 4},
    };
    s.dns.delay_ms = 40;
    for (const char* d : {"google.sim", "facebook.sim", "amazon.sim", "cloudflare.sim", "jsdelivr.sim", "ajax.sim",
                          "highwinds.sim", "news.sim"})
        s.dns.records[d] = "127.0.0.1";
    s.dns.fail_domains = {"broken.sim"};
    s.throughput = {30, 10};
    s.assets = {
        {"/cloudflare/jquery.min.js", 89476, 15, {CacheMode::hit_ratio, 0.85, HeaderStyle::cf}},
        {"/jsdelivr/jquery.min.js", 89476, 10, {CacheMode::hit_ratio, 0.6, HeaderStyle::x_cache_dual}},
        {"/ajax/jquery.min.js", 89476, 20, {CacheMode::always_hit, 1.0, HeaderStyle::x_cache_single}},
        {"/highwinds/jquery.min.js", 89476, 25, {CacheMode::always_miss, 0.0, HeaderStyle::cf}},
        {"/news/index.html", 250000, 50, {CacheMode::always_hit, 1.0, HeaderStyle::cf}},
    };
    return s;
}

// ---------------------------------------------------------------------------
// Keyed randomness

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::uint64_t keyed_hash(std::uint64_t seed, std::string_view stream, std::uint64_t index, std::uint64_t lane) {
    return mix64(mix64(seed) ^ mix64(fnv1a(stream) ^ mix64(index ^ mix64(lane ^ 0x5bd1e995ULL))));
}

double keyed_uniform(std::uint64_t seed, std::string_view stream, std::uint64_t index, std::uint64_t lane) {
    return static_cast<double>(keyed_hash(seed, stream, index, lane) >> 11) * 0x1.0p-53;
}

CacheDecision cache_decision(const Asset& asset, std::uint64_t request_index, std::uint64_t seed) {
    auto status = [&](std::uint64_t lane) {
        switch (asset.cache_policy.mode) {
            case CacheMode::always_hit: return CacheStatus::hit;
            case CacheMode::always_miss: return CacheStatus::miss;
            case CacheMode::hit_ratio:
                return keyed_uniform(seed, asset.path, request_index, lane) < asset.cache_policy.hit_ratio
                           ? CacheStatus::hit
                           : CacheStatus::miss;
        }
        return CacheStatus::unknown;
    };
    auto token = [](CacheStatus c) { return c == CacheStatus::hit ? std::string("HIT") : std::string("MISS"); };

    CacheDecision d;
    d.edge = status(0);
    switch (asset.cache_policy.header_style) {
        case HeaderStyle::cf: d.headers.emplace_back("cf-cache-status", token(d.edge)); break;
        case HeaderStyle::x_cache_single: d.headers.emplace_back("x-cache", token(d.edge)); break;
        case HeaderStyle::x_cache_dual:
            d.shield = status(1);
            d.headers.emplace_back("x-cache", token(d.shield) + ", " + token(d.edge));
            break;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Token bucket

TokenBucket::TokenBucket(double bytes_per_s, double start_s, double burst_s)
    : rate_(bytes_per_s), capacity_(bytes_per_s * burst_s), tokens_(bytes_per_s * burst_s), last_s_(start_s) {}

std::size_t TokenBucket::available(double now_s) {
    if (now_s > last_s_) {
        tokens_ = std::min(capacity_, tokens_ + (now_s - last_s_) * rate_);
        last_s_ = now_s;
    }
    return tokens_ > 0 ? static_cast<std::size_t>(tokens_) : 0;
}

void TokenBucket::consume(std::size_t n) { tokens_ -= static_cast<double>(n); }

double TokenBucket::wait_for(std::size_t n) const {
    double need = std::min(static_cast<double>(n), capacity_) - tokens_;
    return need <= 0 ? 0.0 : need / rate_;
}

// ---------------------------------------------------------------------------
// Metrics

Json MetricsSnapshot::to_json() const {
    Json assets_json = Json::object();
    for (const auto& [path, t] : assets)
        assets_json[path] = {{"requests", t.requests}, {"hits", t.hits}, {"misses", t.misses}};
    return Json{{"hop", {{"requests", hop_requests}, {"bytes", hop_bytes}}},
                {"throughput",
                 {{"requests", throughput_requests}, {"bytes_down", throughput_bytes_down}, {"bytes_up", throughput_bytes_up}}},
                {"dns", {{"requests", dns_requests}, {"bytes", dns_bytes}}},
                {"http", {{"requests", http_requests}, {"body_bytes", http_body_bytes}, {"assets", assets_json}}}};
}

// ---------------------------------------------------------------------------
// Model

Model::Model(Scenario scenario, std::string device_key)
    : scenario_(std::move(scenario)), device_key_(std::move(device_key)) {}

Model::NetworkProfile Model::profile(const std::string& network_id) const {
    std::string stream = "profile/" + network_id;
    auto u = [&](std::uint64_t lane) { return keyed_uniform(scenario_.seed, stream, 0, lane); };
    NetworkProfile p;
    p.latency_scale = 0.5 + 2.5 * u(0);
    p.throughput_share = 0.15 + 0.95 * u(1);
    p.dns_scale = 0.6 + 1.0 * u(2);
    p.google_dns_scale = 1.5 + 8.5 * u(3);
    return p;
}

double Model::draw(std::string_view stream, std::uint64_t lane) {
    return keyed_uniform(scenario_.seed, device_key_ + "/" + std::string(stream), counter_, lane);
}

double Model::base_rtt_ms(const std::string& network_id) const { return 20.0 * profile(network_id).latency_scale; }

probes::Measured<SpeedtestResult> Model::speedtest(const probes::ProbeContext& ctx, const net::Endpoint&,
                                                   double duration_s) {
    ++counter_;
    auto p = profile(ctx.network_id);
    probes::Measured<SpeedtestResult> out;
    auto& r = out.result;
    r.duration_s = duration_s;
    auto bytes_for = [&](double cap, std::uint64_t lane) {
        double mbps = cap * std::min(1.0, p.throughput_share * (0.75 + 0.5 * draw("speed", lane)));
        return static_cast<Bytes>(std::llround(mbps * 1e6 * duration_s / 8.0));
    };
    r.bytes_down = bytes_for(scenario_.throughput.down_cap_mbps, 0);
    r.bytes_up = bytes_for(scenario_.throughput.up_cap_mbps, 1);
    r.down_mbps = probes::compute_throughput_mbps(r.bytes_down, duration_s);
    r.up_mbps = probes::compute_throughput_mbps(r.bytes_up, duration_s);
    out.bytes = r.bytes_down + r.bytes_up;
    return out;
}

probes::Measured<LatencyResult> Model::latency(const probes::ProbeContext& ctx, const net::Endpoint&,
                                               const std::string& target, int max_hops, int probes_per_hop) {
    ++counter_;
    probes::Measured<LatencyResult> out;
    auto& r = out.result;
    r.target = target;
    r.complete = false;
    const auto* path = scenario_.find_target(target);
    double scale = profile(ctx.network_id).latency_scale;
    if (!path) {
        r.hops.push_back(HopStat{1, "???", probes_per_hop, probes_per_hop, 0, 0, 0});
    } else {
        int n = static_cast<int>(path->hop_cumulative_delays_ms.size());
        for (int k = 1; k <= std::min(n, max_hops); ++k) {
            HopStat h{k, "10.0." + std::to_string(k) + ".1", probes_per_hop, 0, 0, 0, 0};
            double sum = 0;
            h.best_rtt_ms = 1e300;
            for (int i = 0; i < probes_per_hop; ++i) {
                double rtt = path->hop_cumulative_delays_ms[static_cast<std::size_t>(k - 1)] * scale +
                             path->jitter_ms * draw("hop" + std::to_string(k), static_cast<std::uint64_t>(i));
                sum += rtt;
                h.best_rtt_ms = std::min(h.best_rtt_ms, rtt);
                h.worst_rtt_ms = std::max(h.worst_rtt_ms, rtt);
            }
            h.avg_rtt_ms = std::clamp(sum / probes_per_hop, h.best_rtt_ms, h.worst_rtt_ms);
            r.hops.push_back(h);
            out.bytes += static_cast<Bytes>(probes_per_hop) * 40;
        }
        r.complete = max_hops >= n;
    }
    r.hop_count = static_cast<int>(r.hops.size());
    r.final_avg_rtt_ms = r.hops.back().avg_rtt_ms;
    return out;
}

probes::Measured<DnsResult> Model::dns(const probes::ProbeContext& ctx, const std::string& domain,
                                       const net::Endpoint& resolver) {
    ++counter_;
    probes::Measured<DnsResult> out;
    auto& r = out.result;
    r.domain = domain;
    r.resolver_ip = resolver.host;
    r.resolver_class = classify_resolver(resolver.host);
    auto p = profile(ctx.network_id);
    double scale = p.dns_scale * (r.resolver_class == ResolverClass::google_dns ? p.google_dns_scale : 1.0);
    r.lookup_ms = scenario_.dns.delay_ms * scale * (0.8 + 0.4 * draw("dns"));
    out.bytes = 2 * (domain.size() + 18) + 16;
    if (std::find(scenario_.dns.fail_domains.begin(), scenario_.dns.fail_domains.end(), domain) !=
        scenario_.dns.fail_domains.end()) {
        r.error = "rcode 2";
    } else if (auto it = scenario_.dns.records.find(domain); it != scenario_.dns.records.end()) {
        r.success = true;
        r.answer = it->second;
    } else {
        r.error = "NXDOMAIN";
    }
    return out;
}

probes::Measured<CdnResult> Model::cdn(const probes::ProbeContext& ctx, const std::string& cdn_name,
                                       const std::string& url, const std::optional<net::Endpoint>&) {
    ++counter_;
    probes::Measured<CdnResult> out;
    auto& r = out.result;
    r.cdn_name = cdn_name;
    r.url = url;
    probes::Url u;
    try {
        u = probes::parse_url(url);
    } catch (const Error& e) {
        r.error = std::string("dns: ") + e.what();
        return out;
    }
    const auto* asset = scenario_.find_asset(u.path);
    double base = base_rtt_ms(ctx.network_id);
    if (!asset) {
        r.http_status = 404;
        r.total_ms = 3 * base;
        return out;
    }
    auto idx = asset_requests_[asset->path]++;
    auto decision = cache_decision(*asset, idx, keyed_hash(scenario_.seed, device_key_, 0));
    double share = profile(ctx.network_id).throughput_share;
    double transfer_ms = static_cast<double>(asset->bytes) * 8.0 / (scenario_.throughput.down_cap_mbps * share * 1e6) * 1000.0;
    double total = asset->think_time_ms + 3 * base + transfer_ms;
    if (decision.edge == CacheStatus::miss) total += 2 * base + 120.0;
    if (decision.shield == CacheStatus::miss) total += 60.0;
    r.http_status = 200;
    r.total_ms = total * (0.9 + 0.2 * draw("cdn"));
    r.bytes = asset->bytes;
    auto parsed = probes::parse_cache_headers(decision.headers);
    r.shield_status = parsed.shield_status;
    r.edge_status = parsed.edge_status;
    out.bytes = asset->bytes + 300;
    return out;
}

probes::Measured<WebResult> Model::web(const probes::ProbeContext& ctx, const std::string& url,
                                       const std::optional<net::Endpoint>&) {
    ++counter_;
    probes::Measured<WebResult> out;
    auto& r = out.result;
    r.url = url;
    probes::Url u;
    try {
        u = probes::parse_url(url);
    } catch (const Error&) {
        r.failed_phase = "dns";
        return out;
    }
    auto p = profile(ctx.network_id);
    double base = base_rtt_ms(ctx.network_id);
    if (!net::is_ipv4_literal(u.host)) {
        if (!scenario_.dns.records.count(u.host)) {
            r.failed_phase = "dns";
            r.total_ms = r.dns_ms = scenario_.dns.delay_ms * p.dns_scale;
            return out;
        }
        r.dns_ms = scenario_.dns.delay_ms * p.dns_scale * (0.8 + 0.4 * draw("web", 0));
    }
    r.connect_ms = r.dns_ms + base;
    const auto* asset = scenario_.find_asset(u.path);
    double think = asset ? asset->think_time_ms : 0.0;
    r.ttfb_ms = r.connect_ms + base + think * (0.9 + 0.2 * draw("web", 1));
    Bytes body = asset ? asset->bytes : 0;
    double transfer_ms = static_cast<double>(body) * 8.0 / (scenario_.throughput.down_cap_mbps * p.throughput_share * 1e6) * 1000.0;
    r.total_ms = r.ttfb_ms + transfer_ms;
    r.bytes = body;
    r.http_status = asset ? 200 : 404;
    out.bytes = body + 300;
    return out;
}

}  // namespace amigo::simnet
