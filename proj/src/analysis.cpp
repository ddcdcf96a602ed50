#include "amigo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace amigo::analysis {

namespace fs = std::filesystem;

Dataset Dataset::build(std::vector<MeasurementRecord> records, NetworkRegistry registry) {
    std::sort(records.begin(), records.end(),
              [](const auto& a, const auto& b) { return a.record_id < b.record_id; });
    records.erase(std::unique(records.begin(), records.end(),
                              [](const auto& a, const auto& b) { return a.record_id == b.record_id; }),
                  records.end());
    Dataset ds;
    ds.registry = std::move(registry);
    for (auto& r : records) {
        if (ds.registry.find(r.network_id)) ds.records.push_back(std::move(r));
        else ds.quarantined.push_back(std::move(r));
    }
    return ds;
}

std::vector<MeasurementRecord> load_records(const std::vector<fs::path>& paths) {
    std::vector<MeasurementRecord> out;
    for (const auto& path : paths) {
        std::ifstream in(path);
        if (!in) throw io_error("cannot read record file '" + path.string() + "'");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            auto where = [&] { return path.string() + ":" + std::to_string(lineno) + ": "; };
            Json j;
            try {
                j = Json::parse(line);
            } catch (const std::exception& e) {
                throw parse_error(where() + e.what());
            }
            if (auto entry = j.find("entry"); entry != j.end()) {
                if (*entry != "record") continue;
                j = j.at("record");
            }
            try {
                out.push_back(j.get<MeasurementRecord>());
            } catch (const std::exception& e) {
                throw parse_error(where() + e.what());
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string_view metric_name(Metric m) {
    switch (m) {
        case Metric::download_mbps: return "download_mbps";
        case Metric::upload_mbps: return "upload_mbps";
        case Metric::rtt_ms: return "rtt_ms";
        case Metric::speed_index_s: return "speed_index_s";
    }
    return "unknown";
}

std::optional<double> metric_value(const MeasurementRecord& rec, Metric m) {
    switch (m) {
        case Metric::download_mbps:
        case Metric::upload_mbps:
            if (const auto* s = std::get_if<SpeedtestResult>(&rec.payload); s && s->error.empty())
                return m == Metric::download_mbps ? s->down_mbps : s->up_mbps;
            return std::nullopt;
        case Metric::rtt_ms:
            if (const auto* l = std::get_if<LatencyResult>(&rec.payload); l && l->complete && !l->hops.empty())
                return l->final_avg_rtt_ms;
            return std::nullopt;
        case Metric::speed_index_s:
            if (const auto* w = std::get_if<WebResult>(&rec.payload); w && w->speed_index_s)
                return *w->speed_index_s;
            return std::nullopt;
    }
    return std::nullopt;
}

bool metric_accepts(Metric m, const MetricClass& cls) {
    switch (m) {
        case Metric::download_mbps:
        case Metric::upload_mbps: return std::holds_alternative<SpeedClass>(cls);
        case Metric::rtt_ms: return std::holds_alternative<LatencyClass>(cls);
        case Metric::speed_index_s: return std::holds_alternative<SpeedIndexClass>(cls);
    }
    return false;
}

namespace {

bool in_class(double v, const MetricClass& cls) {
    return std::visit(
        [v](auto c) {
            using C = decltype(c);
            if constexpr (std::is_same_v<C, SpeedClass>) return classify_speed(v) == c;
            else if constexpr (std::is_same_v<C, LatencyClass>) return classify_latency(v) == c;
            else return classify_speed_index(v) == c;
        },
        cls);
}

std::string class_name(const MetricClass& cls) {
    return std::visit([](auto c) { return std::string(to_string(c)); }, cls);
}

}  // namespace

std::map<std::string, double> per_network_fraction(const Dataset& ds, Metric metric, const MetricClass& cls) {
    if (!metric_accepts(metric, cls))
        throw validation_error("class '" + class_name(cls) + "' does not apply to metric " +
                               std::string(metric_name(metric)));
    return per_network_fraction(
        ds, [metric](const MeasurementRecord& r) { return metric_value(r, metric); },
        [&cls](double v) { return in_class(v, cls); });
}

CdfSeries::CdfSeries(std::map<std::string, double> fractions) : fractions_(std::move(fractions)) {
    sorted_.reserve(fractions_.size());
    for (const auto& [_, f] : fractions_) sorted_.push_back(f);
    std::sort(sorted_.begin(), sorted_.end());
}

double CdfSeries::cdf(double x) const {
    if (sorted_.empty()) return 0.0;
    auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
    return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

double CdfSeries::at_least(double p) const {
    if (sorted_.empty()) return 0.0;
    auto it = std::lower_bound(sorted_.begin(), sorted_.end(), p);
    return static_cast<double>(sorted_.end() - it) / static_cast<double>(sorted_.size());
}

CdfSeries crux_cdf(const std::map<std::string, double>& fractions) {
    if (fractions.empty()) throw validation_error("crux_cdf needs at least one network");
    for (const auto& [net, f] : fractions)
        if (!(f >= 0.0 && f <= 1.0)) throw validation_error("fraction for network '" + net + "' outside [0, 1]");
    return CdfSeries(fractions);
}

// ---------------------------------------------------------------------------

double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw validation_error("quantile of empty data");
    double pos = q * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

BoxStats box_stats(std::vector<double> values) {
    if (values.empty()) throw validation_error("box_stats needs at least one value");
    std::sort(values.begin(), values.end());
    BoxStats b;
    b.n = values.size();
    b.min = values.front();
    b.max = values.back();
    b.q1 = quantile(values, 0.25);
    b.median = quantile(values, 0.5);
    b.q3 = quantile(values, 0.75);
    double iqr = b.q3 - b.q1;
    double lo_fence = b.q1 - 1.5 * iqr;
    double hi_fence = b.q3 + 1.5 * iqr;
    b.whisker_low = b.q1;
    b.whisker_high = b.q3;
    for (double v : values) {
        if (v >= lo_fence) {
            b.whisker_low = std::min(v, b.q1);
            break;
        }
    }
    for (auto it = values.rbegin(); it != values.rend(); ++it) {
        if (*it <= hi_fence) {
            b.whisker_high = std::max(*it, b.q3);
            break;
        }
    }
    for (double v : values)
        if (v < lo_fence || v > hi_fence) b.outliers.push_back(v);
    return b;
}

// ---------------------------------------------------------------------------

std::vector<DnsGroup> dns_report(const Dataset& ds) {
    std::map<std::pair<std::string, ResolverClass>, std::vector<double>> groups;
    std::map<std::string, std::size_t> totals;
    for (const auto& rec : ds.records) {
        const auto* d = std::get_if<DnsResult>(&rec.payload);
        if (!d || !d->success) continue;
        const auto& op = ds.registry.find(rec.network_id)->operator_name;
        groups[{op, d->resolver_class}].push_back(d->lookup_ms);
        ++totals[op];
    }
    std::vector<DnsGroup> out;
    for (auto& [key, values] : groups) {
        DnsGroup g;
        g.operator_name = key.first;
        g.resolver_class = key.second;
        g.usage_share = static_cast<double>(values.size()) / static_cast<double>(totals[key.first]);
        g.lookup_ms = box_stats(std::move(values));
        out.push_back(std::move(g));
    }
    return out;
}

CdnReport cdn_report(const Dataset& ds) {
    std::map<std::pair<std::string, CacheStatus>, std::vector<double>> by_status;
    std::map<std::pair<std::string, Continent>, std::vector<double>> by_continent;
    for (const auto& rec : ds.records) {
        const auto* c = std::get_if<CdnResult>(&rec.payload);
        if (!c || !c->error.empty()) continue;
        if (c->edge_status == CacheStatus::unknown) continue;
        by_status[{c->cdn_name, c->edge_status}].push_back(c->total_ms);
        if (c->edge_status == CacheStatus::hit)
            by_continent[{c->cdn_name, ds.registry.find(rec.network_id)->continent}].push_back(c->total_ms);
    }
    CdnReport r;
    for (auto& [k, v] : by_status) r.by_status.emplace(k, box_stats(std::move(v)));
    for (auto& [k, v] : by_continent) r.by_continent.emplace(k, box_stats(std::move(v)));
    return r;
}

std::map<std::pair<std::string, std::string>, CacheProbability> cache_probability(const Dataset& ds) {
    std::map<std::pair<std::string, std::string>, std::array<std::size_t, 3>> counts;
    for (const auto& rec : ds.records) {
        const auto* c = std::get_if<CdnResult>(&rec.payload);
        if (!c || !c->error.empty()) continue;
        ++counts[{rec.network_id, c->cdn_name}][static_cast<std::size_t>(c->edge_status)];
    }
    std::map<std::pair<std::string, std::string>, CacheProbability> out;
    for (const auto& [key, c] : counts) {
        CacheProbability p;
        p.n = c[0] + c[1] + c[2];
        double n = static_cast<double>(p.n);
        p.p_hit = static_cast<double>(c[0]) / n;
        p.p_miss = static_cast<double>(c[1]) / n;
        p.p_unknown = static_cast<double>(c[2]) / n;
        out.emplace(key, p);
    }
    return out;
}

YoutubeReport youtube_resolution_report(const Dataset& ds) {
    std::map<std::string, std::array<std::size_t, enum_count<Resolution>()>> counts;
    for (const auto& rec : ds.records) {
        const auto* y = std::get_if<YoutubeStatSeries>(&rec.payload);
        if (!y || y->samples.empty()) continue;
        auto& c = counts[rec.network_id];
        for (const auto& s : y->samples) ++c[static_cast<std::size_t>(s.resolution)];
    }
    YoutubeReport r;
    for (const auto& [net, c] : counts) {
        std::size_t total = 0;
        for (auto v : c) total += v;
        auto& dist = r.distribution[net];
        for (auto res : enum_values<Resolution>())
            dist[res] = static_cast<double>(c[static_cast<std::size_t>(res)]) / static_cast<double>(total);
    }
    if (!r.distribution.empty()) {
        for (auto res : enum_values<Resolution>()) {
            std::map<std::string, double> fractions;
            for (const auto& [net, dist] : r.distribution) fractions[net] = dist.at(res);
            r.cdfs.emplace(res, crux_cdf(fractions));
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Emission

namespace {

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

struct Section {
    std::string name;
    Json json;
    Table table;
};

std::string num(double v) {
    // Shortest round-trip representation, identical to the JSON output.
    return Json(v).dump();
}

std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

Json box_json(const BoxStats& b) {
    return Json{{"n", b.n},           {"min", b.min},       {"q1", b.q1},
                {"median", b.median}, {"q3", b.q3},         {"max", b.max},
                {"whisker_low", b.whisker_low}, {"whisker_high", b.whisker_high}, {"outliers", b.outliers}};
}

const std::vector<std::string> kBoxColumns{"n",   "min",         "q1",           "median",    "q3",
                                           "max", "whisker_low", "whisker_high", "n_outliers"};

std::vector<std::string> box_cells(const BoxStats& b) {
    return {std::to_string(b.n), num(b.min), num(b.q1), num(b.median), num(b.q3), num(b.max),
            num(b.whisker_low), num(b.whisker_high), std::to_string(b.outliers.size())};
}

std::vector<std::pair<Metric, MetricClass>> class_targets() {
    std::vector<std::pair<Metric, MetricClass>> out;
    for (auto m : {Metric::download_mbps, Metric::upload_mbps})
        for (auto c : enum_values<SpeedClass>()) out.emplace_back(m, c);
    for (auto c : enum_values<LatencyClass>()) out.emplace_back(Metric::rtt_ms, c);
    for (auto c : enum_values<SpeedIndexClass>()) out.emplace_back(Metric::speed_index_s, c);
    return out;
}

std::vector<double> cdf_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
    return grid;
}

Section class_fractions_section(const Dataset& ds) {
    Section s{"class_fractions", Json::array(), {{"metric", "class", "network_id", "fraction"}, {}}};
    for (const auto& [metric, cls] : class_targets()) {
        auto fractions = per_network_fraction(ds, metric, cls);
        s.json.push_back({{"metric", metric_name(metric)}, {"class", class_name(cls)}, {"fractions", fractions}});
        for (const auto& [net, f] : fractions)
            s.table.rows.push_back({std::string(metric_name(metric)), class_name(cls), net, num(f)});
    }
    return s;
}

Section class_cdfs_section(const Dataset& ds) {
    Section s{"class_cdfs", Json::array(), {{"metric", "class", "n_networks", "p", "at_least", "cdf"}, {}}};
    for (const auto& [metric, cls] : class_targets()) {
        auto fractions = per_network_fraction(ds, metric, cls);
        if (fractions.empty()) continue;
        auto series = crux_cdf(fractions);
        Json points = Json::array();
        for (double p : cdf_grid()) {
            points.push_back({{"p", p}, {"at_least", series.at_least(p)}, {"cdf", series.cdf(p)}});
            s.table.rows.push_back({std::string(metric_name(metric)), class_name(cls),
                                    std::to_string(series.n_networks()), num(p), num(series.at_least(p)),
                                    num(series.cdf(p))});
        }
        s.json.push_back({{"metric", metric_name(metric)},
                          {"class", class_name(cls)},
                          {"n_networks", series.n_networks()},
                          {"sorted_fractions", series.sorted()},
                          {"points", points}});
    }
    return s;
}

Section dns_section(const Dataset& ds) {
    Section s{"dns", Json::array(), {{"operator", "resolver_class", "usage_share"}, {}}};
    s.table.columns.insert(s.table.columns.end(), kBoxColumns.begin(), kBoxColumns.end());
    for (const auto& g : dns_report(ds)) {
        s.json.push_back({{"operator", g.operator_name},
                          {"resolver_class", g.resolver_class},
                          {"usage_share", g.usage_share},
                          {"lookup_ms", box_json(g.lookup_ms)}});
        std::vector<std::string> row{g.operator_name, std::string(to_string(g.resolver_class)), num(g.usage_share)};
        auto cells = box_cells(g.lookup_ms);
        row.insert(row.end(), cells.begin(), cells.end());
        s.table.rows.push_back(std::move(row));
    }
    return s;
}

Section cdn_section(const Dataset& ds) {
    auto r = cdn_report(ds);
    Section s{"cdn", Json::object(), {{"view", "cdn", "group"}, {}}};
    s.table.columns.insert(s.table.columns.end(), kBoxColumns.begin(), kBoxColumns.end());
    Json by_status = Json::array();
    for (const auto& [key, b] : r.by_status) {
        by_status.push_back({{"cdn", key.first}, {"edge_status", key.second}, {"total_ms", box_json(b)}});
        std::vector<std::string> row{"by_status", key.first, std::string(to_string(key.second))};
        auto cells = box_cells(b);
        row.insert(row.end(), cells.begin(), cells.end());
        s.table.rows.push_back(std::move(row));
    }
    Json by_continent = Json::array();
    for (const auto& [key, b] : r.by_continent) {
        by_continent.push_back({{"cdn", key.first}, {"continent", key.second}, {"total_ms", box_json(b)}});
        std::vector<std::string> row{"by_continent_hit", key.first, std::string(to_string(key.second))};
        auto cells = box_cells(b);
        row.insert(row.end(), cells.begin(), cells.end());
        s.table.rows.push_back(std::move(row));
    }
    s.json = {{"by_status", by_status}, {"by_continent_hit", by_continent}};
    return s;
}

Section cache_section(const Dataset& ds) {
    Section s{"cache", Json::array(), {{"network_id", "cdn", "n", "p_hit", "p_miss", "p_unknown"}, {}}};
    for (const auto& [key, p] : cache_probability(ds)) {
        s.json.push_back({{"network_id", key.first},
                          {"cdn", key.second},
                          {"n", p.n},
                          {"p_hit", p.p_hit},
                          {"p_miss", p.p_miss},
                          {"p_unknown", p.p_unknown}});
        s.table.rows.push_back(
            {key.first, key.second, std::to_string(p.n), num(p.p_hit), num(p.p_miss), num(p.p_unknown)});
    }
    return s;
}

Section youtube_section(const Dataset& ds) {
    auto r = youtube_resolution_report(ds);
    Section s{"youtube", Json::object(), {{"scope", "resolution", "p", "value"}, {}}};
    Json dist = Json::object();
    for (const auto& [net, d] : r.distribution) {
        Json row = Json::object();
        for (const auto& [res, share] : d) {
            row[std::string(to_string(res))] = share;
            s.table.rows.push_back({net, std::string(to_string(res)), "", num(share)});
        }
        dist[net] = row;
    }
    Json cdfs = Json::object();
    for (const auto& [res, series] : r.cdfs) {
        Json points = Json::array();
        for (double p : cdf_grid()) {
            points.push_back({{"p", p}, {"at_least", series.at_least(p)}, {"cdf", series.cdf(p)}});
            s.table.rows.push_back({"at_least", std::string(to_string(res)), num(p), num(series.at_least(p))});
        }
        cdfs[std::string(to_string(res))] = {{"n_networks", series.n_networks()}, {"points", points}};
    }
    s.json = {{"distribution", dist}, {"cdfs", cdfs}};
    return s;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write '" + path.string() + "'");
    out << content;
    out.flush();
    if (!out) throw io_error("write failed for '" + path.string() + "'");
}

}  // namespace

const std::vector<std::string>& report_sections() {
    static const std::vector<std::string> names{"class_fractions", "class_cdfs", "dns", "cdn", "cache", "youtube"};
    return names;
}

Json Manifest::to_json() const {
    Json files = Json::array();
    for (const auto& e : entries)
        files.push_back({{"section", e.section},
                         {"format", e.format == Format::json ? "json" : "csv"},
                         {"path", e.path.filename().string()},
                         {"rows", e.rows}});
    return Json{{"records", records}, {"quarantined", quarantined}, {"files", files}};
}

Manifest emit_report(const Dataset& ds, const fs::path& out_dir, const std::vector<Format>& formats) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw io_error("cannot create output directory '" + out_dir.string() + "'");

    std::vector<Section> sections;
    sections.push_back(class_fractions_section(ds));
    sections.push_back(class_cdfs_section(ds));
    sections.push_back(dns_section(ds));
    sections.push_back(cdn_section(ds));
    sections.push_back(cache_section(ds));
    sections.push_back(youtube_section(ds));

    Manifest m;
    m.records = ds.records.size();
    m.quarantined = ds.quarantined.size();
    for (const auto& s : sections) {
        for (auto f : formats) {
            ManifestEntry e{s.name, f, out_dir / (s.name + (f == Format::json ? ".json" : ".csv")), 0};
            if (f == Format::json) {
                write_file(e.path, s.json.dump(2) + "\n");
                e.rows = s.table.rows.size();
            } else {
                std::string text;
                for (std::size_t i = 0; i < s.table.columns.size(); ++i)
                    text += (i ? "," : "") + s.table.columns[i];
                text += "\n";
                for (const auto& row : s.table.rows) {
                    for (std::size_t i = 0; i < row.size(); ++i) text += (i ? "," : "") + csv_cell(row[i]);
                    text += "\n";
                }
                write_file(e.path, text);
                e.rows = s.table.rows.size();
            }
            m.entries.push_back(std::move(e));
        }
    }
    write_file(out_dir / "manifest.json", m.to_json().dump(2) + "\n");
    return m;
}

}  // namespace amigo::analysis
