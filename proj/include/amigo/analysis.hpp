#pragma once

#include <concepts>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "amigo/domain.hpp"

namespace amigo::analysis {

/// Records resolvable against the registry, plus the ones that were not.
/// Records are kept sorted by record_id with duplicates collapsed, so every
/// report is independent of input order.
struct Dataset {
    std::vector<MeasurementRecord> records;
    std::vector<MeasurementRecord> quarantined;
    NetworkRegistry registry;

    static Dataset build(std::vector<MeasurementRecord> records, NetworkRegistry registry);
};

/// Reads JSONL record files. Lines that are server-store envelopes
/// ({"entry":"record","record":{...}}) are unwrapped; other envelope entries
/// are skipped. Throws io_error / parse_error naming the file and line.
std::vector<MeasurementRecord> load_records(const std::vector<std::filesystem::path>& paths);

// ---------------------------------------------------------------------------
// CRuX-style aggregation.

enum class Metric { download_mbps, upload_mbps, rtt_ms, speed_index_s };
using MetricClass = std::variant<SpeedClass, LatencyClass, SpeedIndexClass>;

std::string_view metric_name(Metric m);

/// Value of a metric for one record, or nullopt when the record does not
/// carry it (other kind, failed probe, incomplete path, no SpeedIndex).
std::optional<double> metric_value(const MeasurementRecord& rec, Metric m);

/// True when the class type belongs to the metric's classifier.
bool metric_accepts(Metric m, const MetricClass& cls);

/// Fraction of each network's tests whose value falls in `cls`. Networks
/// without a single applicable test are omitted.
std::map<std::string, double> per_network_fraction(const Dataset& ds, Metric metric, const MetricClass& cls);

/// Generic form: `value` extracts the metric, `in_class` decides membership.
template <typename Extract, typename InClass>
    requires std::invocable<Extract, const MeasurementRecord&> && std::predicate<InClass, double>
std::map<std::string, double> per_network_fraction(const Dataset& ds, Extract value, InClass in_class) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // hits, total
    for (const auto& rec : ds.records) {
        std::optional<double> v = value(rec);
        if (!v) continue;
        auto& c = counts[rec.network_id];
        ++c.second;
        if (in_class(*v)) ++c.first;
    }
    std::map<std::string, double> out;
    for (const auto& [net, c] : counts)
        out[net] = static_cast<double>(c.first) / static_cast<double>(c.second);
    return out;
}

class CdfSeries {
public:
    explicit CdfSeries(std::map<std::string, double> fractions);

    const std::map<std::string, double>& fractions() const { return fractions_; }
    const std::vector<double>& sorted() const { return sorted_; }
    std::size_t n_networks() const { return sorted_.size(); }

    /// F(x) = |{f <= x}| / n
    double cdf(double x) const;
    /// |{f >= p}| / n, read as "this share of networks has at least p of its tests in the class".
    double at_least(double p) const;

private:
    std::map<std::string, double> fractions_;
    std::vector<double> sorted_;
};

/// Throws validation_error on empty input or a fraction outside [0, 1].
CdfSeries crux_cdf(const std::map<std::string, double>& fractions);

// ---------------------------------------------------------------------------
// Box statistics.

struct BoxStats {
    std::size_t n = 0;
    double min = 0;
    double q1 = 0;
    double median = 0;
    double q3 = 0;
    double max = 0;
    double whisker_low = 0;
    double whisker_high = 0;
    std::vector<double> outliers;
    bool operator==(const BoxStats&) const = default;
};

/// Linear-interpolation quantile over sorted data: position q * (n - 1).
double quantile(const std::vector<double>& sorted, double q);

/// Quartiles by linear interpolation, Tukey whiskers at 1.5 IQR (furthest
/// data point inside the fence), everything else an outlier.
BoxStats box_stats(std::vector<double> values);

// ---------------------------------------------------------------------------
// Reports.

struct DnsGroup {
    std::string operator_name;
    ResolverClass resolver_class = ResolverClass::operator_local;
    BoxStats lookup_ms;
    double usage_share = 0;  // share of this operator's lookups that used this resolver class
};

/// Successful lookups only, grouped by (operator, resolver class); sorted by
/// operator then class.
std::vector<DnsGroup> dns_report(const Dataset& ds);

struct CdnReport {
    std::map<std::pair<std::string, CacheStatus>, BoxStats> by_status;    // Hit and Miss only
    std::map<std::pair<std::string, Continent>, BoxStats> by_continent;  // edge Hit only
};

CdnReport cdn_report(const Dataset& ds);

struct CacheProbability {
    std::size_t n = 0;
    double p_hit = 0;
    double p_miss = 0;
    double p_unknown = 0;
};

std::map<std::pair<std::string, std::string>, CacheProbability> cache_probability(const Dataset& ds);

struct YoutubeReport {
    std::map<std::string, std::map<Resolution, double>> distribution;  // every resolution present, zeros included
    std::map<Resolution, CdfSeries> cdfs;                              // empty when no network has samples
};

YoutubeReport youtube_resolution_report(const Dataset& ds);

// ---------------------------------------------------------------------------
// Emission.

enum class Format { json, csv };

struct ManifestEntry {
    std::string section;
    Format format = Format::json;
    std::filesystem::path path;
    std::size_t rows = 0;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::size_t records = 0;
    std::size_t quarantined = 0;
    Json to_json() const;
};

/// Section names in emission order.
const std::vector<std::string>& report_sections();

/// Writes one file per section and format plus manifest.json. Throws
/// io_error naming the path that could not be written.
Manifest emit_report(const Dataset& ds, const std::filesystem::path& out_dir, const std::vector<Format>& formats);

}  // namespace amigo::analysis
