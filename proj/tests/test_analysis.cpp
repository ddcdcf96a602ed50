#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "amigo/analysis.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace amigo;
using namespace amigo::analysis;
namespace t = amigo::test;

namespace {

int next_id = 0;

MeasurementRecord rec(const std::string& net, Payload p) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "r%06d", next_id++);
    return t::record(buf, net, std::move(p));
}

Dataset speeds(const std::map<std::string, std::vector<double>>& by_net) {
    std::vector<MeasurementRecord> rs;
    NetworkRegistry reg;
    for (const auto& [net, values] : by_net) {
        reg.add(net, {"op-" + net, "XX", Continent::europe});
        for (double v : values) rs.push_back(rec(net, t::speed(v)));
    }
    return Dataset::build(rs, reg);
}

YoutubeStatSeries yt(const std::vector<std::pair<Resolution, int>>& counts) {
    YoutubeStatSeries y;
    Instant ts = t::at("2026-05-04T12:00:00Z");
    for (auto [res, n] : counts)
        for (int i = 0; i < n; ++i) {
            y.samples.push_back({ts, res, 10.0, 0});
            ts += Millis{1000};
        }
    return y;
}

}  // namespace

TEST(Dataset, QuarantinesUnknownNetworksAndCollapsesDuplicates) {
    auto reg = t::registry_of({{"a", Continent::asia}});
    auto r1 = t::record("x", "a", t::dns(1));
    auto r2 = t::record("y", "zzz", t::dns(1));
    auto ds = Dataset::build({r1, r2, r1}, reg);
    ASSERT_EQ(ds.records.size(), 1u);
    ASSERT_EQ(ds.quarantined.size(), 1u);
    EXPECT_EQ(ds.quarantined[0].network_id, "zzz");
}

TEST(Dataset, BuildIsOrderIndependent) {
    std::vector<MeasurementRecord> rs;
    for (int i = 0; i < 30; ++i) rs.push_back(rec(i % 2 ? "a" : "b", t::dns(i)));
    auto reg = t::registry_of({{"a", Continent::asia}, {"b", Continent::africa}});
    auto fwd = Dataset::build(rs, reg);
    std::reverse(rs.begin(), rs.end());
    EXPECT_EQ(fwd.records, Dataset::build(rs, reg).records);
}

TEST(PerNetworkFraction, Examples) {
    auto ds = speeds({{"A", {10, 10, 10}}, {"B", {40, 40}}, {"C", {10, 40}}});
    auto slow = per_network_fraction(ds, Metric::download_mbps, SpeedClass::slow);
    EXPECT_EQ(slow, (std::map<std::string, double>{{"A", 1.0}, {"B", 0.0}, {"C", 0.5}}));
    auto fast = per_network_fraction(ds, Metric::download_mbps, SpeedClass::fast);
    EXPECT_EQ(fast.at("A"), 0.0);
    EXPECT_TRUE(per_network_fraction(speeds({}), Metric::download_mbps, SpeedClass::slow).empty());
}

TEST(PerNetworkFraction, NetworksWithoutApplicableTestsAreOmitted) {
    auto reg = t::registry_of({{"a", Continent::asia}, {"b", Continent::asia}});
    auto failed = t::speed(0);
    failed.error = "connect refused";
    auto ds = Dataset::build({rec("a", t::speed(10)), rec("b", t::dns(3)), rec("b", failed)}, reg);
    auto f = per_network_fraction(ds, Metric::download_mbps, SpeedClass::slow);
    EXPECT_EQ(f.size(), 1u);
    EXPECT_EQ(f.count("b"), 0u);
}

TEST(PerNetworkFraction, IncompletePathsCarryNoRtt) {
    auto l = t::latency(10);
    l.complete = false;
    auto reg = t::registry_of({{"a", Continent::asia}});
    auto ds = Dataset::build({rec("a", l), rec("a", t::latency(200))}, reg);
    auto f = per_network_fraction(ds, Metric::rtt_ms, LatencyClass::less_desirable);
    EXPECT_EQ(f.at("a"), 1.0);
}

TEST(PerNetworkFraction, RejectsClassOfAnotherMetric) {
    auto ds = speeds({{"A", {1}}});
    EXPECT_THROW(per_network_fraction(ds, Metric::download_mbps, LatencyClass::exceptional), Error);
}

TEST(CruxCdf, Examples) {
    auto s = crux_cdf({{"a", 1.0}, {"b", 0.0}, {"c", 0.5}, {"d", 1.0}});
    EXPECT_EQ(s.at_least(0.8), 0.5);
    EXPECT_EQ(s.n_networks(), 4u);
    auto flat = crux_cdf({{"a", 0.3}, {"b", 0.3}});
    EXPECT_EQ(flat.cdf(0.3), 1.0);
    EXPECT_EQ(flat.cdf(0.29), 0.0);
    EXPECT_THROW(crux_cdf({}), Error);
    EXPECT_THROW(crux_cdf({{"a", 1.2}}), Error);
    EXPECT_THROW(crux_cdf({{"a", -0.1}}), Error);
}

TEST(CruxCdf, FortyPercentOfNetworksMostlySlow) {
    std::map<std::string, std::vector<double>> nets;
    for (int i = 0; i < 10; ++i) {
        int slow = i < 4 ? 9 - (i % 2) : i - 4;  // 9 or 8 of 10 slow for four networks, at most 5 for the rest
        std::vector<double> v;
        for (int k = 0; k < 10; ++k) v.push_back(k < slow ? 8.0 : 45.0);
        nets["n" + std::to_string(i)] = v;
    }
    auto cdf = crux_cdf(per_network_fraction(speeds(nets), Metric::download_mbps, SpeedClass::slow));
    EXPECT_EQ(cdf.at_least(0.8), 0.4);
}

TEST(CruxCdf, MonotoneAndRightContinuous) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::map<std::string, double> f;
        int n = 1 + static_cast<int>(u(rng) * 12);
        for (int i = 0; i < n; ++i) f["n" + std::to_string(i)] = std::round(u(rng) * 10) / 10;
        auto s = crux_cdf(f);
        EXPECT_EQ(s.cdf(1.0), 1.0);
        double prev_cdf = 0, prev_at = 1;
        for (int k = 0; k <= 100; ++k) {
            double p = k / 100.0;
            EXPECT_GE(s.cdf(p), prev_cdf);
            EXPECT_LE(s.at_least(p), prev_at);
            prev_cdf = s.cdf(p);
            prev_at = s.at_least(p);
        }
    }
}

// ---------------------------------------------------------------------------

TEST(BoxStats, Examples) {
    auto b = box_stats({1, 2, 3, 4, 5});
    EXPECT_EQ(b.median, 3);
    EXPECT_EQ(b.q1, 2);
    EXPECT_EQ(b.q3, 4);
    EXPECT_TRUE(b.outliers.empty());

    auto one = box_stats({5});
    for (double v : {one.min, one.q1, one.median, one.q3, one.max, one.whisker_low, one.whisker_high}) EXPECT_EQ(v, 5);
    EXPECT_TRUE(one.outliers.empty());

    auto spike = box_stats({1, 1, 1, 100});
    EXPECT_EQ(spike.outliers, std::vector<double>{100});
    EXPECT_EQ(spike.q1, 1);
    EXPECT_EQ(spike.q3, 25.75);
    EXPECT_EQ(spike.whisker_low, 1);
    EXPECT_EQ(spike.whisker_high, spike.q3);  // no data point between q3 and the fence
    EXPECT_EQ(spike.max, 100);

    EXPECT_THROW(box_stats({}), Error);
}

namespace {

void expect_box_invariants(const BoxStats& b) {
    EXPECT_LE(b.min, b.whisker_low);
    EXPECT_LE(b.whisker_low, b.q1);
    EXPECT_LE(b.q1, b.median);
    EXPECT_LE(b.median, b.q3);
    EXPECT_LE(b.q3, b.whisker_high);
    EXPECT_LE(b.whisker_high, b.max);
    for (double o : b.outliers) EXPECT_TRUE(o < b.whisker_low || o > b.whisker_high);
}

}  // namespace

TEST(BoxStats, MatchesReferenceOnRandomInputs) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 400; ++trial) {
        std::size_t n = 1 + rng() % (trial < 300 ? 40 : 1000);
        std::vector<double> v;
        std::lognormal_distribution<double> heavy(3, 1);
        std::uniform_int_distribution<int> small(0, 5);
        for (std::size_t i = 0; i < n; ++i) v.push_back(trial % 3 == 0 ? small(rng) : heavy(rng));
        auto got = box_stats(v);
        auto want = oracle::box(v);
        EXPECT_EQ(got.n, want.n);
        EXPECT_DOUBLE_EQ(got.q1, want.q1);
        EXPECT_DOUBLE_EQ(got.median, want.median);
        EXPECT_DOUBLE_EQ(got.q3, want.q3);
        EXPECT_EQ(got.whisker_low, want.whisker_low);
        EXPECT_EQ(got.whisker_high, want.whisker_high);
        EXPECT_EQ(got.outliers, want.outliers);
        expect_box_invariants(got);
    }
}

// ---------------------------------------------------------------------------
// Oracle equivalence over random small datasets.

namespace {

std::vector<MeasurementRecord> random_dataset(std::mt19937_64& rng, NetworkRegistry& reg) {
    std::uniform_int_distribution<int> nnets(1, 5), nrec(0, 20), kind(0, 2);
    std::uniform_real_distribution<double> mbps(0, 50), rtt(0, 200);
    std::vector<MeasurementRecord> rs;
    int networks = nnets(rng);
    for (int i = 0; i < networks; ++i) {
        std::string net = "net" + std::to_string(i);
        reg.add(net, {"op" + std::to_string(i), "XX", Continent::other});
        for (int k = nrec(rng); k > 0; --k) {
            switch (kind(rng)) {
                case 0: rs.push_back(rec(net, t::speed(std::round(mbps(rng))))); break;
                case 1: {
                    auto l = t::latency(std::round(rtt(rng)), 1 + int(rng() % 4));
                    l.complete = rng() % 5 != 0;
                    rs.push_back(rec(net, l));
                    break;
                }
                default: rs.push_back(rec(net, t::dns(rtt(rng)))); break;
            }
        }
    }
    return rs;
}

}  // namespace

TEST(OracleEquivalence, HundredRandomDatasets) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        NetworkRegistry reg;
        auto rs = random_dataset(rng, reg);
        auto ds = Dataset::build(rs, reg);
        auto slow = per_network_fraction(ds, Metric::download_mbps, SpeedClass::slow);
        auto want = oracle::slow_download_fraction(rs);
        EXPECT_EQ(slow, want);
        EXPECT_EQ(per_network_fraction(ds, Metric::rtt_ms, LatencyClass::exceptional), oracle::exceptional_rtt_fraction(rs));
        if (!want.empty()) {
            auto cdf = crux_cdf(slow);
            for (double p : {0.0, 0.1, 0.25, 0.5, 0.8, 1.0}) EXPECT_EQ(cdf.at_least(p), oracle::at_least(want, p));
        }
    }
}

TEST(Relabeling, PermutesOutputsWithoutChangingStatistics) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        NetworkRegistry reg, renamed_reg;
        auto rs = random_dataset(rng, reg);
        std::map<std::string, std::string> rename;
        for (const auto& [id, info] : reg.entries()) {
            rename[id] = "zz-" + std::to_string(1000 - rename.size());
            renamed_reg.add(rename[id], info);
        }
        auto renamed = rs;
        for (auto& r : renamed) r.network_id = rename[r.network_id];
        auto a = per_network_fraction(Dataset::build(rs, reg), Metric::download_mbps, SpeedClass::average);
        auto b = per_network_fraction(Dataset::build(renamed, renamed_reg), Metric::download_mbps, SpeedClass::average);
        ASSERT_EQ(a.size(), b.size());
        for (const auto& [net, f] : a) EXPECT_EQ(b.at(rename[net]), f);
        if (!a.empty()) {
            EXPECT_EQ(crux_cdf(a).sorted(), crux_cdf(b).sorted());
        }
        auto da = dns_report(Dataset::build(rs, reg));
        auto db = dns_report(Dataset::build(renamed, renamed_reg));
        ASSERT_EQ(da.size(), db.size());
        for (std::size_t i = 0; i < da.size(); ++i) EXPECT_EQ(da[i].lookup_ms, db[i].lookup_ms);
    }
}

// ---------------------------------------------------------------------------

TEST(DnsReport, UsageShares) {
    auto reg = t::registry_of({{"a", Continent::africa}, {"b", Continent::africa}});
    std::vector<MeasurementRecord> rs{rec("a", t::dns(10)), rec("a", t::dns(12)), rec("a", t::dns(11)),
                                      rec("a", t::dns(90, "8.8.8.8")), rec("b", t::dns(5)),
                                      rec("b", t::dns(900, "192.0.2.53", false))};
    auto groups = dns_report(Dataset::build(rs, reg));
    ASSERT_EQ(groups.size(), 3u);
    EXPECT_EQ(groups[0].operator_name, "op-a");
    EXPECT_EQ(groups[0].resolver_class, ResolverClass::google_dns);
    EXPECT_EQ(groups[0].usage_share, 0.25);
    EXPECT_EQ(groups[1].usage_share, 0.75);
    EXPECT_EQ(groups[2].operator_name, "op-b");
    EXPECT_EQ(groups[2].usage_share, 1.0);
    EXPECT_EQ(groups[2].lookup_ms.n, 1u);
}

TEST(DnsReport, TenfoldGoogleSlowdownIsVisibleInMedians) {
    auto reg = t::registry_of({{"a", Continent::central_south_america}});
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> jitter(0.9, 1.1);
    std::vector<MeasurementRecord> rs;
    for (int i = 0; i < 60; ++i) rs.push_back(rec("a", t::dns(20 * jitter(rng))));
    for (int i = 0; i < 20; ++i) rs.push_back(rec("a", t::dns(200 * jitter(rng), "8.8.4.4")));
    auto groups = dns_report(Dataset::build(rs, reg));
    ASSERT_EQ(groups.size(), 2u);
    EXPECT_NEAR(groups[0].lookup_ms.median / groups[1].lookup_ms.median, 10.0, 0.5);
}

TEST(CdnReport, MissPenaltyAndContinentSplit) {
    auto reg = t::registry_of({{"eu", Continent::europe}, {"af", Continent::africa}});
    std::vector<MeasurementRecord> rs;
    for (int i = 1; i <= 9; ++i) {
        rs.push_back(rec("eu", t::cdn("cloudflare", 10.0 * i, CacheStatus::hit)));
        rs.push_back(rec("eu", t::cdn("cloudflare", 30.0 * i, CacheStatus::miss)));
        rs.push_back(rec("af", t::cdn("cloudflare", 100.0 * i, CacheStatus::hit)));
        rs.push_back(rec("af", t::cdn("cloudflare", 1.0, CacheStatus::unknown)));
    }
    auto r = cdn_report(Dataset::build(rs, reg));
    EXPECT_EQ(r.by_status.size(), 2u);
    EXPECT_EQ(r.by_status.at({"cloudflare", CacheStatus::miss}).median, 150.0);
    double af = r.by_continent.at({"cloudflare", Continent::africa}).median;
    double eu = r.by_continent.at({"cloudflare", Continent::europe}).median;
    EXPECT_DOUBLE_EQ(af / eu, 10.0);
    EXPECT_FALSE(r.by_continent.count({"cloudflare", Continent::asia}));
}

TEST(CdnReport, SingleRecordGivesSingletonBox) {
    auto reg = t::registry_of({{"a", Continent::asia}});
    auto r = cdn_report(Dataset::build({rec("a", t::cdn("x", 7, CacheStatus::miss))}, reg));
    EXPECT_EQ(r.by_status.at({"x", CacheStatus::miss}), box_stats({7}));
    EXPECT_TRUE(r.by_continent.empty());
}

TEST(CacheProbability, Examples) {
    auto reg = t::registry_of({{"a", Continent::asia}, {"b", Continent::asia}, {"c", Continent::asia}});
    std::vector<MeasurementRecord> rs;
    for (int i = 0; i < 4; ++i) rs.push_back(rec("a", t::cdn("x", 1, CacheStatus::hit)));
    rs.push_back(rec("a", t::cdn("x", 1, CacheStatus::miss)));
    for (int i = 0; i < 3; ++i) rs.push_back(rec("b", t::cdn("x", 1, CacheStatus::miss)));
    rs.push_back(rec("c", t::cdn("x", 1, CacheStatus::unknown)));
    auto p = cache_probability(Dataset::build(rs, reg));
    EXPECT_DOUBLE_EQ(p.at({"a", "x"}).p_hit, 0.8);
    EXPECT_DOUBLE_EQ(p.at({"a", "x"}).p_miss, 0.2);
    EXPECT_EQ(p.at({"b", "x"}).p_miss, 1.0);
    EXPECT_EQ(p.at({"c", "x"}).p_unknown, 1.0);
}

TEST(CacheProbability, RowsSumToOne) {
    std::mt19937_64 rng(8);
    NetworkRegistry reg;
    std::vector<MeasurementRecord> rs;
    for (int n = 0; n < 7; ++n) {
        reg.add("n" + std::to_string(n), {"o", "XX", Continent::other});
        for (int i = 0; i < 37; ++i)
            rs.push_back(rec("n" + std::to_string(n), t::cdn(i % 2 ? "a" : "b", 1, CacheStatus(rng() % 3))));
    }
    for (const auto& [_, p] : cache_probability(Dataset::build(rs, reg)))
        EXPECT_NEAR(p.p_hit + p.p_miss + p.p_unknown, 1.0, 1e-9);
}

TEST(Youtube, DistributionAndCdfs) {
    auto reg = t::registry_of({{"a", Continent::asia}, {"b", Continent::asia}, {"c", Continent::asia},
                               {"d", Continent::asia}});
    using R = Resolution;
    std::vector<MeasurementRecord> rs{
        rec("a", yt({{R::r720, 4}, {R::r480, 6}})), rec("b", yt({{R::r720, 5}, {R::r360, 5}})),
        rec("c", yt({{R::r720, 1}, {R::r144, 9}})), rec("d", yt({{R::r240, 3}}))};
    auto r = youtube_resolution_report(Dataset::build(rs, reg));
    EXPECT_DOUBLE_EQ(r.distribution.at("a").at(R::r720), 0.4);
    EXPECT_DOUBLE_EQ(r.distribution.at("a").at(R::r480), 0.6);
    EXPECT_EQ(r.cdfs.at(R::r720).at_least(0.4), 0.5);
    for (const auto& [net, dist] : r.distribution) EXPECT_EQ(dist.at(R::r1080), 0.0);
    EXPECT_EQ(r.cdfs.at(R::r1080).at_least(0.01), 0.0);
}

TEST(Youtube, NoSamplesMeansEmptyReport) {
    auto r = youtube_resolution_report(speeds({{"a", {1}}}));
    EXPECT_TRUE(r.distribution.empty());
    EXPECT_TRUE(r.cdfs.empty());
}

// ---------------------------------------------------------------------------

TEST(LoadRecords, UnwrapsStoreEnvelopesAndNamesBadLines) {
    t::TempDir dir;
    auto plain = dir / "spool.jsonl";
    auto store = dir / "store.jsonl";
    {
        std::ofstream(plain) << Json(t::record("a", "n", t::dns(1))).dump() << "\n\n";
        std::ofstream(store) << Json{{"entry", "status"}, {"status", Json::object()}}.dump() << "\n"
                             << Json{{"entry", "record"}, {"record", t::record("b", "n", t::dns(2))}}.dump() << "\n";
    }
    auto rs = load_records({plain, store});
    ASSERT_EQ(rs.size(), 2u);
    EXPECT_EQ(rs[1].record_id, "b");

    std::ofstream(dir / "bad.jsonl") << "{\"record_id\":\n";
    try {
        load_records({dir / "bad.jsonl"});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse);
        EXPECT_NE(std::string(e.what()).find("bad.jsonl:1"), std::string::npos);
    }
    try {
        load_records({dir / "missing.jsonl"});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
    }
}

TEST(EmitReport, SixSectionsInBothFormats) {
    t::TempDir dir;
    auto reg = t::registry_of({{"a", Continent::asia}});
    auto ds = Dataset::build({rec("a", t::speed(10)), rec("a", t::dns(4)), rec("a", t::cdn("x", 3, CacheStatus::hit)),
                              rec("a", yt({{Resolution::r360, 2}})), rec("nope", t::dns(1))},
                             reg);
    auto m = emit_report(ds, dir.path(), {Format::json, Format::csv});
    EXPECT_EQ(m.entries.size(), 12u);
    EXPECT_EQ(m.records, 4u);
    EXPECT_EQ(m.quarantined, 1u);
    std::set<std::string> sections;
    for (const auto& e : m.entries) {
        sections.insert(e.section);
        EXPECT_TRUE(std::filesystem::exists(e.path)) << e.path;
    }
    EXPECT_EQ(sections.size(), 6u);
    EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
    std::ifstream csv(dir / "dns.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header.rfind("operator,resolver_class,usage_share,n,min", 0), 0u);
}

TEST(EmitReport, EmptyDatasetStillWritesEverySection) {
    t::TempDir dir;
    auto m = emit_report(Dataset::build({}, NetworkRegistry{}), dir.path(), {Format::json});
    ASSERT_EQ(m.entries.size(), 6u);
    for (const auto& e : m.entries) EXPECT_EQ(e.rows, 0u) << e.section;
    EXPECT_EQ(report_sections().size(), 6u);
}

TEST(EmitReport, UnwritableDirectoryNamesThePath) {
    t::TempDir dir;
    std::ofstream(dir / "file") << "x";
    auto target = dir / "file" / "report";
    try {
        emit_report(Dataset::build({}, NetworkRegistry{}), target, {Format::json});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
        EXPECT_NE(std::string(e.what()).find(target.string()), std::string::npos);
    }
}

TEST(EmitReport, OutputIsStableAcrossRuns) {
    t::TempDir a, b;
    std::mt19937_64 rng(1);
    NetworkRegistry reg;
    auto rs = random_dataset(rng, reg);
    emit_report(Dataset::build(rs, reg), a.path(), {Format::json, Format::csv});
    std::reverse(rs.begin(), rs.end());
    emit_report(Dataset::build(rs, reg), b.path(), {Format::json, Format::csv});
    for (const auto& name : report_sections()) {
        for (const char* ext : {".json", ".csv"}) {
            std::ifstream fa(a / (name + ext)), fb(b / (name + ext));
            std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
            EXPECT_EQ(sa, sb) << name << ext;
        }
    }
}
