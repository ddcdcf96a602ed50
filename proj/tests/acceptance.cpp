// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "amigo/agent.hpp"
#include "amigo/analysis.hpp"
#include "amigo/demo.hpp"
#include "amigo/probes.hpp"
#include "amigo/server.hpp"
#include "amigo/simnet.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace amigo;
using amigo::test::at;
using amigo::test::TempDir;

namespace {

// Tolerances.
constexpr double kMissRatio = 3.0;
constexpr double kMissRatioTol = 0.05;  // relative
constexpr double kHopRttLo = 60, kHopRttHi = 75;
constexpr double kDownLo = 27, kDownHi = 33;
constexpr double kDnsLo = 40, kDnsHi = 60;
constexpr double kSpeedtestSeconds = 10;
constexpr std::size_t kMinDecisions = 200;
constexpr int kRandomDatasets = 100;
constexpr double kOracleEps = 1e-12;

constexpr Bytes GiB = Bytes{1} << 30;

struct Verdict {
    bool pass = false;
    std::string detail;
};

Verdict fail(std::string why) { return {false, std::move(why)}; }

// ---------------------------------------------------------------------------

Verdict classifier_table() {
    const std::vector<std::pair<double, SpeedClass>> speed{{14.999, SpeedClass::slow},
                                                           {15.0, SpeedClass::slow},
                                                           {15.001, SpeedClass::average},
                                                           {29.999, SpeedClass::average},
                                                           {30.0, SpeedClass::fast}};
    const std::vector<std::pair<double, LatencyClass>> lat{{20, LatencyClass::exceptional},
                                                           {21, LatencyClass::unclassified},
                                                           {50, LatencyClass::good_to_average},
                                                           {100, LatencyClass::good_to_average},
                                                           {149, LatencyClass::unclassified},
                                                           {150, LatencyClass::less_desirable}};
    const std::vector<std::pair<double, SpeedIndexClass>> si{
        {3.4, SpeedIndexClass::fast}, {3.5, SpeedIndexClass::moderate}, {5.8, SpeedIndexClass::slow}};
    for (auto [v, want] : speed)
        if (classify_speed(v) != want) return fail("classify_speed(" + std::to_string(v) + ")");
    for (auto [v, want] : lat)
        if (classify_latency(v) != want) return fail("classify_latency(" + std::to_string(v) + ")");
    for (auto [v, want] : si)
        if (classify_speed_index(v) != want) return fail("classify_speed_index(" + std::to_string(v) + ")");
    return {true, "14 cases exact"};
}

Verdict cache_header_table() {
    const std::vector<std::optional<std::string>> tokens{std::nullopt, "HIT", "MISS", "EXPIRED", "hit", " Miss "};
    std::vector<std::optional<std::string>> xcache{std::nullopt};
    for (const auto& a : tokens) {
        if (!a) continue;
        xcache.push_back(*a);
        for (const auto& b : tokens)
            if (b) xcache.push_back(*a + ", " + *b);
    }
    xcache.push_back("HIT, HIT, MISS");
    int cases = 0;
    for (const auto& cf : tokens)
        for (const auto& xc : xcache) {
            probes::HeaderList h;
            if (cf) h.emplace_back("cf-cache-status", *cf);
            if (xc) h.emplace_back("X-Cache", *xc);
            auto got = probes::parse_cache_headers(h);
            auto want = oracle::cache_headers(cf, xc);
            if (got.shield_status != want.shield || got.edge_status != want.edge)
                return fail("mismatch at cf=" + cf.value_or("-") + " x-cache=" + xc.value_or("-"));
            ++cases;
        }
    auto pair = probes::parse_cache_headers(probes::HeaderList{{"x-cache", "MISS, HIT"}});
    if (pair.shield_status != CacheStatus::miss || pair.edge_status != CacheStatus::hit)
        return fail("x-cache: MISS, HIT is not shield miss / edge hit");
    return {true, std::to_string(cases) + " header combinations"};
}

Verdict crux_forty_percent() {
    // tests per network 20; slow counts chosen so exactly 4 of 10 networks reach 0.8
    const int slow_counts[10] = {16, 17, 20, 18, 15, 10, 0, 12, 3, 14};
    std::vector<MeasurementRecord> rs;
    std::vector<std::pair<std::string, Continent>> nets;
    int id = 0;
    for (int n = 0; n < 10; ++n) {
        std::string net = "net-" + std::to_string(n);
        nets.emplace_back(net, Continent::europe);
        for (int t = 0; t < 20; ++t)
            rs.push_back(test::record("r" + std::to_string(id++), net, test::speed(t < slow_counts[n] ? 8.0 : 40.0)));
    }
    auto ds = analysis::Dataset::build(rs, test::registry_of(nets));
    auto fractions = analysis::per_network_fraction(ds, analysis::Metric::download_mbps, SpeedClass::slow);
    double got = analysis::crux_cdf(fractions).at_least(0.8);
    double want = oracle::at_least(oracle::slow_download_fraction(rs), 0.8);
    if (got != 0.40) return fail("at_least(0.8) = " + std::to_string(got));
    if (want != got) return fail("oracle recount " + std::to_string(want));
    return {true, "at_least(0.8) = 0.40, oracle agrees"};
}

Verdict cache_miss_penalty() {
    std::vector<MeasurementRecord> rs;
    const double hits[] = {18, 20, 21, 22, 25, 19, 23};
    int id = 0;
    for (double h : hits) {
        rs.push_back(test::record("h" + std::to_string(id), "net-0", test::cdn("Akamai", h, CacheStatus::hit)));
        rs.push_back(test::record("m" + std::to_string(id), "net-0", test::cdn("Akamai", 3 * h, CacheStatus::miss)));
        ++id;
    }
    auto ds = analysis::Dataset::build(rs, test::registry_of({{"net-0", Continent::europe}}));
    auto report = analysis::cdn_report(ds);
    double ratio = report.by_status.at({"Akamai", CacheStatus::miss}).median /
                   report.by_status.at({"Akamai", CacheStatus::hit}).median;
    std::ostringstream os;
    os << "miss/hit median ratio " << ratio;
    if (std::abs(ratio - kMissRatio) > kMissRatio * kMissRatioTol) return fail(os.str());
    return {true, os.str()};
}

Verdict probe_fidelity() {
    simnet::Scenario sc;
    sc.seed = 7;
    sc.targets = {{"google.sim", {10, 25, 60}, 2}};
    sc.dns.delay_ms = 40;
    sc.dns.records = {{"a.sim", "10.0.0.1"}};
    sc.throughput = {30, 10};
    auto harness = simnet::serve(sc);
    const auto& ep = harness->endpoints();
    auto path = probes::probe_latency(ep.hop, "google.sim", 30, 3).result;
    auto down = probes::probe_speed(ep.throughput, probes::Direction::down, kSpeedtestSeconds);
    auto dns = probes::probe_dns("a.sim", ep.dns).result;
    harness->shutdown();

    std::ostringstream os;
    os << "hops " << path.hop_count << ", final rtt " << path.final_avg_rtt_ms << " ms, down " << down.mbps
       << " Mbps, dns " << dns.lookup_ms << " ms";
    bool ok = path.complete && path.hop_count == 3 && path.final_avg_rtt_ms >= kHopRttLo &&
              path.final_avg_rtt_ms <= kHopRttHi && down.mbps >= kDownLo && down.mbps <= kDownHi && dns.success &&
              dns.lookup_ms >= kDnsLo && dns.lookup_ms <= kDnsHi;
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// Scheduler policy over two simulated days.

class BulkProbes final : public probes::ProbeSuite {
public:
    static constexpr Bytes kPerRun = GiB / 4;
    probes::Measured<SpeedtestResult> speedtest(const probes::ProbeContext&, const net::Endpoint&, double) override {
        throw validation_error("unused");
    }
    probes::Measured<LatencyResult> latency(const probes::ProbeContext&, const net::Endpoint&, const std::string&, int,
                                            int) override {
        throw validation_error("unused");
    }
    probes::Measured<DnsResult> dns(const probes::ProbeContext&, const std::string& domain,
                                    const net::Endpoint& resolver) override {
        auto r = test::dns(10, resolver.host);
        r.domain = domain;
        return {r, kPerRun};
    }
    probes::Measured<CdnResult> cdn(const probes::ProbeContext&, const std::string&, const std::string&,
                                    const std::optional<net::Endpoint>&) override {
        throw validation_error("unused");
    }
    probes::Measured<WebResult> web(const probes::ProbeContext&, const std::string&,
                                    const std::optional<net::Endpoint>&) override {
        throw validation_error("unused");
    }
};

class QuietLink final : public agent::ServerLink {
public:
    int post_status(const DeviceStatus&) override { return 0; }
    std::vector<Instruction> fetch_instructions(const std::string&) override { return {}; }
    void ack(const std::string&, const std::string&, const agent::AckOutcome&) override {}
    server::SubmitOutcome submit(const std::string&, const std::vector<MeasurementRecord>& rs) override {
        return {rs.size(), {}};
    }
};

struct RawPoint {
    int minute;
    std::optional<int> battery;
    Connectivity link;
};

Verdict scheduler_policy() {
    const Instant start = at("2026-05-04T00:00:00Z");
    // Day pattern: good, low battery, wifi, both, good again, sensor failure, good.
    const std::vector<RawPoint> day{{0, 80, Connectivity::mobile},   {120, 12, Connectivity::mobile},
                                    {180, 60, Connectivity::wifi},   {240, 60, Connectivity::both},
                                    {300, 70, Connectivity::mobile}, {900, std::nullopt, Connectivity::mobile},
                                    {960, 55, Connectivity::mobile}, {1320, 14, Connectivity::none}};
    std::vector<RawPoint> raw;
    for (int d = 0; d < 2; ++d)
        for (const auto& p : day) raw.push_back({p.minute + d * 1440, p.battery, p.link});
    std::vector<agent::ScriptedSensors::Point> pts;
    for (const auto& p : raw) {
        agent::SensorReading r;
        r.battery_pct = p.battery;
        r.connectivity = p.link;
        r.network_id = "net-1";
        pts.push_back({start + std::chrono::minutes{p.minute}, r});
    }
    agent::ScriptedSensors sensors(pts);

    TempDir dir;
    agent::AgentConfig cfg;
    cfg.device_id = "me-1";
    cfg.spool_dir = dir / "spool";
    cfg.id_seed = 1;
    ExperimentSpec spec;
    spec.id = "dns";
    spec.kind = ExperimentKind::dns;
    spec.params = Json{{"targets", {"a.sim"}}, {"resolver", "192.0.2.53"}};
    spec.schedule.battery_floor_pct = 15;
    spec.schedule.interval = std::chrono::minutes{30};
    spec.schedule.daily_data_cap = 4 * GiB;
    cfg.experiments = {spec};
    QuietLink link;
    BulkProbes probes;
    agent::Agent ag(cfg, sensors, link, probes);

    // Pauses, none spanning the 03:00 reset.
    const std::vector<std::pair<int, int>> pauses{{1440 + 600, 60}, {1440 + 1000, 45}};
    Instruction pause;
    pause.device_id = "me-1";
    pause.state = InstructionState::delivered;

    for (int minute = 0; minute < 2 * 1440; minute += 5) {
        const Instant t = start + std::chrono::minutes{minute};
        for (const auto& [m, len] : pauses)
            if (m == minute) {
                pause.kind = PauseKind{std::chrono::minutes{len}};
                ag.apply_instruction(pause, t);
            }
        ag.step(t);
    }

    // Independent replay: inputs re-derived from the raw timeline, the pause
    // list and a ledger rebuilt from run counts.
    const auto& log = ag.decisions();
    std::vector<std::string> violations;
    std::optional<Instant> last_run;
    std::map<std::int64_t, Bytes> ledger;
    int runs = 0, cap_blocks = 0;
    bool day2_ran_after_cap = false;
    for (const auto& d : log) {
        int minute = static_cast<int>(std::chrono::duration_cast<std::chrono::minutes>(d.at - start).count());
        const RawPoint* cur = &raw.front();
        for (const auto& p : raw)
            if (p.minute <= minute) cur = &p;
        const std::int64_t day_no = minute / 1440;
        const Bytes used = ledger[day_no];
        bool paused = false;
        for (const auto& [m, len] : pauses) paused |= minute >= m && minute < m + len;

        if (d.battery_pct != cur->battery || d.connectivity != cur->link) violations.push_back("sensor mismatch");
        if (d.data_used_today != used) violations.push_back("ledger mismatch");
        if (used >= 4 * GiB && !d.ran) ++cap_blocks;
        if (!d.ran) continue;
        ++runs;
        if (!cur->battery || *cur->battery < 15) violations.push_back("battery");
        if (cur->link != Connectivity::mobile) violations.push_back("connectivity");
        if (last_run && d.at < *last_run + std::chrono::minutes{30}) violations.push_back("interval");
        if (paused) violations.push_back("paused");
        if (used >= 4 * GiB) violations.push_back("data_cap");
        if (day_no == 1 && ledger[0] >= 4 * GiB) day2_ran_after_cap = true;
        ledger[day_no] += BulkProbes::kPerRun;
        last_run = d.at;
    }
    std::ostringstream os;
    os << log.size() << " decisions, " << runs << " runs, " << cap_blocks << " skipped at cap, " << violations.size()
       << " violations";
    if (!violations.empty()) return fail(os.str() + " (first: " + violations.front() + ")");
    if (log.size() < kMinDecisions) return fail(os.str());
    if (cap_blocks == 0 || !day2_ran_after_cap) return fail(os.str() + "; cap or rollover not exercised");
    if (ag.state().ledger.utc_day != utc_day(start + std::chrono::hours{24}) || ag.state().ledger.used != ledger[1])
        return fail(os.str() + "; final ledger not on day two");
    return {true, os.str()};
}

// ---------------------------------------------------------------------------
// Distributed system.

Verdict distributed_system() {
    std::mt19937_64 rng(2026);
    TempDir dir, scratch;
    std::int64_t clock_ms = at("2026-05-04T12:00:00Z").time_since_epoch().count();
    server::Clock clock = [&] { return Instant{Millis{clock_ms}}; };
    server::ControlServer srv(dir.path(), clock);
    const std::vector<std::string> devices{"a", "b", "c"};
    std::map<std::string, int> rank;
    auto rank_of = [](InstructionState s) {
        return s == InstructionState::pending ? 0 : s == InstructionState::delivered ? 1 : 2;
    };
    int replays = 0;
    for (int step = 0; step < 300; ++step) {
        clock_ms += 1000;
        const auto& dev = devices[rng() % devices.size()];
        switch (rng() % 5) {
            case 0: {
                DeviceStatus s;
                s.device_id = dev;
                s.timestamp = clock();
                s.battery_pct = 50;
                s.connectivity = Connectivity::mobile;
                srv.ingest_status(s);
                break;
            }
            case 1: {
                Instruction i;
                i.device_id = dev;
                i.kind = PauseKind{std::chrono::minutes{5}};
                srv.enqueue_instruction(i);
                break;
            }
            case 2: srv.fetch_instructions(dev); break;
            case 3: {
                auto all = srv.device_instructions(dev);
                if (all.empty()) break;
                try {
                    srv.ack_instruction(dev, all[rng() % all.size()].id,
                                        rng() % 2 ? InstructionState::acked : InstructionState::failed, "");
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::state_machine) throw;
                }
                break;
            }
            default:
                srv.submit_results(dev, std::vector<MeasurementRecord>{test::record(
                                            "r" + std::to_string(rng() % 40), "net-1", test::dns(5), clock(), dev)});
        }
        for (const auto& d : devices)
            for (const auto& i : srv.device_instructions(d)) {
                int r = rank_of(i.state);
                auto [it, fresh] = rank.emplace(i.id, r);
                if (!fresh && r < it->second) return fail("instruction " + i.id + " moved backwards");
                it->second = r;
            }
        if (step % 10 == 0) {
            auto copy = scratch / ("r" + std::to_string(step));
            std::filesystem::create_directories(copy);
            std::filesystem::copy_file(srv.log_path(), copy / "store.jsonl");
            if (server::ControlServer(copy, clock).state() != srv.state())
                return fail("replay differs at step " + std::to_string(step));
            ++replays;
        }
    }

    // Upload retry across a three-tick outage.
    TempDir store, spool;
    server::ControlServer target(store.path());
    agent::LocalLink local(target);
    bool down = true;
    agent::FlakyLink flaky(local, [&] { return down; });
    agent::AgentConfig cfg;
    cfg.device_id = "me-1";
    cfg.spool_dir = spool.path();
    cfg.id_seed = 9;
    ExperimentSpec spec;
    spec.id = "dns";
    spec.kind = ExperimentKind::dns;
    spec.params = Json{{"targets", {"a.sim", "b.sim"}}, {"resolver", "192.0.2.53"}};
    cfg.experiments = {spec};
    agent::SensorReading reading;
    reading.battery_pct = 90;
    reading.connectivity = Connectivity::mobile;
    reading.network_id = "net-1";
    agent::ScriptedSensors sensors({{at("2026-05-04T00:00:00Z"), reading}});
    BulkProbes probes;
    agent::Agent ag(cfg, sensors, flaky, probes);
    std::set<std::string> produced;
    Instant t = at("2026-05-04T12:00:00Z");
    for (int tick = 0; tick < 3; ++tick, t += std::chrono::minutes{5}) {
        for (const auto& r : ag.run_experiment(spec, t)) produced.insert(r.record_id);
        ag.report_tick(t);
    }
    if (target.record_count() != 0) return fail("records stored while the server was down");
    down = false;
    ag.report_tick(t);
    ag.report_tick(t + std::chrono::minutes{5});
    std::set<std::string> stored;
    for (const auto& r : target.records("me-1")) stored.insert(r.record_id);
    if (stored != produced || target.record_count() != produced.size() || !ag.spool().empty())
        return fail("stored " + std::to_string(target.record_count()) + " of " + std::to_string(produced.size()));

    std::ostringstream os;
    os << rank.size() << " instructions monotone, " << replays << " replays equal, " << produced.size()
       << " records stored once after outage";
    return {true, os.str()};
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> json_outputs(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() != ".json") continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        out[e.path().filename().string()] = ss.str();
    }
    return out;
}

Verdict demo_determinism() {
    TempDir a, b;
    std::ostringstream sink;
    demo::Options opt;
    opt.out_dir = a.path();
    auto ra = demo::run(opt, sink);
    opt.out_dir = b.path();
    auto rb = demo::run(opt, sink);
    auto ja = json_outputs(ra.report_dir), jb = json_outputs(rb.report_dir);
    if (ja.empty()) return fail("no JSON outputs");
    if (ja != jb) {
        for (const auto& [name, text] : ja)
            if (jb[name] != text) return fail(name + " differs");
        return fail("file sets differ");
    }
    return {true, std::to_string(ja.size()) + " JSON files identical, " + std::to_string(ra.stored_records) +
                      " records"};
}

Verdict oracle_equivalence() {
    std::mt19937_64 rng(5);
    int compared = 0;
    for (int k = 0; k < kRandomDatasets; ++k) {
        int n_nets = 1 + static_cast<int>(rng() % 5);
        std::vector<std::pair<std::string, Continent>> nets;
        for (int i = 0; i < n_nets; ++i) nets.emplace_back("n" + std::to_string(i), Continent::asia);
        std::vector<MeasurementRecord> rs;
        std::uniform_real_distribution<double> mbps(0, 60), rtt(5, 200);
        int n_rec = static_cast<int>(rng() % 21);
        for (int i = 0; i < n_rec; ++i) {
            const auto& net = nets[rng() % nets.size()].first;
            // values on the class edges show up often
            double v = rng() % 4 == 0 ? 15.0 : std::round(mbps(rng) * 4) / 4;
            double r = rng() % 4 == 0 ? 20.0 : std::round(rtt(rng));
            if (rng() % 2) {
                rs.push_back(test::record("s" + std::to_string(i), net, test::speed(v)));
            } else {
                auto l = test::latency(r);
                if (rng() % 6 == 0) l.complete = false;
                rs.push_back(test::record("l" + std::to_string(i), net, l));
            }
        }
        auto ds = analysis::Dataset::build(rs, test::registry_of(nets));
        auto slow = analysis::per_network_fraction(ds, analysis::Metric::download_mbps, SpeedClass::slow);
        auto fast_rtt = analysis::per_network_fraction(ds, analysis::Metric::rtt_ms, LatencyClass::exceptional);
        auto want_slow = oracle::slow_download_fraction(ds.records);
        auto want_rtt = oracle::exceptional_rtt_fraction(ds.records);
        auto close = [](const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
            if (a.size() != b.size()) return false;
            for (const auto& [k, v] : a)
                if (!b.count(k) || std::abs(b.at(k) - v) > kOracleEps) return false;
            return true;
        };
        if (!close(slow, want_slow)) return fail("slow-download fractions, dataset " + std::to_string(k));
        if (!close(fast_rtt, want_rtt)) return fail("exceptional-rtt fractions, dataset " + std::to_string(k));
        for (double p : {0.0, 0.2, 0.5, 0.8, 1.0}) {
            if (!slow.empty() &&
                std::abs(analysis::crux_cdf(slow).at_least(p) - oracle::at_least(want_slow, p)) > kOracleEps)
                return fail("at_least, dataset " + std::to_string(k));
        }
        std::vector<double> values;
        for (const auto& r : ds.records)
            if (auto v = analysis::metric_value(r, analysis::Metric::download_mbps)) values.push_back(*v);
        if (!values.empty()) {
            auto got = analysis::box_stats(values);
            auto want = oracle::box(values);
            for (auto [x, y] : {std::pair{got.q1, want.q1}, {got.median, want.median}, {got.q3, want.q3},
                                {got.whisker_low, want.whisker_low}, {got.whisker_high, want.whisker_high}})
                if (std::abs(x - y) > kOracleEps) return fail("box_stats, dataset " + std::to_string(k));
            auto go = got.outliers, wo = want.outliers;
            std::sort(go.begin(), go.end());
            std::sort(wo.begin(), wo.end());
            if (go != wo) return fail("box_stats outliers, dataset " + std::to_string(k));
        }
        ++compared;
    }
    return {true, std::to_string(compared) + " datasets agree"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"classifier-boundary-table", classifier_table},
        {"cache-header-table", cache_header_table},
        {"crux-40-percent-slow", crux_forty_percent},
        {"cdn-miss-penalty-3x", cache_miss_penalty},
        {"probe-fidelity-vs-simnet", probe_fidelity},
        {"scheduler-policy-2-days", scheduler_policy},
        {"distributed-system", distributed_system},
        {"demo-determinism", demo_determinism},
        {"oracle-equivalence", oracle_equivalence},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = fail(std::string("exception: ") + e.what());
        }
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (v.pass ? "PASS " : "FAIL ") << name << " (" << v.detail << ") [" << ms << " ms]" << std::endl;
        failed += !v.pass;
    }
    return failed;
}
