#include "amigo/demo.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>

#include "amigo/server.hpp"

namespace amigo::demo {

namespace {

struct Site {
    const char* network_id;
    const char* operator_name;
    const char* country;
    Continent continent;
    double lat, lon;
};

constexpr Site kSites[] = {
    {"net-eu-1", "Nordlicht Mobil", "DE", Continent::europe, 52.52, 13.40},
    {"net-eu-2", "Aurora Telecom", "FR", Continent::europe, 48.86, 2.35},
    {"net-eu-3", "Fjord Mobile", "NO", Continent::europe, 59.91, 10.75},
    {"net-as-1", "Sakura Wave", "JP", Continent::asia, 35.68, 139.69},
    {"net-as-2", "Lotus Cellular", "IN", Continent::asia, 28.61, 77.21},
    {"net-af-1", "Savanna Cell", "KE", Continent::africa, -1.29, 36.82},
    {"net-af-2", "Baobab Telecom", "ZA", Continent::africa, -26.20, 28.05},
    {"net-sa-1", "Condor Movil", "MX", Continent::central_south_america, 19.43, -99.13},
    {"net-sa-2", "Pampa Net", "AR", Continent::central_south_america, -34.60, -58.38},
    {"net-au-1", "Wattle Mobile", "AU", Continent::australia, -33.87, 151.21},
    {"net-au-2", "Coral Connect", "NZ", Continent::australia, -36.85, 174.76},
};

const Site* site_of(const std::string& network_id) {
    for (const auto& s : kSites)
        if (network_id == s.network_id) return &s;
    return nullptr;
}

std::string url(const net::Endpoint& ep, const std::string& path) {
    return "http://" + ep.host + ":" + std::to_string(ep.port) + path;
}

std::string endpoint_text(const net::Endpoint& ep) { return ep.host + ":" + std::to_string(ep.port); }

[[noreturn]] void stage_failed(const std::string& stage, const Error& e) {
    throw Error(e.kind(), "stage " + stage + ": " + e.what());
}

template <typename F>
auto stage(const std::string& name, std::ostream& log, F&& f) {
    log << "[demo] " << name << "\n";
    try {
        return f();
    } catch (const Error& e) {
        stage_failed(name, e);
    } catch (const std::exception& e) {
        stage_failed(name, Error(ErrorKind::io, e.what()));
    }
}

}  // namespace

NetworkRegistry registry() {
    NetworkRegistry r;
    for (const auto& s : kSites) r.add(s.network_id, {s.operator_name, s.country, s.continent});
    return r;
}

agent::ScriptedSensors timeline(std::uint64_t seed, int device_index, const NetworkRegistry& networks, Instant start,
                                double days) {
    const std::string key = "device/" + std::to_string(device_index);
    std::vector<std::string> ids;
    for (const auto& [id, info] : networks.entries()) ids.push_back(id);
    if (ids.empty()) throw validation_error("demo timeline needs a non-empty registry");

    const Millis tick = std::chrono::minutes{15};
    const auto n_ticks = static_cast<std::int64_t>(std::ceil(days * 24 * 4)) + 1;
    double battery = 55 + 40 * simnet::keyed_uniform(seed, key + "/battery0", 0);
    std::vector<agent::ScriptedSensors::Point> points;
    for (std::int64_t k = 0; k < n_ticks; ++k) {
        Instant at = start + tick * k;
        auto idx = static_cast<std::uint64_t>(k);
        // Twelve-hour legs; each leg lands on a network drawn for this device.
        auto leg = static_cast<std::uint64_t>(k / 48);
        const auto& network_id =
            ids[(static_cast<std::size_t>(device_index) * 3 + simnet::keyed_hash(seed, key + "/leg", leg)) % ids.size()];
        int hour = utc_hour(at);
        bool night = hour >= 22 || hour < 7;
        double u = simnet::keyed_uniform(seed, key + "/link", idx);

        agent::SensorReading r;
        r.connectivity = night ? Connectivity::wifi : (u < 0.08 ? Connectivity::both : Connectivity::mobile);
        if (night) {
            battery = std::min(100.0, battery + 8);
        } else {
            battery = std::max(3.0, battery - 1.2 - 2.4 * simnet::keyed_uniform(seed, key + "/drain", idx));
        }
        if (simnet::keyed_uniform(seed, key + "/battery-fault", idx) >= 0.02)
            r.battery_pct = static_cast<int>(std::lround(battery));
        const auto& info = *networks.find(network_id);
        r.operator_name = info.operator_name;
        r.network_id = network_id;
        if (const auto* site = site_of(network_id)) r.gps = GeoPoint{site->lat, site->lon};
        points.push_back({at, r});
    }
    return agent::ScriptedSensors(std::move(points));
}

agent::AgentConfig agent_config(const simnet::Endpoints& ep, const std::string& device_id,
                                const std::filesystem::path& spool_dir, const std::string& server_url,
                                std::uint64_t id_seed, ProbeMode mode) {
    agent::AgentConfig c;
    c.device_id = device_id;
    c.server_url = server_url;
    c.spool_dir = spool_dir;
    c.id_seed = id_seed;
    auto spec = [&](std::string id, ExperimentKind kind, Json params) {
        ExperimentSpec s;
        s.id = std::move(id);
        s.kind = kind;
        s.params = std::move(params);
        s.schedule = c.default_schedule;
        c.experiments.push_back(std::move(s));
    };
    const Json sim_targets = {"google.sim", "facebook.sim", "amazon.sim"};
    Json resolvers = {endpoint_text(ep.dns)};
    if (mode == ProbeMode::model) resolvers.push_back("8.8.8.8:53");
    spec("speedtest", ExperimentKind::speedtest,
         {{"server", endpoint_text(ep.throughput)}, {"duration_s", mode == ProbeMode::model ? 10.0 : 1.0}});
    spec("latency", ExperimentKind::latency,
         {{"server", endpoint_text(ep.hop)}, {"targets", sim_targets}, {"probes_per_hop", 3}});
    spec("dns", ExperimentKind::dns, {{"targets", sim_targets}, {"resolvers", resolvers}});
    for (const auto& [cdn, path] : std::vector<std::pair<std::string, std::string>>{
             {"cloudflare", "/cloudflare/jquery.min.js"},
             {"jsdelivr", "/jsdelivr/jquery.min.js"},
             {"google", "/ajax/jquery.min.js"},
             {"highwinds", "/highwinds/jquery.min.js"}})
        spec("cdn-" + cdn, ExperimentKind::cdn, {{"cdn", cdn}, {"targets", {url(ep.http, path)}}});
    spec("web", ExperimentKind::web, {{"targets", {url(ep.http, "/news/index.html")}}});
    agent::validate(c);
    return c;
}

std::string youtube_log(std::uint64_t seed, const std::string& device_id, const std::string& network_id,
                        double throughput_share, Instant start, int samples) {
    static constexpr std::pair<int, int> kSizes[] = {{256, 144}, {426, 240}, {640, 360}, {854, 480}, {1280, 720}};
    std::string out;
    const std::string key = "youtube/" + device_id + "/" + network_id;
    for (int i = 0; i < samples; ++i) {
        auto idx = static_cast<std::uint64_t>(i);
        double q = throughput_share * (0.6 + 0.8 * simnet::keyed_uniform(seed, key, idx, 0));
        int level = q > 0.55 ? 4 : q > 0.35 ? 3 : q > 0.2 ? 2 : q > 0.1 ? 1 : 0;
        auto [w, h] = kSizes[level];
        double buffer = 2 + 28 * simnet::keyed_uniform(seed, key, idx, 1);
        int dropped = static_cast<int>(6 * simnet::keyed_uniform(seed, key, idx, 2));
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "[%s]\nCurrent / Optimal Res: %dx%d@30 / 1280x720@30\nBuffer Health: %.2f s\n"
                      "Viewport / Frames: 1280x720 / %d dropped of %d\n\n",
                      format_rfc3339(start + std::chrono::seconds{10} * i).c_str(), w, h, buffer, dropped,
                      300 * (i + 1));
        out += buf;
    }
    return out;
}

Result run(const Options& opt, std::ostream& log) {
    stage("scenario-check", log, [&] {
        for (const auto& c : simnet::validate_scenario(opt.scenario))
            if (!c.ok) throw validation_error("scenario check failed: " + c.name + (c.detail.empty() ? "" : " (" + c.detail + ")"));
        if (opt.n_agents < 1) throw validation_error("n_agents must be at least 1");
        if (!(opt.days > 0)) throw validation_error("days must be positive");
        if (opt.step <= Millis::zero()) throw validation_error("step must be positive");
        return 0;
    });

    const auto data_dir = opt.out_dir / "data";
    const auto agents_dir = opt.out_dir / "agents";
    const auto report_dir = opt.out_dir / "report";
    const auto networks = registry();
    stage("prepare", log, [&] {
        for (const auto& d : {data_dir, agents_dir, report_dir}) std::filesystem::remove_all(d);
        std::filesystem::create_directories(data_dir);
        std::filesystem::create_directories(agents_dir);
        std::ofstream reg(opt.out_dir / "registry.csv");
        reg << networks.to_csv();
        if (!reg) throw io_error("cannot write " + (opt.out_dir / "registry.csv").string());
        return 0;
    });

    auto harness = stage("simnet", log, [&] { return simnet::serve(opt.scenario); });
    const auto endpoints = harness->endpoints();

    std::atomic<std::int64_t> server_ms{opt.start.time_since_epoch().count()};
    auto clock = [&server_ms] { return Instant{Millis{server_ms.load()}}; };
    auto control = stage("server", log, [&] {
        return std::make_unique<server::ControlServer>(data_dir, clock, opt.scenario.seed);
    });
    auto api = stage("server", log, [&] {
        auto a = std::make_unique<server::HttpApi>(*control, server::HttpOptions{{"127.0.0.1", 0}});
        a->start();
        return a;
    });
    const std::string server_url = "http://127.0.0.1:" + std::to_string(api->port());

    std::vector<std::string> devices;
    for (int i = 0; i < opt.n_agents; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "me-%03d", i + 1);
        devices.push_back(id);
    }

    stage("instructions", log, [&] {
        const std::vector<InstructionKind> kinds{PauseKind{std::chrono::minutes{60}}, RunNowKind{"speedtest"},
                                                 OpenTunnelKind{"ctrl.example", 2222},
                                                 UpdateConfigKind{"report_interval_s", "300"}};
        for (std::size_t i = 0; i < devices.size(); ++i) {
            Instruction instr;
            instr.device_id = devices[i];
            instr.kind = kinds[i % kinds.size()];
            control->enqueue_instruction(instr);
        }
        return 0;
    });

    const Instant end = opt.start + std::chrono::duration_cast<Millis>(std::chrono::duration<double, std::ratio<86400>>(opt.days));
    std::vector<std::size_t> decisions(devices.size()), runs(devices.size());
    stage("agents", log, [&] {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(devices.size());
        for (std::size_t i = 0; i < devices.size(); ++i) {
            threads.emplace_back([&, i] {
                try {
                    const auto& device = devices[i];
                    auto sensors = timeline(opt.scenario.seed, static_cast<int>(i), networks, opt.start, opt.days);
                    agent::HttpLink link(server_url);
                    simnet::Model model(opt.scenario, device);
                    probes::LiveProbes live;
                    probes::ProbeSuite& suite = opt.probes == ProbeMode::model
                                                    ? static_cast<probes::ProbeSuite&>(model)
                                                    : static_cast<probes::ProbeSuite&>(live);
                    auto cfg = agent_config(endpoints, device, agents_dir / device, server_url,
                                            simnet::keyed_hash(opt.scenario.seed, "record-ids/" + device, 0),
                                            opt.probes);
                    agent::Agent a(cfg, sensors, link, suite);
                    std::int64_t last_video_day = -1;
                    for (Instant t = opt.start; t < end; t += opt.step) {
                        a.step(t);
                        auto reading = sensors.read(t);
                        if (utc_hour(t) >= 12 && utc_day(t) != last_video_day &&
                            reading.connectivity == Connectivity::mobile) {
                            last_video_day = utc_day(t);
                            auto text = youtube_log(opt.scenario.seed, device, reading.network_id,
                                                    model.profile(reading.network_id).throughput_share, t, 12);
                            auto parsed = probes::parse_youtube_stats(text);
                            a.spool_records({{a.next_record_id(), device, reading.network_id,
                                              ExperimentKind::youtube, t, parsed.series}});
                        }
                    }
                    // Final flush so every spooled record reaches the server.
                    a.report_tick(end);
                    if (!a.spool().empty())
                        throw network_error(device + ": " + std::to_string(a.spool().size()) + " records left unsent");
                    decisions[i] = a.decisions().size();
                    runs[i] = static_cast<std::size_t>(std::count_if(a.decisions().begin(), a.decisions().end(),
                                                                     [](const auto& d) { return d.ran; }));
                    std::ofstream dl(agents_dir / device / "decisions.jsonl");
                    for (const auto& d : a.decisions()) dl << Json(d).dump() << '\n';
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        return 0;
    });
    server_ms = end.time_since_epoch().count();

    Result result;
    result.fleet_size = control->fleet_snapshot().size();
    result.stored_records = control->record_count();
    for (std::size_t i = 0; i < devices.size(); ++i) {
        result.decisions += decisions[i];
        result.runs += runs[i];
    }

    stage("shutdown", log, [&] {
        api->stop();
        control.reset();
        harness->shutdown();
        return 0;
    });

    result.report_dir = report_dir;
    result.manifest = stage("analyze", log, [&] {
        auto records = analysis::load_records({data_dir / "store.jsonl"});
        auto ds = analysis::Dataset::build(std::move(records), networks);
        return analysis::emit_report(ds, report_dir, {analysis::Format::json, analysis::Format::csv});
    });
    log << "[demo] done: " << result.stored_records << " records from " << devices.size() << " agents, "
        << result.runs << " experiment runs over " << result.decisions << " decisions\n";
    return result;
}

}  // namespace amigo::demo
