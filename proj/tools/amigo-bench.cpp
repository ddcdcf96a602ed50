// amigo-bench: control server, agent, simulated network, analysis and demo
// behind one binary.

#include <csignal>
#include <ctime>
#include <fstream>
#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include "amigo/agent.hpp"
#include "amigo/analysis.hpp"
#include "amigo/demo.hpp"
#include "amigo/server.hpp"
#include "amigo/simnet.hpp"

using namespace amigo;

namespace {

sigset_t stop_signals() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    return set;
}

/// Waits up to `timeout` for SIGINT/SIGTERM; true when one arrived.
bool wait_for_stop(std::chrono::milliseconds timeout) {
    auto set = stop_signals();
    timespec ts{static_cast<time_t>(timeout.count() / 1000), static_cast<long>((timeout.count() % 1000) * 1000000)};
    return sigtimedwait(&set, nullptr, &ts) > 0;
}

void wait_for_stop() {
    auto set = stop_signals();
    int sig = 0;
    sigwait(&set, &sig);
}

simnet::Scenario scenario_or_default(const std::string& path) {
    return path.empty() ? simnet::default_scenario() : simnet::load_scenario(path);
}

Json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read " + path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw parse_error(path + ": " + e.what());
    }
}

int run_server(const std::string& listen, const std::string& data_dir) {
    server::ControlServer control(data_dir);
    server::HttpApi api(control, {net::parse_endpoint(listen, 8080)});
    api.start();
    std::cout << "listening on " << net::parse_endpoint(listen, 8080).host << ":" << api.port() << " data "
              << control.log_path().string() << std::endl;
    wait_for_stop();
    api.stop();
    return 0;
}

struct AgentArgs {
    std::string config;
    std::string sensors;
    std::string clock = "wall";
    std::string start;
    double duration_s = 86400;
    double step_s = 60;
    std::string probes = "live";
    std::string scenario;
};

int run_agent(const AgentArgs& a) {
    auto cfg = agent::load_agent_config(a.config);
    std::unique_ptr<agent::SensorSource> sensors;
    std::optional<Instant> timeline_start;
    if (!a.sensors.empty()) {
        auto scripted = std::make_unique<agent::ScriptedSensors>(agent::ScriptedSensors::load(a.sensors));
        timeline_start = scripted->points().front().at;
        sensors = std::move(scripted);
    } else {
        sensors = std::make_unique<agent::HostSensors>();
    }
    std::unique_ptr<probes::ProbeSuite> suite;
    if (a.probes == "model") suite = std::make_unique<simnet::Model>(scenario_or_default(a.scenario), cfg.device_id);
    else suite = std::make_unique<probes::LiveProbes>();
    agent::HttpLink link(cfg.server_url);
    agent::Agent ag(cfg, *sensors, link, *suite);

    const Millis step{std::llround(a.step_s * 1000.0)};
    if (step <= Millis::zero()) throw validation_error("--step must be positive");
    auto log_path = cfg.spool_dir / "decisions.jsonl";
    std::ofstream decision_log(log_path, std::ios::app);
    std::size_t written = 0;
    auto flush_decisions = [&] {
        for (; written < ag.decisions().size(); ++written) decision_log << Json(ag.decisions()[written]).dump() << '\n';
        decision_log.flush();
    };

    if (a.clock == "simulated") {
        Instant start = !a.start.empty() ? parse_rfc3339(a.start) : timeline_start.value_or(wall_now());
        Instant end = start + Millis{std::llround(a.duration_s * 1000.0)};
        for (Instant t = start; t < end; t += step) {
            ag.step(t);
            flush_decisions();
        }
        ag.report_tick(end);
    } else {
        do {
            ag.step(wall_now());
            flush_decisions();
        } while (!wait_for_stop(step));
    }
    std::size_t ran = 0;
    for (const auto& d : ag.decisions()) ran += d.ran;
    std::cout << Json{{"device_id", cfg.device_id},
                      {"decisions", ag.decisions().size()},
                      {"runs", ran},
                      {"spooled", ag.spool().size()},
                      {"upload_failures", ag.upload_failures()},
                      {"decision_log", log_path.string()}}
                     .dump()
              << std::endl;
    return 0;
}

int run_simnet(const std::string& scenario_path, const std::string& bind, const simnet::BindAddrs& ports,
               bool print_only) {
    auto scenario = scenario_or_default(scenario_path);
    if (print_only) {
        std::cout << simnet::scenario_to_json(scenario).dump(2) << std::endl;
        return 0;
    }
    auto addrs = ports;
    addrs.host = bind;
    auto harness = simnet::serve(scenario, addrs);
    const auto& ep = harness->endpoints();
    auto text = [](const net::Endpoint& e) { return e.host + ":" + std::to_string(e.port); };
    std::cout << Json{{"hop", text(ep.hop)}, {"throughput", text(ep.throughput)}, {"dns", text(ep.dns)},
                      {"http", text(ep.http)}}
                     .dump()
              << std::endl;
    wait_for_stop();
    harness->shutdown();
    return 0;
}

int run_analyze(const std::vector<std::string>& inputs, const std::string& registry_path, const std::string& out,
                const std::string& formats_text) {
    std::vector<analysis::Format> formats;
    std::stringstream ss(formats_text);
    for (std::string f; std::getline(ss, f, ',');) {
        if (f == "json") formats.push_back(analysis::Format::json);
        else if (f == "csv") formats.push_back(analysis::Format::csv);
        else throw validation_error("unknown format '" + f + "' (expected json, csv)");
    }
    if (formats.empty()) throw validation_error("--format needs at least one of json, csv");
    std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
    auto ds = analysis::Dataset::build(analysis::load_records(paths), NetworkRegistry::load_csv(registry_path));
    auto manifest = analysis::emit_report(ds, out, formats);
    std::cout << manifest.to_json().dump(2) << std::endl;
    return 0;
}

int run_scenario_check(const std::string& path) {
    auto scenario = simnet::parse_scenario(read_json(path));
    bool ok = true;
    for (const auto& c : simnet::validate_scenario(scenario)) {
        std::cout << (c.ok ? "PASS " : "FAIL ") << c.name;
        if (!c.ok && !c.detail.empty()) std::cout << ": " << c.detail;
        std::cout << "\n";
        ok = ok && c.ok;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    // Stop signals are taken synchronously by sigwait, so block them before
    // any thread starts.
    auto set = stop_signals();
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    CLI::App app{"Mobile network measurement test-bed"};
    app.require_subcommand(1);
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->envname("AMIGO_LOG");

    auto* srv = app.add_subcommand("server", "Run the control server");
    std::string listen = "127.0.0.1:8080", data_dir = "data";
    srv->add_option("--listen", listen, "Listen address host:port")->envname("LISTEN")->capture_default_str();
    srv->add_option("--data-dir", data_dir, "Directory for the store log")->envname("DATA_DIR")->capture_default_str();

    auto* agt = app.add_subcommand("agent", "Run a measurement agent");
    AgentArgs aa;
    agt->add_option("--config", aa.config, "Agent config (JSON)")->required();
    agt->add_option("--scripted-sensors", aa.sensors, "Sensor timeline (JSON) instead of host sensors");
    agt->add_option("--clock", aa.clock, "wall or simulated")->check(CLI::IsMember({"wall", "simulated"}))->capture_default_str();
    agt->add_option("--start", aa.start, "Simulated start instant (RFC 3339)");
    agt->add_option("--duration", aa.duration_s, "Simulated run length in seconds")->capture_default_str();
    agt->add_option("--step", aa.step_s, "Seconds between control-loop passes")->capture_default_str();
    agt->add_option("--probes", aa.probes, "live or model")->check(CLI::IsMember({"live", "model"}))->capture_default_str();
    agt->add_option("--scenario", aa.scenario, "Scenario for --probes model");

    auto* sim = app.add_subcommand("simnet", "Serve the simulated network");
    std::string sim_scenario, bind = "127.0.0.1";
    simnet::BindAddrs ports;
    bool print_scenario = false;
    sim->add_option("--scenario", sim_scenario, "Scenario file (JSON); built-in default when omitted");
    sim->add_option("--bind", bind, "Bind host")->capture_default_str();
    sim->add_option("--hop-port", ports.hop_port, "0 picks a free port");
    sim->add_option("--throughput-port", ports.throughput_port, "0 picks a free port");
    sim->add_option("--dns-port", ports.dns_port, "0 picks a free port");
    sim->add_option("--http-port", ports.http_port, "0 picks a free port");
    sim->add_flag("--print-scenario", print_scenario, "Print the scenario as JSON and exit");

    auto* ana = app.add_subcommand("analyze", "Build reports from record files");
    std::vector<std::string> inputs;
    std::string registry_path, out_dir, formats = "json,csv";
    ana->add_option("--input", inputs, "JSONL record files (server store or agent spools)")->required();
    ana->add_option("--registry", registry_path, "Network registry CSV")->required();
    ana->add_option("--out", out_dir, "Report directory")->required();
    ana->add_option("--format", formats, "Comma-separated: json, csv")->capture_default_str();

    auto* chk = app.add_subcommand("scenario-check", "Validate a scenario file");
    std::string check_path;
    chk->add_option("path", check_path, "Scenario file (JSON)")->required();

    auto* dem = app.add_subcommand("demo", "Run simnet, server and agents on a simulated clock, then analyze");
    std::string demo_scenario, demo_start, demo_probes = "model";
    demo::Options dopt;
    double step_s = 300;
    dem->add_option("--scenario", demo_scenario, "Scenario file (JSON); built-in default when omitted");
    dem->add_option("--agents", dopt.n_agents, "Number of agents")->capture_default_str();
    dem->add_option("--days", dopt.days, "Simulated days")->capture_default_str();
    dem->add_option("--out", dopt.out_dir, "Output directory")->capture_default_str();
    dem->add_option("--probes", demo_probes, "model or live")->check(CLI::IsMember({"model", "live"}))->capture_default_str();
    dem->add_option("--start", demo_start, "Simulated start instant (RFC 3339)");
    dem->add_option("--step", step_s, "Simulated seconds per control-loop pass")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    spdlog::set_default_logger(spdlog::stderr_color_mt("amigo"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*srv) return run_server(listen, data_dir);
        if (*agt) return run_agent(aa);
        if (*sim) return run_simnet(sim_scenario, bind, ports, print_scenario);
        if (*ana) return run_analyze(inputs, registry_path, out_dir, formats);
        if (*chk) return run_scenario_check(check_path);
        if (*dem) {
            if (!demo_scenario.empty()) dopt.scenario = simnet::load_scenario(demo_scenario);
            if (!demo_start.empty()) dopt.start = parse_rfc3339(demo_start);
            dopt.probes = demo_probes == "live" ? demo::ProbeMode::live : demo::ProbeMode::model;
            dopt.step = Millis{std::llround(step_s * 1000.0)};
            auto result = demo::run(dopt, std::cout);
            std::cout << "report: " << result.report_dir.string() << std::endl;
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "amigo-bench: " << e.what() << std::endl;
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "amigo-bench: " << e.what() << std::endl;
        return 2;
    }
    return 0;
}
