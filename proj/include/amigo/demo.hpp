#pragma once

#include <filesystem>
#include <ostream>
#include <string>

#include "amigo/agent.hpp"
#include "amigo/analysis.hpp"
#include "amigo/simnet.hpp"

namespace amigo::demo {

enum class ProbeMode { model, live };

struct Options {
    simnet::Scenario scenario = simnet::default_scenario();
    int n_agents = 4;
    double days = 2;
    std::filesystem::path out_dir = "demo-out";
    ProbeMode probes = ProbeMode::model;
    Instant start = parse_rfc3339("2026-05-04T00:00:00Z");
    Millis step = std::chrono::minutes{5};
};

struct Result {
    analysis::Manifest manifest;
    std::filesystem::path report_dir;
    std::size_t stored_records = 0;
    std::size_t decisions = 0;
    std::size_t runs = 0;
    std::size_t fleet_size = 0;
};

/// Fictional operators spread over every continent.
NetworkRegistry registry();

/// Deterministic travel/battery/connectivity timeline for one device.
agent::ScriptedSensors timeline(std::uint64_t seed, int device_index, const NetworkRegistry& networks, Instant start,
                                double days);

agent::AgentConfig agent_config(const simnet::Endpoints& endpoints, const std::string& device_id,
                                const std::filesystem::path& spool_dir, const std::string& server_url,
                                std::uint64_t id_seed, ProbeMode mode);

/// A stats-for-nerds overlay log for one viewing session.
std::string youtube_log(std::uint64_t seed, const std::string& device_id, const std::string& network_id,
                        double throughput_share, Instant start, int samples);

/// Boots simnet and the control server, runs the agents over the simulated
/// days, then analyzes the store into out_dir/report. Stage failures throw
/// with the stage name in the message.
Result run(const Options& options, std::ostream& log);

}  // namespace amigo::demo
