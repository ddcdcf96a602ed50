#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "amigo/domain.hpp"
#include "amigo/probes.hpp"
#include "amigo/server.hpp"

namespace amigo::agent {

struct AgentConfig {
    std::string device_id;
    std::string server_url = "http://127.0.0.1:8080";
    Millis report_interval = std::chrono::minutes{5};
    ScheduleRule default_schedule;
    std::vector<ExperimentSpec> experiments;
    std::filesystem::path spool_dir = "spool";
    int nightly_reset_hour = 3;  // UTC
    std::string agent_version = "amigo-agent/1";
    std::optional<std::uint64_t> id_seed;  // reproducible record ids
    bool operator==(const AgentConfig&) const = default;
};

void validate(const AgentConfig& config);

/// Experiments without their own "schedule" inherit "schedule" from the
/// top level.
AgentConfig parse_agent_config(const Json& doc);
AgentConfig load_agent_config(const std::filesystem::path& path);
Json agent_config_to_json(const AgentConfig& config);

struct DataLedger {
    std::int64_t utc_day = 0;
    Bytes used = 0;
    bool operator==(const DataLedger&) const = default;
};

struct AgentState {
    std::optional<Instant> paused_until;
    std::map<std::string, Instant> last_run;
    DataLedger ledger;
    std::set<std::string> forced;  // run_now requests not yet executed
    bool operator==(const AgentState&) const = default;
};

Json state_to_json(const AgentState& s);
AgentState state_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Sensors.

/// One sample of the environment. Absent fields are sensor failures.
struct SensorReading {
    std::optional<int> battery_pct;
    std::optional<Connectivity> connectivity;
    std::string operator_name;
    std::string network_id;
    std::optional<GeoPoint> gps;
    bool operator==(const SensorReading&) const = default;
};

class SensorSource {
public:
    virtual ~SensorSource() = default;
    virtual SensorReading read(Instant now) = 0;
};

/// Step-function timeline: the reading at t is the last point at or
/// before t; fields a point omits carry over from the previous point, and
/// an explicit null marks that sensor as failed from then on.
class ScriptedSensors final : public SensorSource {
public:
    struct Point {
        Instant at{};
        SensorReading reading;
    };

    explicit ScriptedSensors(std::vector<Point> points);
    static ScriptedSensors parse(const Json& doc);
    static ScriptedSensors load(const std::filesystem::path& path);

    SensorReading read(Instant now) override;
    const std::vector<Point>& points() const { return points_; }

private:
    std::vector<Point> points_;
};

/// Reads battery and link state from sysfs where present; operator,
/// network id and GPS come from AMIGO_OPERATOR, AMIGO_NETWORK_ID and
/// AMIGO_GPS ("lat,lon").
class HostSensors final : public SensorSource {
public:
    explicit HostSensors(std::filesystem::path sys_root = "/sys");
    SensorReading read(Instant now) override;

private:
    std::filesystem::path sys_root_;
};

// ---------------------------------------------------------------------------
// Server link.

struct AckOutcome {
    InstructionState state = InstructionState::acked;
    std::string detail;
};

class ServerLink {
public:
    virtual ~ServerLink() = default;
    virtual int post_status(const DeviceStatus& status) = 0;
    virtual std::vector<Instruction> fetch_instructions(const std::string& device_id) = 0;
    virtual void ack(const std::string& device_id, const std::string& instruction_id, const AckOutcome& outcome) = 0;
    virtual server::SubmitOutcome submit(const std::string& device_id,
                                         const std::vector<MeasurementRecord>& records) = 0;
};

/// Calls a ControlServer in the same process.
class LocalLink final : public ServerLink {
public:
    explicit LocalLink(server::ControlServer& server) : server_(server) {}
    int post_status(const DeviceStatus& status) override;
    std::vector<Instruction> fetch_instructions(const std::string& device_id) override;
    void ack(const std::string& device_id, const std::string& instruction_id, const AckOutcome& outcome) override;
    server::SubmitOutcome submit(const std::string& device_id, const std::vector<MeasurementRecord>& records) override;

private:
    server::ControlServer& server_;
};

/// Talks to the control server's HTTP API. Transport failures and 5xx
/// answers raise network errors; 4xx answers raise the matching kind.
class HttpLink final : public ServerLink {
public:
    explicit HttpLink(const std::string& server_url, Millis timeout = std::chrono::seconds{10});
    ~HttpLink() override;
    int post_status(const DeviceStatus& status) override;
    std::vector<Instruction> fetch_instructions(const std::string& device_id) override;
    void ack(const std::string& device_id, const std::string& instruction_id, const AckOutcome& outcome) override;
    server::SubmitOutcome submit(const std::string& device_id, const std::vector<MeasurementRecord>& records) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Wraps a link and fails every call with a network error while down()
/// returns true.
class FlakyLink final : public ServerLink {
public:
    FlakyLink(ServerLink& inner, std::function<bool()> down) : inner_(inner), down_(std::move(down)) {}
    int post_status(const DeviceStatus& status) override;
    std::vector<Instruction> fetch_instructions(const std::string& device_id) override;
    void ack(const std::string& device_id, const std::string& instruction_id, const AckOutcome& outcome) override;
    server::SubmitOutcome submit(const std::string& device_id, const std::vector<MeasurementRecord>& records) override;

private:
    void check() const;
    ServerLink& inner_;
    std::function<bool()> down_;
};

// ---------------------------------------------------------------------------
// Spool.

/// Durable FIFO of records awaiting upload: one JSONL file per UTC day of
/// the record timestamp, named spool-YYYY-MM-DD.jsonl.
class Spool {
public:
    explicit Spool(std::filesystem::path dir);

    void push(const MeasurementRecord& rec);
    std::vector<MeasurementRecord> front(std::size_t n) const;
    void pop(std::size_t n);
    std::size_t size() const { return queue_.size(); }
    bool empty() const { return queue_.empty(); }

private:
    struct Entry {
        std::string file;
        MeasurementRecord record;
    };
    void rewrite(const std::string& file);

    std::filesystem::path dir_;
    std::deque<Entry> queue_;
};

// ---------------------------------------------------------------------------
// Scheduling.

/// Inputs of one scheduling decision, as logged.
struct Decision {
    Instant at{};
    std::string experiment_id;
    bool ran = false;
    bool forced = false;
    std::optional<int> battery_pct;
    Connectivity connectivity = Connectivity::none;
    Bytes data_used_today = 0;
    std::optional<Instant> last_run;
    std::optional<Instant> paused_until;
    ScheduleRule rule;
    std::string reason;  // first failing gate, or "ok"
    bool operator==(const Decision&) const = default;
};

void to_json(Json& j, const Decision& d);
void from_json(const Json& j, Decision& d);

/// The first failing gate for running spec now, or nullopt when every gate
/// holds. forced skips only the interval gate.
std::optional<std::string> blocking_gate(const ExperimentSpec& spec, const AgentState& state,
                                         const DeviceStatus& status, Instant now, bool forced = false);

inline bool should_run(const ExperimentSpec& spec, const AgentState& state, const DeviceStatus& status, Instant now,
                       bool forced = false) {
    return !blocking_gate(spec, state, status, now, forced);
}

class Agent {
public:
    Agent(AgentConfig config, SensorSource& sensors, ServerLink& link, probes::ProbeSuite& probes);

    DeviceStatus collect_status(Instant now);
    std::vector<MeasurementRecord> run_experiment(const ExperimentSpec& spec, Instant now);
    AckOutcome apply_instruction(const Instruction& instr, Instant now);
    void account_data(Bytes bytes, Instant now);
    void nightly_reset(Instant now);
    void report_tick(Instant now);

    /// One pass of the control loop: nightly reset and status report when
    /// due, then a scheduling decision per experiment.
    void step(Instant now);

    /// Queues externally produced records (e.g. parsed stats-for-nerds logs).
    void spool_records(const std::vector<MeasurementRecord>& records);

    const AgentConfig& config() const { return config_; }
    const AgentState& state() const { return state_; }
    const std::vector<Decision>& decisions() const { return decisions_; }
    const Spool& spool() const { return spool_; }
    std::size_t upload_failures() const { return upload_failures_; }
    std::string next_record_id();

private:
    bool update_config(const std::string& key, const std::string& value);
    void save_state() const;
    void upload_spool();
    void flush_acks();
    MeasurementRecord make_record(ExperimentKind kind, Payload payload, const std::string& network_id, Instant now);

    AgentConfig config_;
    SensorSource& sensors_;
    ServerLink& link_;
    probes::ProbeSuite& probes_;
    AgentState state_;
    Spool spool_;
    IdGenerator ids_;
    std::vector<Decision> decisions_;
    std::vector<std::pair<std::string, AckOutcome>> unsent_acks_;
    std::optional<Instant> last_report_;
    std::optional<std::int64_t> last_reset_day_;
    std::string network_id_;
    std::size_t upload_failures_ = 0;
};

}  // namespace amigo::agent
