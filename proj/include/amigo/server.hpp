#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "amigo/domain.hpp"
#include "amigo/net.hpp"

namespace amigo::server {

using Clock = std::function<Instant()>;

inline constexpr Millis kStaleAfter = std::chrono::minutes{15};

struct DeviceSummary {
    std::string device_id;
    Instant last_seen{};
    std::optional<int> battery_pct;
    Connectivity connectivity = Connectivity::none;
    std::string operator_name;
    std::string network_id;
    Bytes data_used_today = 0;
    bool stale = false;
    bool operator==(const DeviceSummary&) const = default;
};

void to_json(Json& j, const DeviceSummary& v);

struct Reject {
    std::size_t index = 0;
    std::string record_id;
    std::string reason;
};

struct SubmitOutcome {
    std::size_t accepted = 0;
    std::vector<Reject> rejected;
};

Json to_json(const SubmitOutcome& o);

struct RecordQuery {
    std::optional<ExperimentKind> kind;
    std::optional<std::size_t> limit;  // most recent N
};

/// Append-only JSONL log. Each append is one write of one complete line,
/// flushed before returning.
class Log {
public:
    explicit Log(std::filesystem::path path);
    ~Log();
    Log(const Log&) = delete;
    Log& operator=(const Log&) = delete;

    void append(const Json& entry);
    const std::filesystem::path& path() const { return path_; }

    /// Reads every complete entry. A torn final line (crash mid-write) is
    /// dropped and truncated away so later appends start on a clean line.
    static std::vector<Json> replay(const std::filesystem::path& path);

private:
    std::filesystem::path path_;
    std::FILE* file_ = nullptr;
    std::mutex mu_;
};

class ControlServer {
public:
    /// Opens (or creates) data_dir/store.jsonl and replays it.
    explicit ControlServer(const std::filesystem::path& data_dir, Clock clock = wall_now,
                           std::optional<std::uint64_t> id_seed = std::nullopt);
    ~ControlServer();

    /// Returns the number of pending instructions for the device.
    int ingest_status(const DeviceStatus& status);

    /// Drains the device's pending queue, marking each instruction delivered.
    std::vector<Instruction> fetch_instructions(const std::string& device_id);

    void ack_instruction(const std::string& device_id, const std::string& instruction_id, InstructionState outcome,
                         const std::string& detail);

    SubmitOutcome submit_results(const std::string& device_id, const Json& records);
    SubmitOutcome submit_results(const std::string& device_id, const std::vector<MeasurementRecord>& records);

    /// Assigns id and created_at when absent; state must be pending.
    std::string enqueue_instruction(Instruction instr);

    std::vector<DeviceSummary> fleet_snapshot() const;

    std::optional<Instruction> instruction(const std::string& id) const;
    std::vector<Instruction> device_instructions(const std::string& device_id) const;
    std::vector<MeasurementRecord> records(const std::string& device_id, const RecordQuery& q = {}) const;
    std::size_t record_count() const;

    /// Canonical dump of all indexed state, for replay comparisons.
    Json state() const;

    const std::filesystem::path& log_path() const;

private:
    struct DeviceSlot;
    struct Records;

    DeviceSlot& slot(const std::string& device_id);
    DeviceSlot* find_slot(const std::string& device_id) const;
    void apply(const Json& entry);

    Clock clock_;
    std::unique_ptr<Log> log_;
    mutable std::mutex registry_mu_;
    std::map<std::string, std::unique_ptr<DeviceSlot>> devices_;
    std::map<std::string, std::string> instruction_owner_;
    std::unique_ptr<Records> records_;
    std::mutex id_mu_;
    IdGenerator ids_;
};

struct HttpOptions {
    net::Endpoint listen{"127.0.0.1", 8080};
};

/// HTTP/JSON front end for a ControlServer.
class HttpApi {
public:
    HttpApi(ControlServer& server, const HttpOptions& options);
    ~HttpApi();

    std::uint16_t port() const;
    void start();
    /// Blocks until stop() is called from another thread.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace amigo::server
