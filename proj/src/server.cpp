#include "amigo/server.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace amigo::server {

void to_json(Json& j, const DeviceSummary& v) {
    j = Json{{"device_id", v.device_id},
             {"last_seen", v.last_seen},
             {"battery_pct", v.battery_pct ? Json(*v.battery_pct) : Json(nullptr)},
             {"connectivity", v.connectivity},
             {"operator_name", v.operator_name},
             {"network_id", v.network_id},
             {"data_used_today", v.data_used_today},
             {"stale", v.stale}};
}

Json to_json(const SubmitOutcome& o) {
    Json rejected = Json::array();
    for (const auto& r : o.rejected)
        rejected.push_back({{"index", r.index}, {"record_id", r.record_id}, {"reason", r.reason}});
    return Json{{"accepted", o.accepted}, {"rejected", rejected}};
}

// ---------------------------------------------------------------------------
// Log.

Log::Log(std::filesystem::path path) : path_(std::move(path)) {
    file_ = std::fopen(path_.c_str(), "ab");
    if (!file_) throw io_error("cannot open log " + path_.string());
}

Log::~Log() {
    if (file_) std::fclose(file_);
}

void Log::append(const Json& entry) {
    std::string line = entry.dump() + "\n";
    std::lock_guard lock(mu_);
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0)
        throw io_error("append to " + path_.string() + " failed");
}

std::vector<Json> Log::replay(const std::filesystem::path& path) {
    std::vector<Json> out;
    if (!std::filesystem::exists(path)) return out;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot read log " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            in.close();
            std::filesystem::resize_file(path, pos);
            break;
        }
        ++line_no;
        std::string_view line(text.data() + pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const Json::parse_error& e) {
            throw parse_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// ControlServer.

struct ControlServer::DeviceSlot {
    std::mutex mu;
    std::optional<DeviceStatus> status;
    std::vector<std::string> order;
    std::map<std::string, Instruction> instructions;
};

struct ControlServer::Records {
    std::mutex mu;
    std::map<std::string, MeasurementRecord> by_id;
    std::map<std::string, std::vector<std::string>> by_device;
};

ControlServer::ControlServer(const std::filesystem::path& data_dir, Clock clock, std::optional<std::uint64_t> id_seed)
    : clock_(std::move(clock)), records_(std::make_unique<Records>()), ids_(id_seed ? IdGenerator(*id_seed) : IdGenerator()) {
    std::error_code ec;
    std::filesystem::create_directories(data_dir, ec);
    if (ec) throw io_error("cannot create data dir " + data_dir.string() + ": " + ec.message());
    auto path = data_dir / "store.jsonl";
    std::size_t n = 0;
    for (const auto& entry : Log::replay(path)) {
        ++n;
        try {
            apply(entry);
        } catch (const Error& e) {
            throw parse_error(path.string() + ": entry " + std::to_string(n) + ": " + e.what());
        }
    }
    log_ = std::make_unique<Log>(path);
}

ControlServer::~ControlServer() = default;

const std::filesystem::path& ControlServer::log_path() const { return log_->path(); }

ControlServer::DeviceSlot& ControlServer::slot(const std::string& device_id) {
    std::lock_guard lock(registry_mu_);
    auto& p = devices_[device_id];
    if (!p) p = std::make_unique<DeviceSlot>();
    return *p;
}

ControlServer::DeviceSlot* ControlServer::find_slot(const std::string& device_id) const {
    std::lock_guard lock(registry_mu_);
    auto it = devices_.find(device_id);
    return it == devices_.end() ? nullptr : it->second.get();
}

// Applies one log entry to the in-memory index. Callers hold the relevant
// device or records lock; during replay there is a single thread.
void ControlServer::apply(const Json& entry) {
    const auto kind = entry.value("entry", std::string{});
    if (kind == "status") {
        auto s = decode<DeviceStatus>(entry.at("status"), "status");
        auto& d = slot(s.device_id);
        if (!d.status || d.status->timestamp <= s.timestamp) d.status = std::move(s);
    } else if (kind == "instruction") {
        const auto event = entry.value("event", std::string{});
        if (event == "enqueued") {
            auto instr = decode<Instruction>(entry.at("instruction"), "instruction");
            auto& d = slot(instr.device_id);
            {
                std::lock_guard lock(registry_mu_);
                instruction_owner_[instr.id] = instr.device_id;
            }
            d.order.push_back(instr.id);
            d.instructions[instr.id] = std::move(instr);
            return;
        }
        const auto id = entry.at("id").get<std::string>();
        const auto device = entry.at("device_id").get<std::string>();
        auto* d = find_slot(device);
        if (!d || !d->instructions.count(id)) throw parse_error("event for unknown instruction " + id);
        auto& instr = d->instructions.at(id);
        InstructionState to = enum_from_string<InstructionState>(event);
        if (!is_legal_transition(instr.state, to))
            throw state_error("illegal transition " + std::string(to_string(instr.state)) + " -> " + event);
        instr.state = to;
        if (to == InstructionState::acked || to == InstructionState::failed)
            instr.outcome = entry.value("detail", std::string{});
    } else if (kind == "record") {
        auto rec = decode<MeasurementRecord>(entry.at("record"), "record");
        if (records_->by_id.count(rec.record_id)) return;
        records_->by_device[rec.device_id].push_back(rec.record_id);
        records_->by_id.emplace(rec.record_id, std::move(rec));
    } else {
        throw parse_error("unknown log entry '" + kind + "'");
    }
}

int ControlServer::ingest_status(const DeviceStatus& status) {
    validate(status);
    auto& d = slot(status.device_id);
    std::lock_guard lock(d.mu);
    if (d.status && utc_day(d.status->timestamp) == utc_day(status.timestamp) &&
        d.status->timestamp <= status.timestamp && status.data_used_today < d.status->data_used_today)
        throw validation_error("data_used_today decreased within one UTC day for device " + status.device_id);
    Json entry{{"entry", "status"}, {"status", status}};
    log_->append(entry);
    apply(entry);
    return static_cast<int>(std::count_if(d.instructions.begin(), d.instructions.end(), [](const auto& kv) {
        return kv.second.state == InstructionState::pending;
    }));
}

std::vector<Instruction> ControlServer::fetch_instructions(const std::string& device_id) {
    std::vector<Instruction> out;
    auto* d = find_slot(device_id);
    if (!d) return out;
    std::lock_guard lock(d->mu);
    if (!d->status) return out;  // never reported
    for (const auto& id : d->order) {
        if (d->instructions.at(id).state != InstructionState::pending) continue;
        Json entry{{"entry", "instruction"}, {"event", "delivered"}, {"id", id}, {"device_id", device_id}};
        log_->append(entry);
        apply(entry);
        out.push_back(d->instructions.at(id));
    }
    return out;
}

void ControlServer::ack_instruction(const std::string& device_id, const std::string& instruction_id,
                                    InstructionState outcome, const std::string& detail) {
    if (outcome != InstructionState::acked && outcome != InstructionState::failed)
        throw validation_error("ack outcome must be acked or failed");
    auto* d = find_slot(device_id);
    if (!d) throw not_found_error("instruction " + instruction_id + " not found");
    std::lock_guard lock(d->mu);
    auto it = d->instructions.find(instruction_id);
    if (it == d->instructions.end()) throw not_found_error("instruction " + instruction_id + " not found");
    if (it->second.state != InstructionState::delivered)
        throw state_error("instruction " + instruction_id + " is " + std::string(to_string(it->second.state)) +
                          ", only delivered instructions can be acknowledged");
    Json entry{{"entry", "instruction"},
               {"event", std::string(to_string(outcome))},
               {"id", instruction_id},
               {"device_id", device_id},
               {"detail", detail}};
    log_->append(entry);
    apply(entry);
}

SubmitOutcome ControlServer::submit_results(const std::string& device_id, const Json& records) {
    if (!records.is_array()) throw validation_error("results body must be a JSON array");
    SubmitOutcome out;
    std::lock_guard lock(records_->mu);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& raw = records[i];
        std::string rid = raw.is_object() ? raw.value("record_id", std::string{}) : std::string{};
        try {
            auto rec = decode<MeasurementRecord>(raw, "record");
            validate(rec);
            if (rec.device_id != device_id)
                throw validation_error("record device_id '" + rec.device_id + "' does not match '" + device_id + "'");
            if (records_->by_id.count(rec.record_id)) continue;
            Json entry{{"entry", "record"}, {"record", rec}};
            log_->append(entry);
            apply(entry);
            ++out.accepted;
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::io) throw;
            out.rejected.push_back({i, rid, e.what()});
        }
    }
    return out;
}

SubmitOutcome ControlServer::submit_results(const std::string& device_id,
                                            const std::vector<MeasurementRecord>& records) {
    return submit_results(device_id, Json(records));
}

std::string ControlServer::enqueue_instruction(Instruction instr) {
    if (instr.device_id.empty()) throw validation_error("instruction device_id must be non-empty");
    if (instr.state != InstructionState::pending || instr.outcome)
        throw validation_error("new instructions must be pending without an outcome");
    validate(instr.kind);
    if (instr.id.empty()) {
        std::lock_guard lock(id_mu_);
        instr.id = ids_.next();
    }
    if (instr.created_at == Instant{}) instr.created_at = clock_();
    validate(instr);
    {
        std::lock_guard lock(registry_mu_);
        if (instruction_owner_.count(instr.id)) throw validation_error("duplicate instruction id " + instr.id);
    }
    auto& d = slot(instr.device_id);
    std::lock_guard lock(d.mu);
    Json entry{{"entry", "instruction"}, {"event", "enqueued"}, {"instruction", instr}};
    log_->append(entry);
    apply(entry);
    return instr.id;
}

std::vector<DeviceSummary> ControlServer::fleet_snapshot() const {
    const Instant now = clock_();
    std::vector<DeviceSlot*> slots;
    std::vector<DeviceSummary> out;
    {
        std::lock_guard lock(registry_mu_);
        for (const auto& [id, d] : devices_) slots.push_back(d.get());
    }
    for (auto* d : slots) {
        std::lock_guard lock(d->mu);
        if (!d->status) continue;
        const auto& s = *d->status;
        out.push_back({s.device_id, s.timestamp, s.battery_pct, s.connectivity, s.operator_name, s.network_id,
                       s.data_used_today, now - s.timestamp > kStaleAfter});
    }
    return out;
}

std::optional<Instruction> ControlServer::instruction(const std::string& id) const {
    std::string owner;
    {
        std::lock_guard lock(registry_mu_);
        auto it = instruction_owner_.find(id);
        if (it == instruction_owner_.end()) return std::nullopt;
        owner = it->second;
    }
    auto* d = find_slot(owner);
    std::lock_guard lock(d->mu);
    return d->instructions.at(id);
}

std::vector<Instruction> ControlServer::device_instructions(const std::string& device_id) const {
    std::vector<Instruction> out;
    auto* d = find_slot(device_id);
    if (!d) return out;
    std::lock_guard lock(d->mu);
    for (const auto& id : d->order) out.push_back(d->instructions.at(id));
    return out;
}

std::vector<MeasurementRecord> ControlServer::records(const std::string& device_id, const RecordQuery& q) const {
    std::vector<MeasurementRecord> out;
    std::lock_guard lock(records_->mu);
    auto it = records_->by_device.find(device_id);
    if (it == records_->by_device.end()) return out;
    for (const auto& id : it->second) {
        const auto& r = records_->by_id.at(id);
        if (!q.kind || r.experiment_kind == *q.kind) out.push_back(r);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    if (q.limit && out.size() > *q.limit) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(*q.limit));
    return out;
}

std::size_t ControlServer::record_count() const {
    std::lock_guard lock(records_->mu);
    return records_->by_id.size();
}

Json ControlServer::state() const {
    Json devices = Json::object();
    Json instructions = Json::object();
    std::vector<std::pair<std::string, DeviceSlot*>> slots;
    {
        std::lock_guard lock(registry_mu_);
        for (const auto& [id, d] : devices_) slots.emplace_back(id, d.get());
    }
    for (auto& [id, d] : slots) {
        std::lock_guard lock(d->mu);
        if (d->status) devices[id] = *d->status;
        for (const auto& [iid, instr] : d->instructions) instructions[iid] = instr;
    }
    Json records = Json::object();
    {
        std::lock_guard lock(records_->mu);
        for (const auto& [rid, r] : records_->by_id) records[rid] = r;
    }
    return Json{{"devices", devices}, {"instructions", instructions}, {"records", records}};
}

}  // namespace amigo::server
