#include "httplib.h"

#include "amigo/agent.hpp"

namespace amigo::agent {

namespace {

ErrorKind kind_from_label(const std::string& label) {
    for (auto k : {ErrorKind::validation, ErrorKind::not_found, ErrorKind::state_machine, ErrorKind::parse,
                   ErrorKind::io, ErrorKind::network})
        if (label == kind_label(k)) return k;
    return ErrorKind::network;
}

}  // namespace

struct HttpLink::Impl {
    std::string base;
    httplib::Client client;

    Impl(const std::string& url, Millis timeout) : base(url), client(url) {
        if (!client.is_valid()) throw validation_error("invalid server url '" + url + "'");
        auto secs = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(secs).count(),
                                      static_cast<time_t>(secs.count() % 1000000));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(secs).count(),
                                static_cast<time_t>(secs.count() % 1000000));
        client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(secs).count(),
                                 static_cast<time_t>(secs.count() % 1000000));
    }

    Json check(const httplib::Result& res, const std::string& what) {
        if (!res) throw network_error(what + ": " + httplib::to_string(res.error()));
        Json body;
        try {
            body = res->body.empty() ? Json() : Json::parse(res->body);
        } catch (const Json::parse_error&) {
            throw network_error(what + ": HTTP " + std::to_string(res->status) + " with a non-JSON body");
        }
        if (res->status >= 500) throw network_error(what + ": HTTP " + std::to_string(res->status));
        if (res->status >= 400) {
            std::string label = body.is_object() ? body.value("error", std::string{}) : std::string{};
            std::string message = body.is_object() ? body.value("message", res->body) : res->body;
            throw Error(kind_from_label(label), what + ": " + message);
        }
        return body;
    }

    Json post(const std::string& path, const Json& body) {
        return check(client.Post(path, body.dump(), "application/json"), "POST " + path);
    }
    Json get(const std::string& path) { return check(client.Get(path), "GET " + path); }
};

HttpLink::HttpLink(const std::string& server_url, Millis timeout)
    : impl_(std::make_unique<Impl>(server_url, timeout)) {}

HttpLink::~HttpLink() = default;

int HttpLink::post_status(const DeviceStatus& status) {
    return impl_->post("/api/v1/status", status).at("pending").get<int>();
}

std::vector<Instruction> HttpLink::fetch_instructions(const std::string& device_id) {
    return decode<std::vector<Instruction>>(impl_->get("/api/v1/instructions/" + device_id), "instructions");
}

void HttpLink::ack(const std::string& device_id, const std::string& instruction_id, const AckOutcome& outcome) {
    impl_->post("/api/v1/instructions/" + device_id + "/" + instruction_id + "/ack",
                {{"outcome", outcome.state}, {"detail", outcome.detail}});
}

server::SubmitOutcome HttpLink::submit(const std::string& device_id, const std::vector<MeasurementRecord>& records) {
    auto body = impl_->post("/api/v1/results/" + device_id, records);
    server::SubmitOutcome out;
    out.accepted = body.at("accepted").get<std::size_t>();
    for (const auto& r : body.at("rejected"))
        out.rejected.push_back({r.at("index").get<std::size_t>(), r.value("record_id", std::string{}),
                                r.value("reason", std::string{})});
    return out;
}

}  // namespace amigo::agent
