#include "httplib.h"

#include <spdlog/spdlog.h>

#include "amigo/server.hpp"

namespace amigo::server {

namespace {

void send_json(httplib::Response& res, const Json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
    send_json(res, Json{{"error", kind}, {"message", message}}, status);
}

Json parse_body(const httplib::Request& req) {
    try {
        return Json::parse(req.body);
    } catch (const Json::parse_error& e) {
        throw parse_error(std::string("request body is not JSON: ") + e.what());
    }
}

template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const Error& e) {
            send_error(res, http_status(e.kind()), kind_label(e.kind()), e.what());
        } catch (const Json::exception& e) {
            send_error(res, 400, "parse", e.what());
        } catch (const std::exception& e) {
            spdlog::error("{} {}: {}", req.method, req.path, e.what());
            send_error(res, 500, "internal", e.what());
        }
    };
}

}  // namespace

struct HttpApi::Impl {
    ControlServer& server;
    HttpOptions options;
    httplib::Server http;
    int port = -1;
    std::thread thread;

    Impl(ControlServer& s, const HttpOptions& o) : server(s), options(o) { routes(); }

    void routes() {
        http.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        http.Options(".*", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });

        http.Post("/api/v1/status", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto status = decode<DeviceStatus>(parse_body(req), "DeviceStatus");
            send_json(res, {{"pending", server.ingest_status(status)}});
        }));
        http.Get(R"(/api/v1/instructions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, Json(server.fetch_instructions(req.matches[1])));
        }));
        http.Post(R"(/api/v1/instructions/([^/]+)/([^/]+)/ack)",
                  guarded([this](const httplib::Request& req, httplib::Response& res) {
                      auto body = parse_body(req);
                      if (!body.is_object()) throw validation_error("ack body must be an object");
                      auto outcome = enum_from_string<InstructionState>(body.value("outcome", std::string{}));
                      server.ack_instruction(req.matches[1], req.matches[2], outcome, body.value("detail", std::string{}));
                      send_json(res, {{"id", std::string(req.matches[2])}, {"state", outcome}});
                  }));
        http.Post(R"(/api/v1/results/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, to_json(server.submit_results(req.matches[1], parse_body(req))));
        }));

        http.Post("/api/v1/admin/instructions", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto instr = decode<Instruction>(parse_body(req), "Instruction");
            send_json(res, {{"id", server.enqueue_instruction(std::move(instr))}}, 201);
        }));
        http.Get(R"(/api/v1/admin/instructions/([^/]+))",
                 guarded([this](const httplib::Request& req, httplib::Response& res) {
                     auto instr = server.instruction(req.matches[1]);
                     if (!instr) throw not_found_error("instruction " + std::string(req.matches[1]) + " not found");
                     send_json(res, *instr);
                 }));
        http.Get("/api/v1/admin/fleet", guarded([this](const httplib::Request&, httplib::Response& res) {
            send_json(res, Json(server.fleet_snapshot()));
        }));
        http.Get(R"(/api/v1/admin/devices/([^/]+)/records)",
                 guarded([this](const httplib::Request& req, httplib::Response& res) {
                     RecordQuery q;
                     if (auto k = req.get_param_value("kind"); !k.empty())
                         q.kind = enum_from_string<ExperimentKind>(k);
                     if (auto l = req.get_param_value("limit"); !l.empty()) {
                         std::size_t used = 0;
                         long long n = -1;
                         try {
                             n = std::stoll(l, &used);
                         } catch (const std::exception&) {
                         }
                         if (n < 0 || used != l.size()) throw validation_error("limit must be a non-negative integer");
                         q.limit = static_cast<std::size_t>(n);
                     }
                     send_json(res, Json(server.records(req.matches[1], q)));
                 }));
        http.Get(R"(/api/v1/admin/devices/([^/]+)/instructions)",
                 guarded([this](const httplib::Request& req, httplib::Response& res) {
                     send_json(res, Json(server.device_instructions(req.matches[1])));
                 }));
        http.Get("/api/v1/admin/thresholds", guarded([](const httplib::Request&, httplib::Response& res) {
            send_json(res, thresholds_json());
        }));

        http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) send_error(res, res.status, "not_found", "no such endpoint");
        });
    }
};

HttpApi::HttpApi(ControlServer& server, const HttpOptions& options)
    : impl_(std::make_unique<Impl>(server, options)) {
    const auto& ep = impl_->options.listen;
    if (ep.port == 0) {
        impl_->port = impl_->http.bind_to_any_port(ep.host);
    } else if (impl_->http.bind_to_port(ep.host, ep.port)) {
        impl_->port = ep.port;
    }
    if (impl_->port <= 0) throw network_error("cannot listen on " + ep.host + ":" + std::to_string(ep.port));
}

HttpApi::~HttpApi() { stop(); }

std::uint16_t HttpApi::port() const { return static_cast<std::uint16_t>(impl_->port); }

void HttpApi::start() {
    impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
}

void HttpApi::run() { impl_->http.listen_after_bind(); }

void HttpApi::stop() {
    impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace amigo::server
