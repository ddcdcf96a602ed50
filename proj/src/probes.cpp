#include "amigo/probes.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "amigo/dns_codec.hpp"

namespace amigo::probes {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Latency

Measured<LatencyResult> probe_latency(const net::Endpoint& hop_server, const std::string& target, int max_hops,
                                      int probes_per_hop, Millis timeout) {
    if (max_hops < 1) throw validation_error("max_hops must be at least 1");
    if (probes_per_hop < 1) throw validation_error("probes_per_hop must be at least 1");
    Measured<LatencyResult> out;
    auto& r = out.result;
    r.target = target;
    r.complete = false;
    for (int k = 1; k <= max_hops; ++k) {
        HopStat hop;
        hop.hop_index = k;
        std::vector<double> rtts;
        bool terminal = false;
        for (int p = 0; p < probes_per_hop; ++p) {
            ++hop.sent;
            try {
                auto sock = net::connect_tcp(hop_server, timeout);
                sock.set_recv_timeout(timeout);
                std::string request = "HOP " + target + " " + std::to_string(k) + "\n";
                auto t0 = Clock::now();
                sock.send_all(request);
                auto line = sock.recv_line();
                double rtt = ms_since(t0);
                out.bytes += request.size();
                if (!line) {
                    ++hop.lost;
                    continue;
                }
                out.bytes += line->size() + 1;
                auto toks = split_ws(*line);
                if (toks.size() != 3 || (toks[0] != "HOP" && toks[0] != "END") || toks[1] != std::to_string(k)) {
                    ++hop.lost;
                    continue;
                }
                hop.address = toks[2];
                terminal = terminal || toks[0] == "END";
                rtts.push_back(rtt);
            } catch (const Error&) {
                ++hop.lost;
            }
        }
        if (!rtts.empty()) {
            double sum = 0;
            for (double v : rtts) sum += v;
            hop.avg_rtt_ms = sum / static_cast<double>(rtts.size());
            hop.best_rtt_ms = *std::min_element(rtts.begin(), rtts.end());
            hop.worst_rtt_ms = *std::max_element(rtts.begin(), rtts.end());
        } else {
            hop.address = "???";
        }
        r.hops.push_back(hop);
        if (terminal) {
            r.complete = true;
            break;
        }
        if (rtts.empty()) break;
    }
    r.hop_count = static_cast<int>(r.hops.size());
    r.final_avg_rtt_ms = r.hops.empty() ? 0.0 : r.hops.back().avg_rtt_ms;
    return out;
}

std::string emit_hop_report(const LatencyResult& r, int probes_per_hop) {
    Json hubs = Json::array();
    for (const auto& h : r.hops)
        hubs.push_back({{"hop", h.hop_index},
                        {"address", h.address},
                        {"sent", h.sent},
                        {"lost", h.lost},
                        {"avg_ms", h.avg_rtt_ms},
                        {"best_ms", h.best_rtt_ms},
                        {"worst_ms", h.worst_rtt_ms}});
    Json doc{{"target", r.target}, {"probes_per_hop", probes_per_hop}, {"complete", r.complete}, {"hubs", hubs}};
    return doc.dump();
}

LatencyResult parse_hop_report(std::string_view text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const std::exception& e) {
        throw parse_error(std::string("hop report is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw parse_error("hop report must be a JSON object");
    auto need = [](const Json& j, const char* name, const std::string& where) -> const Json& {
        auto it = j.find(name);
        if (it == j.end()) throw parse_error(where + "missing field '" + name + "'");
        return *it;
    };
    LatencyResult r;
    const auto& target = need(doc, "target", "");
    if (!target.is_string()) throw parse_error("field 'target' must be a string");
    r.target = target.get<std::string>();
    const auto& ppp = need(doc, "probes_per_hop", "");
    if (!ppp.is_number_integer()) throw parse_error("field 'probes_per_hop' must be an integer");
    r.complete = doc.value("complete", true);
    const auto& hubs = need(doc, "hubs", "");
    if (!hubs.is_array()) throw parse_error("field 'hubs' must be an array");
    if (hubs.empty()) throw parse_error("field 'hubs' is empty: no terminal hop");
    for (std::size_t i = 0; i < hubs.size(); ++i) {
        const auto& hub = hubs[i];
        std::string where = "hubs[" + std::to_string(i) + "]: ";
        if (!hub.is_object()) throw parse_error(where + "must be an object");
        auto num = [&](const char* name) {
            const auto& v = need(hub, name, where);
            if (!v.is_number()) throw parse_error(where + "field '" + name + "' must be a number");
            return v.get<double>();
        };
        auto integer = [&](const char* name) {
            const auto& v = need(hub, name, where);
            if (!v.is_number_integer()) throw parse_error(where + "field '" + name + "' must be an integer");
            return v.get<int>();
        };
        HopStat h;
        h.hop_index = integer("hop");
        if (h.hop_index != static_cast<int>(i) + 1)
            throw parse_error(where + "field 'hop' out of order: expected " + std::to_string(i + 1) + ", got " +
                              std::to_string(h.hop_index));
        const auto& addr = need(hub, "address", where);
        if (!addr.is_string()) throw parse_error(where + "field 'address' must be a string");
        h.address = addr.get<std::string>();
        h.sent = integer("sent");
        h.lost = integer("lost");
        h.avg_rtt_ms = num("avg_ms");
        h.best_rtt_ms = num("best_ms");
        h.worst_rtt_ms = num("worst_ms");
        if (h.lost < 0 || h.sent < 0 || h.lost > h.sent) throw parse_error(where + "field 'lost' exceeds 'sent'");
        if (h.avg_rtt_ms < 0) throw parse_error(where + "field 'avg_ms' is negative");
        if (h.sent > h.lost && !(h.best_rtt_ms <= h.avg_rtt_ms && h.avg_rtt_ms <= h.worst_rtt_ms))
            throw parse_error(where + "fields 'best_ms' <= 'avg_ms' <= 'worst_ms' violated");
        r.hops.push_back(std::move(h));
    }
    r.hop_count = static_cast<int>(r.hops.size());
    r.final_avg_rtt_ms = r.hops.back().avg_rtt_ms;
    return r;
}

// ---------------------------------------------------------------------------
// Throughput

double compute_throughput_mbps(Bytes bytes, double duration_s) {
    if (!(duration_s > 0)) throw validation_error("throughput duration must be positive");
    return static_cast<double>(bytes) * 8.0 / duration_s / 1e6;
}

SpeedSample probe_speed(const net::Endpoint& server, Direction direction, double duration_s) {
    if (!(duration_s > 0)) throw validation_error("speedtest duration must be positive");
    SpeedSample s;
    s.direction = direction;
    s.duration_s = duration_s;
    auto sock = net::connect_tcp(server, 3000ms);
    auto grace = Millis{static_cast<std::int64_t>(duration_s * 1000) + 5000};
    sock.set_recv_timeout(grace);
    std::ostringstream cmd;
    cmd << (direction == Direction::down ? "DOWN " : "UP ") << duration_s << "\n";
    auto t0 = Clock::now();
    sock.send_all(cmd.str());
    if (direction == Direction::down) {
        std::vector<char> buf(64 * 1024);
        try {
            for (;;) {
                auto n = sock.recv_some(buf.data(), buf.size());
                if (n == 0) break;
                s.bytes += n;
            }
        } catch (const Error&) {
            // Timeout or reset mid-stream: keep what arrived, flag below.
        }
        s.elapsed_s = ms_since(t0) / 1000.0;
    } else {
        sock.set_send_timeout(200ms);
        std::string chunk(16 * 1024, 'x');
        auto deadline = t0 + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(duration_s));
        try {
            while (Clock::now() < deadline) sock.send_some(chunk);
        } catch (const Error&) {
            // Server closed early; its byte count still arrives (or not) below.
        }
        sock.shutdown_write();
        std::optional<std::string> line;
        try {
            line = sock.recv_line();
        } catch (const Error&) {
        }
        s.elapsed_s = ms_since(t0) / 1000.0;
        if (line) {
            auto toks = split_ws(*line);
            if (toks.size() == 2 && toks[0] == "OK") {
                unsigned long long v = 0;
                std::from_chars(toks[1].data(), toks[1].data() + toks[1].size(), v);
                s.bytes = v;
            }
        }
    }
    s.mbps = compute_throughput_mbps(s.bytes, duration_s);
    s.flagged = s.bytes == 0 || s.elapsed_s < 0.9 * duration_s;
    return s;
}

Measured<SpeedtestResult> run_speedtest(const net::Endpoint& server, double duration_s) {
    Measured<SpeedtestResult> out;
    auto& r = out.result;
    r.duration_s = duration_s;
    try {
        auto down = probe_speed(server, Direction::down, duration_s);
        r.bytes_down = down.bytes;
        r.down_mbps = down.mbps;
        r.flagged = down.flagged;
        auto up = probe_speed(server, Direction::up, duration_s);
        r.bytes_up = up.bytes;
        r.up_mbps = up.mbps;
        r.flagged = r.flagged || up.flagged;
    } catch (const Error& e) {
        r.error = e.what();
        r.flagged = true;
    }
    out.bytes = r.bytes_down + r.bytes_up;
    return out;
}

// ---------------------------------------------------------------------------
// DNS

Measured<DnsResult> probe_dns(const std::string& domain, const net::Endpoint& resolver, Millis timeout) {
    Measured<DnsResult> out;
    auto& r = out.result;
    r.domain = domain;
    r.resolver_ip = resolver.host;
    r.resolver_class = classify_resolver(resolver.host);

    static thread_local std::mt19937 rng{std::random_device{}()};
    dns::Query q{static_cast<std::uint16_t>(rng()), domain};
    std::string wire;
    try {
        wire = dns::encode_query(q);
    } catch (const Error& e) {
        r.error = e.what();
        return out;
    }

    net::Socket sock = net::bind_udp({"0.0.0.0", 0});
    sockaddr_in dst{};
    dst.sin_family = AF_INET;
    dst.sin_port = htons(resolver.port);
    inet_pton(AF_INET, resolver.host.c_str(), &dst.sin_addr);

    auto t0 = Clock::now();
    if (::sendto(sock.fd(), wire.data(), wire.size(), 0, reinterpret_cast<sockaddr*>(&dst), sizeof dst) < 0) {
        r.error = "send failed";
        return out;
    }
    out.bytes += wire.size();
    char buf[1500];
    for (;;) {
        double remaining = static_cast<double>(timeout.count()) - ms_since(t0);
        if (remaining <= 0) break;
        sock.set_recv_timeout(Millis{std::max<std::int64_t>(1, static_cast<std::int64_t>(remaining))});
        ssize_t n = ::recv(sock.fd(), buf, sizeof buf, 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            break;  // timeout or error
        }
        double elapsed = ms_since(t0);
        out.bytes += static_cast<Bytes>(n);
        dns::Response resp;
        try {
            resp = dns::decode_response({buf, static_cast<std::size_t>(n)});
        } catch (const Error& e) {
            r.lookup_ms = elapsed;
            r.error = std::string("malformed response: ") + e.what();
            return out;
        }
        if (resp.id != q.id) continue;  // stray datagram
        r.lookup_ms = elapsed;
        if (resp.rcode != dns::Rcode::no_error) {
            r.error = resp.rcode == dns::Rcode::nx_domain ? "NXDOMAIN" : "rcode " + std::to_string(int(resp.rcode));
            return out;
        }
        if (resp.answers.empty()) {
            r.error = "no answer";
            return out;
        }
        r.success = true;
        r.answer = resp.answers.front();
        return out;
    }
    r.lookup_ms = static_cast<double>(timeout.count());
    r.error = "timeout";
    return out;
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

CacheStatus token_status(std::string_view tok) {
    auto t = lower(trim(tok));
    if (t == "hit") return CacheStatus::hit;
    if (t == "miss") return CacheStatus::miss;
    return CacheStatus::unknown;
}

}  // namespace

CacheHeaderParse parse_cache_headers(const HeaderList& headers) {
    const std::string* cf = nullptr;
    const std::string* xc = nullptr;
    for (const auto& [name, value] : headers) {
        auto n = lower(trim(name));
        if (n == "cf-cache-status" && !cf) cf = &value;
        else if (n == "x-cache" && !xc) xc = &value;
    }
    CacheHeaderParse p;
    if (cf) {
        p.source_header = HeaderSource::cf_cache_status;
        p.edge_status = token_status(*cf);
        return p;
    }
    if (xc) {
        p.source_header = HeaderSource::x_cache;
        std::vector<std::string> toks;
        std::string_view v = *xc;
        for (;;) {
            auto comma = v.find(',');
            toks.push_back(trim(v.substr(0, comma)));
            if (comma == std::string_view::npos) break;
            v.remove_prefix(comma + 1);
        }
        if (toks.size() == 1) {
            p.edge_status = token_status(toks[0]);
        } else if (toks.size() == 2) {
            p.shield_status = token_status(toks[0]);
            p.edge_status = token_status(toks[1]);
        }
        // Longer chains are not a documented shape: both stay unknown.
    }
    return p;
}

CacheHeaderParse parse_cache_headers(const std::map<std::string, std::string>& headers) {
    return parse_cache_headers(HeaderList(headers.begin(), headers.end()));
}

Url parse_url(std::string_view url) {
    constexpr std::string_view scheme = "http://";
    if (url.substr(0, scheme.size()) != scheme) throw validation_error("only http:// URLs are supported: '" + std::string(url) + "'");
    auto rest = url.substr(scheme.size());
    auto slash = rest.find('/');
    auto authority = rest.substr(0, slash);
    if (authority.empty()) throw validation_error("URL without host: '" + std::string(url) + "'");
    Url u;
    auto ep = net::parse_endpoint(authority, 80);
    u.host = ep.host;
    u.port = ep.port;
    u.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
    return u;
}

HttpFetch http_get(std::string_view url_text, const std::optional<net::Endpoint>& resolver, Millis timeout) {
    HttpFetch f;
    Url url;
    try {
        url = parse_url(url_text);
    } catch (const Error& e) {
        f.failed_phase = "dns";
        f.error = e.what();
        return f;
    }
    auto t0 = Clock::now();
    auto fail = [&](const char* phase, const std::string& why) {
        f.failed_phase = phase;
        f.error = why;
        f.total_ms = ms_since(t0);
        return f;
    };

    std::string ip = url.host;
    if (!net::is_ipv4_literal(url.host)) {
        if (resolver) {
            auto d = probe_dns(url.host, *resolver, std::min(timeout, Millis{5000}));
            f.wire_bytes += d.bytes;
            if (!d.result.success) return fail("dns", "lookup failed: " + d.result.error);
            ip = d.result.answer;
        } else {
            try {
                ip = net::resolve_ipv4(url.host);
            } catch (const Error& e) {
                return fail("dns", e.what());
            }
        }
        f.dns_ms = ms_since(t0);
    }

    net::Socket sock;
    try {
        sock = net::connect_tcp({ip, url.port}, timeout);
    } catch (const Error& e) {
        return fail("connect", e.what());
    }
    f.connect_ms = ms_since(t0);
    sock.set_recv_timeout(timeout);

    std::string request = "GET " + url.path + " HTTP/1.1\r\nHost: " + url.host +
                          (url.port == 80 ? "" : ":" + std::to_string(url.port)) +
                          "\r\nUser-Agent: amigo-probe/1\r\nAccept: */*\r\nConnection: close\r\n\r\n";
    std::optional<std::string> status_line;
    try {
        sock.send_all(request);
        f.wire_bytes += request.size();
        status_line = sock.recv_line(16 * 1024);
    } catch (const Error& e) {
        return fail("ttfb", e.what());
    }
    if (!status_line) return fail("ttfb", "connection closed before response");
    f.ttfb_ms = ms_since(t0);
    f.wire_bytes += status_line->size() + 2;

    auto toks = split_ws(*status_line);
    if (toks.size() < 2 || toks[0].rfind("HTTP/", 0) != 0) return fail("ttfb", "bad status line");
    std::from_chars(toks[1].data(), toks[1].data() + toks[1].size(), f.status);

    std::optional<Bytes> content_length;
    bool chunked = false;
    try {
        for (;;) {
            auto line = sock.recv_line(16 * 1024);
            if (!line) return fail("body", "connection closed inside headers");
            f.wire_bytes += line->size() + 2;
            if (line->empty()) break;
            auto colon = line->find(':');
            if (colon == std::string::npos) continue;
            std::string name = trim(std::string_view(*line).substr(0, colon));
            std::string value = trim(std::string_view(*line).substr(colon + 1));
            auto lname = lower(name);
            if (lname == "content-length") content_length = std::stoull(value);
            if (lname == "transfer-encoding" && lower(value).find("chunked") != std::string::npos) chunked = true;
            f.headers.emplace_back(std::move(name), std::move(value));
        }

        std::vector<char> buf(64 * 1024);
        auto read_exact = [&](Bytes n) {
            while (n > 0) {
                auto got = sock.recv_some(buf.data(), static_cast<std::size_t>(std::min<Bytes>(n, buf.size())));
                if (got == 0) throw network_error("connection closed mid-body");
                n -= got;
                f.wire_bytes += got;
            }
        };
        if (chunked) {
            for (;;) {
                auto size_line = sock.recv_line();
                if (!size_line) throw network_error("connection closed in chunk header");
                f.wire_bytes += size_line->size() + 2;
                Bytes size = std::stoull(*size_line, nullptr, 16);
                if (size == 0) {
                    while (auto trailer = sock.recv_line()) {
                        f.wire_bytes += trailer->size() + 2;
                        if (trailer->empty()) break;
                    }
                    break;
                }
                read_exact(size);
                f.body_bytes += size;
                read_exact(2);
            }
        } else if (content_length) {
            read_exact(*content_length);
            f.body_bytes = *content_length;
        } else {
            for (;;) {
                auto got = sock.recv_some(buf.data(), buf.size());
                if (got == 0) break;
                f.body_bytes += got;
                f.wire_bytes += got;
            }
        }
    } catch (const std::exception& e) {
        return fail("body", e.what());
    }
    f.total_ms = ms_since(t0);
    return f;
}

Measured<CdnResult> probe_cdn(const std::string& cdn_name, const std::string& url,
                              const std::optional<net::Endpoint>& resolver, Millis timeout) {
    Measured<CdnResult> out;
    auto& r = out.result;
    r.cdn_name = cdn_name;
    r.url = url;
    auto f = http_get(url, resolver, timeout);
    out.bytes = f.wire_bytes;
    r.http_status = f.status;
    r.total_ms = f.total_ms;
    r.bytes = f.body_bytes;
    if (!f.failed_phase.empty()) {
        r.error = f.failed_phase + ": " + f.error;
        return out;
    }
    if (f.status >= 200 && f.status < 300) {
        auto p = parse_cache_headers(f.headers);
        r.shield_status = p.shield_status;
        r.edge_status = p.edge_status;
    }
    return out;
}

Measured<WebResult> probe_web(const std::string& url, const std::optional<net::Endpoint>& resolver, Millis timeout) {
    Measured<WebResult> out;
    auto& r = out.result;
    r.url = url;
    auto f = http_get(url, resolver, timeout);
    out.bytes = f.wire_bytes;
    r.dns_ms = f.dns_ms;
    r.connect_ms = f.connect_ms;
    r.ttfb_ms = f.ttfb_ms;
    r.total_ms = f.total_ms;
    r.bytes = f.body_bytes;
    r.http_status = f.status;
    r.failed_phase = f.failed_phase;
    return out;
}

// ---------------------------------------------------------------------------
// YouTube

Resolution resolution_for_height(int height) {
    Resolution best = Resolution::r144;
    for (auto r : enum_values<Resolution>())
        if (resolution_height(r) <= height) best = r;
    return best;
}

namespace {

bool starts_with_label(const std::string& lowered, std::string_view label, std::string& rest, const std::string& original) {
    if (lowered.rfind(label, 0) != 0) return false;
    rest = trim(std::string_view(original).substr(label.size()));
    if (!rest.empty() && rest.front() == ':') rest = trim(std::string_view(rest).substr(1));
    return true;
}

std::optional<int> height_from_token(const std::string& value) {
    // First "WxH" token; anything after '@' is the frame rate.
    for (const auto& tok : split_ws(value)) {
        auto x = tok.find('x');
        if (x == std::string::npos || x == 0) continue;
        auto tail = tok.substr(x + 1);
        int h = 0;
        auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), h);
        int w = 0;
        auto [wptr, wec] = std::from_chars(tok.data(), tok.data() + x, w);
        if (ec == std::errc{} && ptr != tail.data() && wec == std::errc{} && wptr == tok.data() + x && h > 0) return h;
    }
    // Bare "720p" style.
    for (const auto& tok : split_ws(value)) {
        if (tok.size() > 1 && (tok.back() == 'p' || tok.back() == 'P')) {
            int h = 0;
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size() - 1, h);
            if (ec == std::errc{} && ptr == tok.data() + tok.size() - 1 && h > 0) return h;
        }
    }
    return std::nullopt;
}

std::optional<double> leading_number(const std::string& value) {
    std::string v = value;
    std::size_t i = 0;
    while (i < v.size() && !(std::isdigit(static_cast<unsigned char>(v[i])) || v[i] == '.' || v[i] == '-')) ++i;
    if (i == v.size()) return std::nullopt;
    try {
        return std::stod(v.substr(i));
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::optional<Instant> timestamp_line(const std::string& line) {
    std::string t = trim(line);
    std::string lowered = lower(t);
    std::string candidate;
    if (t.size() > 2 && t.front() == '[' && t.back() == ']') candidate = trim(std::string_view(t).substr(1, t.size() - 2));
    else if (std::string rest; starts_with_label(lowered, "timestamp", rest, t)) candidate = rest;
    else return std::nullopt;
    try {
        return parse_rfc3339(candidate);
    } catch (const Error&) {
        return std::nullopt;
    }
}

}  // namespace

YoutubeParse parse_youtube_stats(std::string_view log_text) {
    YoutubeParse out;
    if (trim(log_text).empty()) return out;

    struct Block {
        Instant ts;
        std::optional<int> height;
        double buffer = 0;
        int dropped = 0;
    };
    std::vector<Block> blocks;
    std::istringstream in{std::string(log_text)};
    std::string line;
    while (std::getline(in, line)) {
        if (auto ts = timestamp_line(line)) {
            blocks.push_back(Block{*ts, std::nullopt, 0, 0});
            continue;
        }
        if (blocks.empty()) continue;
        auto& b = blocks.back();
        std::string t = trim(line);
        std::string l = lower(t);
        std::string rest;
        if (starts_with_label(l, "current / optimal res", rest, t) || starts_with_label(l, "current res", rest, t) ||
            starts_with_label(l, "resolution", rest, t)) {
            // Only the current half of "current / optimal".
            auto slash = rest.find('/');
            b.height = height_from_token(slash == std::string::npos ? rest : rest.substr(0, slash));
        } else if (starts_with_label(l, "buffer health", rest, t)) {
            if (auto v = leading_number(rest)) b.buffer = std::max(0.0, *v);
        } else if (starts_with_label(l, "dropped frames", rest, t)) {
            if (auto v = leading_number(rest)) b.dropped = static_cast<int>(*v);
        } else if (starts_with_label(l, "viewport / frames", rest, t)) {
            auto slash = rest.find('/');
            if (slash != std::string::npos)
                if (auto v = leading_number(rest.substr(slash + 1))) b.dropped = static_cast<int>(*v);
        }
    }
    if (blocks.empty()) throw parse_error("no timestamped stats block found in log");
    for (const auto& b : blocks) {
        if (!b.height) {
            ++out.skipped_blocks;
            continue;
        }
        out.series.samples.push_back({b.ts, resolution_for_height(*b.height), b.buffer, b.dropped});
    }
    std::stable_sort(out.series.samples.begin(), out.series.samples.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    return out;
}

}  // namespace amigo::probes
