#include "amigo/dns_codec.hpp"

#include <arpa/inet.h>

#include "amigo/error.hpp"

namespace amigo::dns {

namespace {

void put16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
}

void put32(std::string& out, std::uint32_t v) {
    put16(out, static_cast<std::uint16_t>(v >> 16));
    put16(out, static_cast<std::uint16_t>(v & 0xffff));
}

void put_name(std::string& out, std::string_view name) {
    while (!name.empty()) {
        auto dot = name.find('.');
        auto label = name.substr(0, dot);
        if (label.empty() || label.size() > 63) throw validation_error("bad DNS label in '" + std::string(name) + "'");
        out.push_back(static_cast<char>(label.size()));
        out.append(label);
        if (dot == std::string_view::npos) break;
        name.remove_prefix(dot + 1);
    }
    out.push_back('\0');
}

class Reader {
public:
    explicit Reader(std::string_view wire) : wire_(wire) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(wire_[pos_++]);
    }
    std::uint16_t u16() {
        std::uint16_t hi = u8();
        return static_cast<std::uint16_t>((hi << 8) | u8());
    }
    std::uint32_t u32() {
        std::uint32_t hi = u16();
        return (hi << 16) | u16();
    }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }
    std::string_view bytes(std::size_t n) {
        need(n);
        auto v = wire_.substr(pos_, n);
        pos_ += n;
        return v;
    }

    std::string name() {
        std::string out;
        std::size_t pos = pos_;
        bool jumped = false;
        int hops = 0;
        for (;;) {
            if (pos >= wire_.size()) throw parse_error("DNS name runs past end of message");
            auto len = static_cast<std::uint8_t>(wire_[pos]);
            if ((len & 0xc0) == 0xc0) {
                if (pos + 1 >= wire_.size()) throw parse_error("truncated DNS compression pointer");
                if (++hops > 32) throw parse_error("DNS compression loop");
                std::size_t target = ((len & 0x3f) << 8) | static_cast<std::uint8_t>(wire_[pos + 1]);
                if (!jumped) pos_ = pos + 2;
                jumped = true;
                pos = target;
                continue;
            }
            if (len & 0xc0) throw parse_error("unsupported DNS label type");
            if (len == 0) {
                if (!jumped) pos_ = pos + 1;
                break;
            }
            if (pos + 1 + len > wire_.size()) throw parse_error("DNS label runs past end of message");
            if (!out.empty()) out += '.';
            out.append(wire_.substr(pos + 1, len));
            pos += 1 + len;
        }
        return out;
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > wire_.size()) throw parse_error("truncated DNS message");
    }
    std::string_view wire_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_query(const Query& q) {
    std::string out;
    put16(out, q.id);
    put16(out, 0x0100);  // RD
    put16(out, 1);
    put16(out, 0);
    put16(out, 0);
    put16(out, 0);
    put_name(out, q.name);
    put16(out, q.qtype);
    put16(out, q.qclass);
    return out;
}

Query decode_query(std::string_view wire) {
    Reader r(wire);
    Query q;
    q.id = r.u16();
    std::uint16_t flags = r.u16();
    if (flags & 0x8000) throw parse_error("DNS message is a response, expected a query");
    if (r.u16() != 1) throw parse_error("DNS query must carry exactly one question");
    r.skip(6);
    q.name = r.name();
    q.qtype = r.u16();
    q.qclass = r.u16();
    return q;
}

std::string encode_response(const Response& resp, std::uint32_t ttl) {
    std::string out;
    put16(out, resp.id);
    put16(out, static_cast<std::uint16_t>(0x8180 | static_cast<std::uint8_t>(resp.rcode)));  // QR RD RA
    put16(out, 1);
    put16(out, static_cast<std::uint16_t>(resp.answers.size()));
    put16(out, 0);
    put16(out, 0);
    put_name(out, resp.name);
    put16(out, kTypeA);
    put16(out, kClassIn);
    for (const auto& ip : resp.answers) {
        put16(out, 0xc00c);  // pointer to the question name
        put16(out, kTypeA);
        put16(out, kClassIn);
        put32(out, ttl);
        put16(out, 4);
        in_addr a{};
        if (inet_pton(AF_INET, ip.c_str(), &a) != 1) throw validation_error("bad A record '" + ip + "'");
        out.append(reinterpret_cast<const char*>(&a), 4);
    }
    return out;
}

Response decode_response(std::string_view wire) {
    Reader r(wire);
    Response resp;
    resp.id = r.u16();
    std::uint16_t flags = r.u16();
    if (!(flags & 0x8000)) throw parse_error("DNS message is not a response");
    resp.rcode = static_cast<Rcode>(flags & 0x0f);
    std::uint16_t qd = r.u16();
    std::uint16_t an = r.u16();
    r.skip(4);
    for (std::uint16_t i = 0; i < qd; ++i) {
        auto name = r.name();
        if (i == 0) resp.name = name;
        r.skip(4);
    }
    for (std::uint16_t i = 0; i < an; ++i) {
        r.name();
        std::uint16_t type = r.u16();
        std::uint16_t cls = r.u16();
        r.u32();
        std::uint16_t rdlen = r.u16();
        auto rdata = r.bytes(rdlen);
        if (type == kTypeA && cls == kClassIn) {
            if (rdlen != 4) throw parse_error("A record with rdlength " + std::to_string(rdlen));
            char buf[INET_ADDRSTRLEN];
            inet_ntop(AF_INET, rdata.data(), buf, sizeof buf);
            resp.answers.emplace_back(buf);
        }
    }
    return resp;
}

}  // namespace amigo::dns
