#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace amigo::dns {

// Minimal DNS wire codec: one question, class IN, type A, no EDNS.

inline constexpr std::uint16_t kTypeA = 1;
inline constexpr std::uint16_t kClassIn = 1;

enum class Rcode : std::uint8_t { no_error = 0, format_error = 1, server_failure = 2, nx_domain = 3 };

struct Query {
    std::uint16_t id = 0;
    std::string name;  // dotted, no trailing dot
    std::uint16_t qtype = kTypeA;
    std::uint16_t qclass = kClassIn;
};

struct Response {
    std::uint16_t id = 0;
    Rcode rcode = Rcode::no_error;
    std::string name;
    std::vector<std::string> answers;  // dotted-quad A records
};

std::string encode_query(const Query& q);
/// Throws parse_error on malformed input.
Query decode_query(std::string_view wire);

std::string encode_response(const Response& r, std::uint32_t ttl = 60);
/// Throws parse_error on malformed input, including compression loops.
Response decode_response(std::string_view wire);

}  // namespace amigo::dns
