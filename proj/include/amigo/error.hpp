#pragma once

#include <stdexcept>
#include <string>

namespace amigo {

enum class ErrorKind {
    validation,
    not_found,
    state_machine,
    parse,
    io,
    network,
};

/// Exception carried across every module boundary. The kind decides the HTTP
/// status on the server and the process exit code in the CLI.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error validation_error(const std::string& what) { return {ErrorKind::validation, what}; }
inline Error not_found_error(const std::string& what) { return {ErrorKind::not_found, what}; }
inline Error state_error(const std::string& what) { return {ErrorKind::state_machine, what}; }
inline Error parse_error(const std::string& what) { return {ErrorKind::parse, what}; }
inline Error io_error(const std::string& what) { return {ErrorKind::io, what}; }
inline Error network_error(const std::string& what) { return {ErrorKind::network, what}; }

/// HTTP status for an error crossing the server API.
inline int http_status(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::validation:
        case ErrorKind::parse: return 400;
        case ErrorKind::not_found: return 404;
        case ErrorKind::state_machine: return 409;
        case ErrorKind::network: return 502;
        case ErrorKind::io: break;
    }
    return 500;
}

/// CLI exit code: 1 validation, 2 runtime, 3 IO.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::validation:
        case ErrorKind::parse: return 1;
        case ErrorKind::io: return 3;
        default: return 2;
    }
}

inline const char* kind_label(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::validation: return "validation";
        case ErrorKind::not_found: return "not_found";
        case ErrorKind::state_machine: return "state_machine";
        case ErrorKind::parse: return "parse";
        case ErrorKind::io: return "io";
        case ErrorKind::network: return "network";
    }
    return "unknown";
}

}  // namespace amigo
