#pragma once

#include <stdexcept>
#include <string>

namespace loralab {

// Error categories map 1:1 to CLI exit codes (see tools/loralab_main.cpp).
enum class ErrorKind {
    config = 2,
    input = 3,
    data = 4,
    format = 5,
    version = 6,
    compat = 7,
    numeric = 8,
    parse = 9,
    encoding = 10,
    objective = 11,
    contract = 12,
    plot = 13,
    io = 14,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return "config";
        case ErrorKind::input: return "input";
        case ErrorKind::data: return "data";
        case ErrorKind::format: return "format";
        case ErrorKind::version: return "version";
        case ErrorKind::compat: return "compat";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::parse: return "parse";
        case ErrorKind::encoding: return "encoding";
        case ErrorKind::objective: return "objective";
        case ErrorKind::contract: return "contract";
        case ErrorKind::plot: return "plot";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

}  // namespace loralab
