#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace neus {

/// Error classes surfaced by the CLI as `error: <class>: <message>`.
enum class ErrorKind {
    io,
    config,
    schema,
    data,
    numerical,
    dependency,
    lookup,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::io: return "io_error";
    case ErrorKind::config: return "config_error";
    case ErrorKind::schema: return "schema_error";
    case ErrorKind::data: return "data_error";
    case ErrorKind::numerical: return "numerical_error";
    case ErrorKind::dependency: return "dependency_error";
    case ErrorKind::lookup: return "lookup_error";
    }
    return "error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace neus
