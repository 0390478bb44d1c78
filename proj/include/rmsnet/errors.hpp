#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rmsnet {

enum class ErrorKind {
    Dimension,
    Config,
    Numeric,
    EmptyInput,
    Label,
    Target,
    Usage,
    Sampling,
    Format,
    Consistency,
    Parse,
    Io,
    Input,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

namespace detail {

template <typename... Args>
[[noreturn]] void raise(ErrorKind kind, Args&&... parts) {
    std::ostringstream os;
    (os << ... << std::forward<Args>(parts));
    throw Error(kind, os.str());
}

} // namespace detail

#define RMSNET_REQUIRE(cond, kind, ...)                                        \
    do {                                                                       \
        if (!(cond)) ::rmsnet::detail::raise(::rmsnet::ErrorKind::kind,        \
                                             __VA_ARGS__);                     \
    } while (false)

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Config: return "config";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::EmptyInput: return "empty input";
    case ErrorKind::Label: return "label";
    case ErrorKind::Target: return "target";
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Sampling: return "sampling";
    case ErrorKind::Format: return "format";
    case ErrorKind::Consistency: return "consistency";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Io: return "io";
    case ErrorKind::Input: return "input";
    }
    return "unknown";
}

} // namespace rmsnet
