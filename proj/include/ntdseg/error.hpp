// SPDX-License-Identifier: MIT
#pragma once

#include <stdexcept>
#include <string>

namespace ntdseg {

enum class ErrorKind {
    dimension_mismatch,
    invalid_argument,
    degenerate_input,
    non_finite,
    parse_error,
    io_error,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::dimension_mismatch: return "dimension_mismatch";
        case ErrorKind::invalid_argument: return "invalid_argument";
        case ErrorKind::degenerate_input: return "degenerate_input";
        case ErrorKind::non_finite: return "non_finite";
        case ErrorKind::parse_error: return "parse_error";
        case ErrorKind::io_error: return "io_error";
    }
    return "unknown";
}

/// Every failure raised by the library. `kind()` is stable and machine readable;
/// `what()` carries the human-facing detail.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace ntdseg
