#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eocal {

/// Coarse failure category. The CLI maps these onto exit codes.
enum class ErrorKind {
    validation,    // input violates a documented precondition
    out_of_range,  // horizon outside the estimator's support
    no_events,     // ratio undefined because nothing was observed
    parse,         // malformed text input
    io,            // file could not be read or written
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::validation: return "validation error";
    case ErrorKind::out_of_range: return "out of range";
    case ErrorKind::no_events: return "no events";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::io: return "I/O error";
    }
    return "error";
}

}  // namespace eocal
