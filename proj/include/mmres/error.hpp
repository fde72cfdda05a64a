#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmres {

/// Base for every error the library raises on bad data or failed numerics.
/// Precondition violations by the caller use std::invalid_argument instead.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Singular or ill-posed numerics (division by ~0, degenerate calibration).
class NumericalError : public Error {
public:
    using Error::Error;
};

enum class FitFailure { no_dip, diverged, at_bound, insufficient_data };

inline const char* to_string(FitFailure f) {
    switch (f) {
    case FitFailure::no_dip: return "no dip found";
    case FitFailure::diverged: return "fit diverged";
    case FitFailure::at_bound: return "parameter at bound";
    case FitFailure::insufficient_data: return "insufficient data";
    }
    return "fit failure";
}

class FitError : public NumericalError {
public:
    FitError(FitFailure kind, const std::string& detail = {})
        : NumericalError(detail.empty() ? std::string(to_string(kind))
                                        : std::string(to_string(kind)) + ": " + detail),
          kind_(kind) {}

    FitFailure kind() const noexcept { return kind_; }

private:
    FitFailure kind_;
};

} // namespace mmres
