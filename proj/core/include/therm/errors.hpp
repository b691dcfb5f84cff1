#pragma once

#include <stdexcept>
#include <string>

namespace therm {

/// Raised when an argument violates an operation's precondition.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical routine cannot produce a usable result.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, double jitter = 0.0)
        : std::runtime_error(what), jitter_(jitter) {}

    /// Largest diagonal jitter that was attempted, or 0 if not applicable.
    [[nodiscard]] double jitter() const noexcept { return jitter_; }

private:
    double jitter_;
};

} // namespace therm
