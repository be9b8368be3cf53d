#pragma once

#include <stdexcept>
#include <string>

namespace spinlight {

/// Base of every error raised by the library. `kind()` is the short tag the
/// CLI prints after "error:".
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    [[nodiscard]] virtual const char* kind() const noexcept { return "error"; }
};

/// Malformed, incomplete or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
    [[nodiscard]] const char* kind() const noexcept override { return "config"; }
};

/// A model precondition (far-detuned regime, oversampling, ...) is violated.
class ValidityError : public Error {
public:
    using Error::Error;
    [[nodiscard]] const char* kind() const noexcept override { return "validity"; }
};

/// A fit could not be carried out on the given data.
class FitError : public Error {
public:
    using Error::Error;
    [[nodiscard]] const char* kind() const noexcept override { return "fit"; }
};

/// The step-size controller collapsed or the step budget ran out.
class IntegrationError : public Error {
public:
    IntegrationError(const std::string& what, double last_good_time)
        : Error(what), last_good_time_(last_good_time) {}
    [[nodiscard]] const char* kind() const noexcept override { return "integration"; }
    [[nodiscard]] double last_good_time() const noexcept { return last_good_time_; }

private:
    double last_good_time_;
};

class SingularSystemError : public Error {
public:
    using Error::Error;
    [[nodiscard]] const char* kind() const noexcept override { return "singular"; }
};

} // namespace spinlight
