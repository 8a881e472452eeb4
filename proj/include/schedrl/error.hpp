#pragma once

#include <stdexcept>
#include <string>

namespace schedrl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration value; the message names the offending field.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input text. Carries the 1-based line number when known.
class ParseError : public ConfigError {
public:
    ParseError(const std::string& what, std::size_t line)
        : ConfigError("line " + std::to_string(line) + ": " + what), line_(line) {}
    explicit ParseError(const std::string& what) : ConfigError(what) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_ = 0;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Operation called in the wrong lifecycle state (e.g. stepping a finished episode).
class StateError : public Error {
public:
    using Error::Error;
};

/// Tensor or layer dimensions do not chain.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN or infinity where a finite number is required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Internal simulator bookkeeping is inconsistent. Always a bug.
class InvariantError : public Error {
public:
    using Error::Error;
};

}  // namespace schedrl
