#pragma once

#include <stdexcept>
#include <string>

namespace fgreg {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A precondition on an argument value was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated file content.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Malformed experiment configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite parameters detected during training (CLI exit code 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) throw InvalidArgument(what);
}

inline void require_dims(bool cond, const std::string& what) {
    if (!cond) throw DimensionError(what);
}

} // namespace detail
} // namespace fgreg
