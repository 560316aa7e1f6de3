#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reslab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite entries, malformed labels, and similar bad values.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Dimension mismatch between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Loss or iterate became NaN/Inf.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Operation applied to an object in the wrong state (e.g. double bias augmentation).
class InvalidState : public Error {
public:
    using Error::Error;
};

/// Experiment or model configuration rejected before any computation.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// The requested construction does not exist for the given data.
class ConstructionInfeasible : public Error {
public:
    using Error::Error;
};

/// CSV or config text could not be parsed. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace reslab
