#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace arrdiag {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An error that names the offending identifier (sensor, residual, fault...).
class IdentifiedError : public Error {
public:
    IdentifiedError(const std::string& what, std::string id) : Error(what), id_(std::move(id)) {}
    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ValidationError : public IdentifiedError {
public:
    ValidationError(const std::string& what, std::string id)
        : IdentifiedError("validation failed for '" + id + "': " + what, id) {}
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class UnknownResidual : public IdentifiedError {
public:
    explicit UnknownResidual(std::string id) : IdentifiedError("unknown residual '" + id + "'", id) {}
};

class UnknownFault : public IdentifiedError {
public:
    explicit UnknownFault(std::string id) : IdentifiedError("unknown fault '" + id + "'", id) {}
};

class UnknownSensor : public IdentifiedError {
public:
    explicit UnknownSensor(std::string id) : IdentifiedError("unknown sensor '" + id + "'", id) {}
};

class MissingInput : public IdentifiedError {
public:
    explicit MissingInput(std::string id) : IdentifiedError("missing input '" + id + "'", id) {}
};

class NoConvergence : public Error {
public:
    using Error::Error;
};

class DivisionByZeroFlow : public Error {
public:
    using Error::Error;
};

class InsufficientTraining : public Error {
public:
    using Error::Error;
};

class OutOfOrderSample : public Error {
public:
    using Error::Error;
};

class EmptyBuffer : public Error {
public:
    using Error::Error;
};

class TooFewSamples : public Error {
public:
    using Error::Error;
};

class BinMismatch : public Error {
public:
    using Error::Error;
};

class ContextOverflow : public Error {
public:
    using Error::Error;
};

class NoDiagnosisAvailable : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

class EndpointError : public Error {
public:
    using Error::Error;
};

class BindError : public Error {
public:
    using Error::Error;
};

class CorruptLog : public Error {
public:
    CorruptLog(std::size_t line, const std::string& detail)
        : Error("corrupt run log at line " + std::to_string(line) + ": " + detail), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace arrdiag
