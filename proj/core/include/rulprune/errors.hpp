#pragma once

#include <stdexcept>
#include <string>

namespace rulprune {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller passed arguments that violate an operation's preconditions.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Input file does not provide the columns a schema asks for.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A data row could not be parsed. Carries the 1-based line number.
class IngestError : public Error {
public:
    IngestError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A linear-algebra routine could not produce a usable result.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, int epoch)
        : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

/// Objective evaluation failed inside an optimizer; records where.
class OptimizationError : public Error {
public:
    OptimizationError(const std::string& what, double theta)
        : Error(what + " (theta=" + std::to_string(theta) + ")"), theta_(theta) {}

    double theta() const noexcept { return theta_; }

private:
    double theta_;
};

/// A configuration or spec file is invalid.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace rulprune
