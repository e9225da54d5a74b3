#pragma once

#include <stdexcept>
#include <string>

namespace kinfit {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed model or data file. `line()` is 1-based, 0 when not line-specific.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

/// Structurally valid input that violates a model invariant.
class ModelError : public Error {
public:
    using Error::Error;
};

/// Non-finite value produced while evaluating reaction `reaction()`.
class EvaluationError : public Error {
public:
    EvaluationError(const std::string& what, std::size_t reaction)
        : Error(what), reaction_(reaction) {}
    std::size_t reaction() const noexcept { return reaction_; }

private:
    std::size_t reaction_;
};

class IntegrationError : public Error {
public:
    IntegrationError(const std::string& what, double t) : Error(what), t_(t) {}
    double time() const noexcept { return t_; }

private:
    double t_;
};

/// Argument outside the domain of an operation (e.g. backward transform).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Measurement set with nothing to fit.
class NoDataError : public Error {
public:
    NoDataError() : Error("no data") {}
};

}  // namespace kinfit
