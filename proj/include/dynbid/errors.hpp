#pragma once

#include <stdexcept>
#include <string>

namespace dynbid {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (e.g. negative age).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent parameters (bad grids, m = 0, mismatched sizes).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Primitives that violate the model assumptions, or for which the shooting
/// bracket never separates.
class EnvironmentError : public Error {
public:
    using Error::Error;
};

/// Iterative procedure hit its iteration cap. Carries the last bracket when the
/// failing procedure was a bisection.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double lo = 0.0, double hi = 0.0)
        : Error(what), lo_(lo), hi_(hi) {}

    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }

private:
    double lo_;
    double hi_;
};

class EstimationError : public Error {
public:
    using Error::Error;
};

/// Ill-conditioned linear algebra (e.g. singular normal equations without ridge).
class NumericalError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace dynbid
