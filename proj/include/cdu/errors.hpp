#pragma once

#include <stdexcept>
#include <string>

namespace cdu {

// Error categories map onto CLI exit codes: config 2, data 3, numeric 4.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dimension mismatch between an operand and what an operation expects.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Caller broke a precondition that is not a shape (stale cache, unfrozen model, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed, missing or insufficient input data.
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss, gradient or parameter during optimization.
class DivergenceError : public Error {
public:
    using Error::Error;
};

class SingularityError : public Error {
public:
    using Error::Error;
};

/// A metric is undefined for the given input (e.g. R^2 with constant targets).
class DegenerateMetricError : public Error {
public:
    using Error::Error;
};

}  // namespace cdu
