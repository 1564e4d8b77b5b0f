#pragma once

#include <stdexcept>
#include <string>

namespace ntp {

/// Shape or dimension disagreement between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Caller violated a documented precondition.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Index, window or sequence length outside the permitted range.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Invalid configuration values.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent files on disk.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical breakdown (NaN loss, divergent simulation).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace ntp
