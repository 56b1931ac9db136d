#pragma once

#include <stdexcept>
#include <string>

namespace focustrack {

// Root of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or extent mismatch between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Inconsistent model / run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Out-of-range scalar argument (eps <= 0, n == 0, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// NaN / Inf produced by a kernel or a loss.
class NumericError : public Error {
public:
    using Error::Error;
};

// Malformed file or directory contents.
class FormatError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class SamplingError : public Error {
public:
    using Error::Error;
};

// Metric requested on data with no evaluable frames.
class MetricError : public Error {
public:
    using Error::Error;
};

}  // namespace focustrack
