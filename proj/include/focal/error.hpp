#pragma once

#include <stdexcept>
#include <string>

namespace focal {

/// Base class for every error raised by the library. The CLI maps the
/// concrete kind onto a process exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A numeric argument is outside its admissible range (e.g. t <= 0).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A softmax row has no finite entry.
class InvalidMaskError : public Error {
public:
    using Error::Error;
};

/// Invalid model / training / experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or insufficient input data (token ids, corpora).
class DataError : public Error {
public:
    using Error::Error;
};

/// API misuse, e.g. calling backward on a non-scalar.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or gradient during training.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Filesystem or (de)serialization failure.
class IoError : public Error {
public:
    using Error::Error;
};

enum class ExitCode : int {
    ok = 0,
    config_error = 2,
    numerical_abort = 3,
    io_error = 4,
};

/// Exit code for an exception escaping a CLI command.
ExitCode exit_code_for(const std::exception& e) noexcept;

}  // namespace focal
