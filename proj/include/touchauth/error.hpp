#pragma once

#include <stdexcept>
#include <string>

namespace touchauth {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input file does not carry the required columns.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Caller supplied data that violates an operation's preconditions.
class InputError : public Error {
public:
    using Error::Error;
};

/// A classifier could not be fitted (single class, empty set, ...).
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Not enough impostor data to undersample to the genuine count.
class SamplingError : public Error {
public:
    using Error::Error;
};

/// A metric was requested on an empty class.
class MetricError : public Error {
public:
    using Error::Error;
};

/// Experiment configuration could not be read or is inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Too few eligible users or strokes to run an experiment.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

} // namespace touchauth
