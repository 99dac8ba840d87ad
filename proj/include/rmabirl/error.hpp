#pragma once

#include <stdexcept>
#include <string>

namespace rmabirl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid dimensions or configuration values.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Malformed raw logs (e.g. gaps in an arm's timesteps).
class IngestionError : public Error {
public:
    using Error::Error;
};

/// An input file violated an instance invariant.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what, std::string path = {})
        : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}

    /// Location of the offending element (JSON path, file name, ...); may be empty.
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// A record lacks a feature that a computation needs.
class FeatureError : public Error {
public:
    using Error::Error;
};

/// Unknown feature name or an unresolved threshold inside a predicate.
class PredicateError : public Error {
public:
    using Error::Error;
};

/// The Whittle bisection could not find a sign change.
class BracketingError : public Error {
public:
    using Error::Error;
};

/// A linear system was singular.
class SolverError : public Error {
public:
    using Error::Error;
};

/// Value iteration failed to converge.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Soft-top-k Jacobian with all probabilities saturated.
class DegeneracyError : public Error {
public:
    using Error::Error;
};

/// Joint MDP larger than the configured cap.
class SizeError : public Error {
public:
    using Error::Error;
};

/// Non-finite objective or gradient during training.
class TrainingError : public Error {
public:
    using Error::Error;
};

/// What-if grouping that does not partition the arms.
class ReportError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class ConflictError : public Error {
public:
    using Error::Error;
};

}  // namespace rmabirl
