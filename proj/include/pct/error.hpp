#pragma once

#include <stdexcept>
#include <string>

namespace pct {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input text could not be parsed (bad CSV row, malformed JSON, bad route document).
class ParseError : public Error {
  public:
    using Error::Error;
};

/// Input parsed but violates a domain invariant.
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// Model fitting failed (separation, singular system, non-convergence).
class FitError : public Error {
  public:
    using Error::Error;
};

/// A scenario cannot be computed for the given inputs (e.g. no gender split).
class ScenarioUnavailable : public Error {
  public:
    using Error::Error;
};

/// Transient failure talking to the routing service; the request may be retried.
class RetriableError : public Error {
  public:
    using Error::Error;
};

/// Routing service refused the request because of its quota.
class ThrottleError : public RetriableError {
  public:
    using RetriableError::RetriableError;
};

/// Lookup of something that does not exist (region, layer, table cell).
class NotFound : public Error {
  public:
    using Error::Error;
};

/// A pipeline stage failed; what() is prefixed with the stage name.
class StageError : public Error {
  public:
    StageError(std::string stage, const std::string &cause)
        : Error("[" + stage + "] " + cause), stage_{std::move(stage)} {}

    const std::string &stage() const noexcept { return stage_; }

  private:
    std::string stage_;
};

} // namespace pct
