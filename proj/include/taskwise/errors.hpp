#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace taskwise {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A reference value makes the metric undefined (zero MRA reference, empty WER reference).
class DegenerateReference : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class CardinalityError : public Error {
 public:
  using Error::Error;
};

class InvalidProbability : public Error {
 public:
  using Error::Error;
};

/// Group rewards have zero spread, so per-group std normalization is undefined.
class DegenerateGroup : public Error {
 public:
  using Error::Error;
};

class StatsUninitialized : public Error {
 public:
  using Error::Error;
};

/// Raised when the external reward model cannot produce a score.
/// Carries enough metadata for the caller to decide whether to retry.
class ScoringUnavailable : public Error {
 public:
  ScoringUnavailable(const std::string& reason, bool retryable, int attempts)
      : Error("scoring unavailable: " + reason), retryable_(retryable), attempts_(attempts) {}

  bool retryable() const noexcept { return retryable_; }
  int attempts() const noexcept { return attempts_; }

 private:
  bool retryable_;
  int attempts_;
};

/// Invalid configuration value; `path()` names the offending field (e.g. "tasks[1].p[0]").
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace taskwise
