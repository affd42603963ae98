#pragma once

#include <memory>
#include <string>

namespace taskwise {

struct ScoreRequest {
  std::string query;
  std::string prediction;
  std::string reference;
};

struct ScoreResponse {
  double score = 0.0;  // in [0, 1]
};

/// Range of raw scores produced by a backend; mapped linearly onto [0, 1] and clamped.
struct RawScoreRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Source of raw similarity scores. Implementations must be safe to call concurrently.
class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;
  virtual double raw_score(const ScoreRequest& request) const = 0;
};

/// Token-level Jaccard similarity |A ∩ B| / |A ∪ B| between whitespace token sets of
/// prediction and reference. Deterministic stand-in for a learned reward model.
class MockScorerBackend final : public ScorerBackend {
 public:
  double raw_score(const ScoreRequest& request) const override;
};

/// Remote reward model reached with `POST <base>/score`, JSON body
/// {"query","prediction","reference"} and reply {"score": number}.
class HttpScorerBackend final : public ScorerBackend {
 public:
  HttpScorerBackend(std::string url, int timeout_ms);

  double raw_score(const ScoreRequest& request) const override;

  const std::string& url() const noexcept { return url_; }
  int timeout_ms() const noexcept { return timeout_ms_; }

 private:
  std::string url_;
  std::string host_;  // scheme://host[:port]
  std::string path_;  // path prefix + "/score"
  int timeout_ms_;
};

struct ScorerConfig {
  std::string url;  // empty selects the mock backend
  int timeout_ms = 30000;
  RawScoreRange raw_range;
};

/// Reads SCORER_URL and SCORER_TIMEOUT_MS, falling back to `base` for unset variables.
ScorerConfig scorer_config_from_env(ScorerConfig base = {});

/// Shareable front end: validates requests and normalizes backend scores to [0, 1].
class ScorerClient {
 public:
  ScorerClient(std::shared_ptr<const ScorerBackend> backend, RawScoreRange range = {});

  static ScorerClient from_config(const ScorerConfig& config);

  /// Throws ParameterError for empty request fields and ScoringUnavailable when the
  /// backend fails or returns a non-finite score.
  ScoreResponse score(const ScoreRequest& request) const;

 private:
  std::shared_ptr<const ScorerBackend> backend_;
  RawScoreRange range_;
};

}  // namespace taskwise
