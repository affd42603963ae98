#include "taskwise/scorer.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "taskwise/errors.hpp"

namespace taskwise {

namespace {

std::set<std::string> token_set(const std::string& text) {
  std::set<std::string> tokens;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) tokens.insert(tok);
  return tokens;
}

}  // namespace

double MockScorerBackend::raw_score(const ScoreRequest& request) const {
  const auto pred = token_set(request.prediction);
  const auto ref = token_set(request.reference);
  if (pred.empty() && ref.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& tok : pred) common += ref.count(tok);
  const std::size_t uni = pred.size() + ref.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

HttpScorerBackend::HttpScorerBackend(std::string url, int timeout_ms)
    : url_(std::move(url)), timeout_ms_(timeout_ms) {
  if (timeout_ms_ <= 0) throw ParameterError("scorer timeout must be positive");
  const auto scheme_end = url_.find("://");
  if (scheme_end == std::string::npos) throw ParameterError("scorer URL needs a scheme: " + url_);
  const auto path_start = url_.find('/', scheme_end + 3);
  host_ = url_.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? std::string() : url_.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/score";
}

double HttpScorerBackend::raw_score(const ScoreRequest& request) const {
  httplib::Client client(host_);
  const auto sec = timeout_ms_ / 1000;
  const auto usec = (timeout_ms_ % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);

  const nlohmann::json body = {
      {"query", request.query}, {"prediction", request.prediction}, {"reference", request.reference}};
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) {
    throw ScoringUnavailable("transport error: " + httplib::to_string(res.error()), true, 1);
  }
  if (res->status != 200) {
    // 5xx and 429 are worth retrying; other statuses indicate a contract problem.
    const bool retryable = res->status >= 500 || res->status == 429;
    throw ScoringUnavailable("backend returned HTTP " + std::to_string(res->status), retryable, 1);
  }
  const auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.is_object() || !reply.contains("score") ||
      !reply["score"].is_number()) {
    throw ScoringUnavailable("malformed backend reply", false, 1);
  }
  return reply["score"].get<double>();
}

ScorerConfig scorer_config_from_env(ScorerConfig base) {
  if (const char* url = std::getenv("SCORER_URL"); url != nullptr && *url != '\0') base.url = url;
  if (const char* timeout = std::getenv("SCORER_TIMEOUT_MS"); timeout != nullptr && *timeout != '\0') {
    char* end = nullptr;
    const long ms = std::strtol(timeout, &end, 10);
    if (end == timeout || *end != '\0' || ms <= 0) {
      throw ConfigError("SCORER_TIMEOUT_MS", "expected a positive integer");
    }
    base.timeout_ms = static_cast<int>(ms);
  }
  return base;
}

ScorerClient::ScorerClient(std::shared_ptr<const ScorerBackend> backend, RawScoreRange range)
    : backend_(std::move(backend)), range_(range) {
  if (!backend_) throw ParameterError("scorer backend is null");
  if (!(range_.hi > range_.lo)) throw ParameterError("raw score range must satisfy lo < hi");
}

ScorerClient ScorerClient::from_config(const ScorerConfig& config) {
  if (config.url.empty()) return ScorerClient(std::make_shared<MockScorerBackend>(), config.raw_range);
  return ScorerClient(std::make_shared<HttpScorerBackend>(config.url, config.timeout_ms), config.raw_range);
}

ScoreResponse ScorerClient::score(const ScoreRequest& request) const {
  if (request.query.empty() || request.prediction.empty() || request.reference.empty()) {
    throw ParameterError("score request fields must be non-empty");
  }
  const double raw = backend_->raw_score(request);
  if (!std::isfinite(raw)) throw ScoringUnavailable("backend returned a non-finite score", false, 1);
  const double scaled = (raw - range_.lo) / (range_.hi - range_.lo);
  return {std::clamp(scaled, 0.0, 1.0)};
}

}  // namespace taskwise
