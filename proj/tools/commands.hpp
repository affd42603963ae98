#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "taskwise/normalize.hpp"
#include "taskwise/rewards.hpp"
#include "taskwise/scorer.hpp"

namespace taskwise::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitScorer = 3;

struct ScoreOptions {
  std::filesystem::path input;
  std::filesystem::path output;
  std::optional<std::filesystem::path> config;  // reward/scorer settings (JSON)
  RewardConfig rewards;
  ScorerConfig scorer;
  unsigned jobs = 1;
};

struct AdvantageOptions {
  std::filesystem::path input;
  std::filesystem::path output;
  std::optional<std::filesystem::path> stats_in;
  std::optional<std::filesystem::path> stats_out;  // defaults to <output>.stats.json
  NormalizerConfig normalizer;
};

struct SimulateOptions {
  std::filesystem::path config;
  std::filesystem::path output;  // prefix: <output>.csv and <output>.summary.json
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<AdvantageScheme> scheme;
  std::optional<double> beta;
  std::optional<double> beta_kl;
  std::optional<double> epsilon;
  std::optional<std::size_t> group_size;
};

struct ReportOptions {
  std::filesystem::path input;  // CSV written by simulate
};

/// Score a JSONL file of {"id","task","response","ground_truth"[,"query"]} records.
/// Bad records become {"id","error"} lines; the run continues.
int cmd_score(const ScoreOptions& options, std::ostream& out, std::ostream& err);

/// Turn grouped reward records {"id","group","task","r_total"} into advantages.
int cmd_advantage(const AdvantageOptions& options, std::ostream& out, std::ostream& err);

int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err);

/// Per-scheme, per-task long-run statistics of a simulation CSV.
int cmd_report(const ReportOptions& options, std::ostream& out, std::ostream& err);

/// Apply a reward/scorer JSON settings file on top of `options`.
void apply_score_config(const Json& doc, ScoreOptions& options);

/// Entry point shared by the executable and the tests.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace taskwise::cli
