#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "taskwise/normalize.hpp"
#include "taskwise/objective.hpp"
#include "taskwise/rng.hpp"

namespace taskwise::sim {

enum class RewardFamily {
  SparseBinary,  // reward = scale * Bernoulli(p_arm)
  DenseBounded,  // reward = scale * Beta(alpha_arm, beta_arm)
};

struct BetaParams {
  double alpha = 1.0;
  double beta = 1.0;
};

/// Multi-armed bandit standing in for one task's prompt distribution.
struct SyntheticTask {
  std::string name;
  TaskKind kind = TaskKind::MathQA;  // statistics key; distinct per experiment
  RewardFamily family = RewardFamily::SparseBinary;
  std::vector<double> success_prob;   // SparseBinary, one per arm
  std::vector<BetaParams> beta_arms;  // DenseBounded, one per arm
  double reward_scale = 1.0;
  std::uint64_t seed = 0;

  std::size_t arms() const noexcept;
  double arm_mean(std::size_t arm) const;
  double arm_std(std::size_t arm) const;
  /// Throws ConfigError naming the offending field, rooted at `path`.
  void validate(const std::string& path = "task") const;
};

SyntheticTask sparse_task(std::string name, TaskKind kind, std::vector<double> p,
                          double scale = 1.0, std::uint64_t seed = 0);
SyntheticTask dense_task(std::string name, TaskKind kind, std::vector<BetaParams> arms,
                         double scale = 1.0, std::uint64_t seed = 0);

/// Sample `group_size` arms from `policy` in `context` and draw their rewards.
PolicyGroup generate_group(const SyntheticTask& task, const PolicySnapshot& policy,
                           std::size_t context, std::size_t group_size, Rng& rng);

enum class Interleave {
  RoundRobin,  // one group and one update per task per step
  Mixed,       // one group per task per step, a single update over all of them
};

struct ExperimentOptions {
  std::size_t steps = 1000;
  std::size_t group_size = kDefaultGroupSize;
  double learning_rate = 0.1;
  ObjectiveParams objective;
  double ema_beta = kDefaultEmaBeta;
  double sigma_min = kDefaultSigmaMin;
  double clip = kDefaultAdvantageClip;
  double eps_degenerate = kDefaultDegenerateEps;
  EmaUpdateOrder update_order = EmaUpdateOrder::Before;
  SigmaSource sigma_source = SigmaSource::Ema;
  bool update_stats_on_filtered = false;
  Interleave interleave = Interleave::RoundRobin;
  std::uint64_t seed = 42;
};

struct TaskSeries {
  std::string name;
  TaskKind kind = TaskKind::MathQA;
  std::vector<double> mean_reward;
  std::vector<double> ema_sigma;
  std::vector<double> mean_abs_advantage;  // 0 at filtered steps
  std::vector<double> entropy;
  std::vector<bool> filtered;

  /// Mean |A| over steps whose group was not filtered.
  double long_run_mean_abs_advantage() const;
  double filter_rate() const;
  double final_best_arm_prob = 0.0;
};

struct RunReport {
  AdvantageScheme scheme = AdvantageScheme::Ema;
  std::size_t steps = 0;
  std::vector<TaskSeries> tasks;
  /// Mean over tasks of the final probability mass on the best arm(s).
  double arm_selection_accuracy = 0.0;
  PolicySnapshot final_policy{1, 1};
};

/// Round-robin (or mixed) training loop: per step and task, generate a group,
/// filter it, normalize under `scheme`, and take one gradient-ascent step on the
/// clipped-surrogate objective of a tabular policy (one context per task).
RunReport run_experiment(const std::vector<SyntheticTask>& tasks, AdvantageScheme scheme,
                         const ExperimentOptions& options);

/// Versioned experiment file.
struct ExperimentConfig {
  int version = 1;
  std::vector<SyntheticTask> tasks;
  std::vector<AdvantageScheme> schemes;
  ExperimentOptions options;
};

inline constexpr int kExperimentConfigVersion = 1;

/// Throws ConfigError with a JSON path such as "tasks[1].p[0]".
ExperimentConfig parse_experiment_config(const Json& doc);

/// Header plus one row per (scheme, step, task).
void write_report_csv(std::ostream& out, const std::vector<RunReport>& reports);
Json report_summary(const std::vector<RunReport>& reports);

/// Shortest round-trip decimal for a double; used for every number the simulator writes.
std::string format_double(double value);

}  // namespace taskwise::sim
