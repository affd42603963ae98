#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string_view>
#include <vector>

#include "taskwise/protocol.hpp"
#include "taskwise/task_kind.hpp"

namespace taskwise {

enum class AdvantageScheme { Grpo, DrGrpo, Ema };

std::string_view to_string(AdvantageScheme scheme) noexcept;
std::optional<AdvantageScheme> scheme_from_string(std::string_view name) noexcept;

/// Per-task exponential moving averages of the first and second reward moments.
struct TaskStats {
  TaskKind task = TaskKind::MultiChoiceQA;
  double m1 = 0.0;
  double m2 = 0.0;
  std::uint64_t steps = 0;
  double beta = 0.99;

  bool initialized() const noexcept { return steps > 0; }
  /// sqrt(max(0, m2 - m1^2)).
  double sigma() const noexcept;
};

enum class FilterReason { None, AllCorrect, AllIncorrect, Constant };

std::string_view to_string(FilterReason reason) noexcept;

/// The G rollouts sampled for one prompt.
struct RolloutGroup {
  TaskKind task = TaskKind::MultiChoiceQA;
  std::vector<double> rewards;
  std::optional<std::vector<double>> advantages;
  bool filtered = false;
  FilterReason filter_reason = FilterReason::None;
};

inline constexpr std::size_t kDefaultGroupSize = 8;
inline constexpr double kDefaultEmaBeta = 0.99;
inline constexpr double kDefaultSigmaMin = 1e-4;
inline constexpr double kDefaultAdvantageClip = 5.0;
inline constexpr double kDefaultDegenerateEps = 1e-9;

struct BatchMoments {
  double mean = 0.0;
  double second = 0.0;  // mean of squares
};

/// Mean and mean-of-squares, summed in sorted order so the result does not depend
/// on the order of `rewards`.
BatchMoments batch_moments(std::span<const double> rewards);

/// Population standard deviation of the group rewards.
double group_std(std::span<const double> rewards);

/// (R_i - mean) / std_group. Throws DegenerateGroup when the reward range is below
/// `eps_degenerate`.
std::vector<double> grpo_advantages(const RolloutGroup& group,
                                    double eps_degenerate = kDefaultDegenerateEps);

/// R_i - mean.
std::vector<double> drgrpo_advantages(const RolloutGroup& group);

/// One EMA step with the batch mean and second moment. An uninitialized `stats`
/// is seeded with the batch moments directly.
TaskStats ema_update(const TaskStats& stats, std::span<const double> rewards);

struct EmaAdvantageOptions {
  double sigma_min = kDefaultSigmaMin;
  double clip = kDefaultAdvantageClip;
};

/// (R_i - mean) / max(sigma, sigma_min), clipped to [-clip, clip].
/// Throws StatsUninitialized when `stats` has never been updated.
std::vector<double> ema_advantages(const RolloutGroup& group, const TaskStats& stats,
                                   const EmaAdvantageOptions& options = {});

/// Same centering, scaling and clipping as ema_advantages with an explicit scale.
std::vector<double> scaled_advantages(const RolloutGroup& group, double sigma,
                                      const EmaAdvantageOptions& options = {});

/// Marks groups whose reward range is below `eps_degenerate` (all correct, all
/// incorrect, or otherwise constant) as filtered and drops their advantages.
RolloutGroup filter_group(RolloutGroup group, double task_max,
                          double eps_degenerate = kDefaultDegenerateEps);

/// Thread-safe map TaskKind -> TaskStats. Readers run concurrently; updates of
/// the registry are serialized.
class TaskStatsRegistry {
 public:
  explicit TaskStatsRegistry(double beta = kDefaultEmaBeta);

  TaskStatsRegistry(const TaskStatsRegistry& other);
  TaskStatsRegistry& operator=(const TaskStatsRegistry& other);

  double beta() const noexcept { return beta_; }

  std::optional<TaskStats> get(TaskKind task) const;
  TaskStats update(TaskKind task, std::span<const double> rewards);
  void set(const TaskStats& stats);
  std::vector<TaskStats> snapshot() const;

  /// {"<task>": {"m1", "m2", "steps", "beta"}, ...}
  Json to_json() const;
  static TaskStatsRegistry from_json(const Json& doc, double beta = kDefaultEmaBeta);

  void save(const std::filesystem::path& path) const;
  static TaskStatsRegistry load(const std::filesystem::path& path, double beta = kDefaultEmaBeta);

 private:
  mutable std::shared_mutex mutex_;
  std::map<TaskKind, TaskStats> stats_;
  double beta_;
};

enum class EmaUpdateOrder { Before, After };

/// Where EMA-GRPO takes its normalization scale from. `Group` substitutes the
/// group's own std and exists to compare trajectories against plain GRPO.
enum class SigmaSource { Ema, Group };

struct NormalizerConfig {
  AdvantageScheme scheme = AdvantageScheme::Ema;
  std::size_t group_size = kDefaultGroupSize;
  double beta = kDefaultEmaBeta;
  double sigma_min = kDefaultSigmaMin;
  double clip = kDefaultAdvantageClip;
  double eps_degenerate = kDefaultDegenerateEps;
  EmaUpdateOrder update_order = EmaUpdateOrder::Before;
  SigmaSource sigma_source = SigmaSource::Ema;
  bool filter = true;
  bool update_stats_on_filtered = false;
  /// Added to the task's accuracy ceiling when rewards include the format term.
  double format_weight = 0.0;
};

/// Filter -> statistics update -> advantages, for a stream of groups.
class AdvantageNormalizer {
 public:
  explicit AdvantageNormalizer(NormalizerConfig config = {});
  AdvantageNormalizer(NormalizerConfig config, TaskStatsRegistry stats);

  /// Throws ParameterError when the group size differs from the configured G and
  /// DegenerateGroup for GRPO on a constant group with filtering disabled.
  RolloutGroup process(RolloutGroup group);

  const NormalizerConfig& config() const noexcept { return config_; }
  TaskStatsRegistry& stats() noexcept { return stats_; }
  const TaskStatsRegistry& stats() const noexcept { return stats_; }

 private:
  NormalizerConfig config_;
  TaskStatsRegistry stats_;
};

}  // namespace taskwise
