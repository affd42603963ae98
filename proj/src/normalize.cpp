#include "taskwise/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

#include "taskwise/errors.hpp"

namespace taskwise {

namespace {

// Mean of the sorted rewards, shifted by the minimum so constant groups are exact.
double group_mean(std::span<const double> rewards) {
  std::vector<double> sorted(rewards.begin(), rewards.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double r : sorted) sum += r - sorted.front();
  return sorted.front() + sum / static_cast<double>(sorted.size());
}

double reward_range(std::span<const double> rewards) {
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  return *hi - *lo;
}

void require_rewards(const RolloutGroup& group) {
  if (group.rewards.empty()) throw ParameterError("rollout group has no rewards");
}

}  // namespace

std::string_view to_string(AdvantageScheme scheme) noexcept {
  switch (scheme) {
    case AdvantageScheme::Grpo: return "grpo";
    case AdvantageScheme::DrGrpo: return "drgrpo";
    case AdvantageScheme::Ema: return "ema";
  }
  return "unknown";
}

std::optional<AdvantageScheme> scheme_from_string(std::string_view name) noexcept {
  for (auto s : {AdvantageScheme::Grpo, AdvantageScheme::DrGrpo, AdvantageScheme::Ema}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

std::string_view to_string(FilterReason reason) noexcept {
  switch (reason) {
    case FilterReason::None: return "none";
    case FilterReason::AllCorrect: return "all_correct";
    case FilterReason::AllIncorrect: return "all_incorrect";
    case FilterReason::Constant: return "constant";
  }
  return "unknown";
}

double TaskStats::sigma() const noexcept { return std::sqrt(std::max(0.0, m2 - m1 * m1)); }

BatchMoments batch_moments(std::span<const double> rewards) {
  if (rewards.empty()) return {};
  std::vector<double> sorted(rewards.begin(), rewards.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double r : sorted) {
    sum += r;
    sum_sq += r * r;
  }
  const auto n = static_cast<double>(sorted.size());
  return {sum / n, sum_sq / n};
}

double group_std(std::span<const double> rewards) {
  if (rewards.empty()) return 0.0;
  const double mean = group_mean(rewards);
  double acc = 0.0;
  for (double r : rewards) acc += (r - mean) * (r - mean);
  return std::sqrt(acc / static_cast<double>(rewards.size()));
}

std::vector<double> drgrpo_advantages(const RolloutGroup& group) {
  require_rewards(group);
  const double mean = group_mean(group.rewards);
  std::vector<double> out;
  out.reserve(group.rewards.size());
  for (double r : group.rewards) out.push_back(r - mean);
  return out;
}

std::vector<double> grpo_advantages(const RolloutGroup& group, double eps_degenerate) {
  require_rewards(group);
  const double std_dev = group_std(group.rewards);
  if (reward_range(group.rewards) < eps_degenerate || !(std_dev > 0.0)) {
    throw DegenerateGroup("group rewards have zero spread");
  }
  auto out = drgrpo_advantages(group);
  for (double& a : out) a /= std_dev;
  return out;
}

TaskStats ema_update(const TaskStats& stats, std::span<const double> rewards) {
  if (rewards.empty()) throw ParameterError("EMA update needs at least one reward");
  const auto moments = batch_moments(rewards);
  TaskStats next = stats;
  if (!stats.initialized()) {
    next.m1 = moments.mean;
    next.m2 = moments.second;
  } else {
    next.m1 = stats.beta * stats.m1 + (1.0 - stats.beta) * moments.mean;
    next.m2 = stats.beta * stats.m2 + (1.0 - stats.beta) * moments.second;
  }
  ++next.steps;
  return next;
}

std::vector<double> scaled_advantages(const RolloutGroup& group, double sigma,
                                      const EmaAdvantageOptions& options) {
  auto out = drgrpo_advantages(group);
  const double scale = std::max(sigma, options.sigma_min);
  for (double& a : out) a = std::clamp(a / scale, -options.clip, options.clip);
  return out;
}

std::vector<double> ema_advantages(const RolloutGroup& group, const TaskStats& stats,
                                   const EmaAdvantageOptions& options) {
  if (!stats.initialized()) {
    throw StatsUninitialized("no EMA statistics for task " + std::string(to_string(stats.task)));
  }
  return scaled_advantages(group, stats.sigma(), options);
}

RolloutGroup filter_group(RolloutGroup group, double task_max, double eps_degenerate) {
  group.filtered = false;
  group.filter_reason = FilterReason::None;
  if (group.rewards.empty() || reward_range(group.rewards) >= eps_degenerate) return group;
  group.filtered = true;
  group.advantages.reset();
  const double value = group.rewards.front();
  if (std::abs(value - task_max) < eps_degenerate) {
    group.filter_reason = FilterReason::AllCorrect;
  } else if (std::abs(value) < eps_degenerate) {
    group.filter_reason = FilterReason::AllIncorrect;
  } else {
    group.filter_reason = FilterReason::Constant;
  }
  return group;
}

TaskStatsRegistry::TaskStatsRegistry(double beta) : beta_(beta) {
  if (!(beta >= 0.0 && beta < 1.0)) throw ParameterError("EMA beta must lie in [0, 1)");
}

TaskStatsRegistry::TaskStatsRegistry(const TaskStatsRegistry& other) {
  std::shared_lock lock(other.mutex_);
  stats_ = other.stats_;
  beta_ = other.beta_;
}

TaskStatsRegistry& TaskStatsRegistry::operator=(const TaskStatsRegistry& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  stats_ = other.stats_;
  beta_ = other.beta_;
  return *this;
}

std::optional<TaskStats> TaskStatsRegistry::get(TaskKind task) const {
  std::shared_lock lock(mutex_);
  const auto it = stats_.find(task);
  if (it == stats_.end()) return std::nullopt;
  return it->second;
}

TaskStats TaskStatsRegistry::update(TaskKind task, std::span<const double> rewards) {
  std::unique_lock lock(mutex_);
  auto it = stats_.find(task);
  if (it == stats_.end()) {
    TaskStats fresh;
    fresh.task = task;
    fresh.beta = beta_;
    it = stats_.emplace(task, fresh).first;
  }
  it->second = ema_update(it->second, rewards);
  return it->second;
}

void TaskStatsRegistry::set(const TaskStats& stats) {
  std::unique_lock lock(mutex_);
  stats_[stats.task] = stats;
}

std::vector<TaskStats> TaskStatsRegistry::snapshot() const {
  std::shared_lock lock(mutex_);
  std::vector<TaskStats> out;
  out.reserve(stats_.size());
  for (const auto& [task, stats] : stats_) out.push_back(stats);
  return out;
}

Json TaskStatsRegistry::to_json() const {
  Json doc = Json::object();
  for (const auto& s : snapshot()) {
    Json entry = Json::object();
    entry["m1"] = s.m1;
    entry["m2"] = s.m2;
    entry["steps"] = s.steps;
    entry["beta"] = s.beta;
    doc[std::string(to_string(s.task))] = std::move(entry);
  }
  return doc;
}

TaskStatsRegistry TaskStatsRegistry::from_json(const Json& doc, double beta) {
  if (!doc.is_object()) throw ConfigError("$", "stats checkpoint must be a JSON object");
  TaskStatsRegistry registry(beta);
  for (const auto& [key, entry] : doc.items()) {
    const auto task = task_kind_from_string(key);
    if (!task) throw ConfigError(key, "unknown task");
    auto number = [&](const char* field) {
      if (!entry.is_object() || !entry.contains(field) || !entry.at(field).is_number()) {
        throw ConfigError(key + "." + field, "expected a number");
      }
      return entry.at(field).get<double>();
    };
    TaskStats stats;
    stats.task = *task;
    stats.m1 = number("m1");
    stats.m2 = number("m2");
    stats.beta = number("beta");
    const bool steps_ok = entry.contains("steps") && entry.at("steps").is_number_integer() &&
                          (entry.at("steps").is_number_unsigned() ||
                           entry.at("steps").get<std::int64_t>() >= 0);
    if (!steps_ok) throw ConfigError(key + ".steps", "expected a non-negative integer");
    stats.steps = entry.at("steps").get<std::uint64_t>();
    if (!(stats.beta >= 0.0 && stats.beta < 1.0)) throw ConfigError(key + ".beta", "must lie in [0, 1)");
    registry.stats_[*task] = stats;
  }
  return registry;
}

void TaskStatsRegistry::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write stats checkpoint " + path.string());
  out << to_json().dump(2) << '\n';
}

TaskStatsRegistry TaskStatsRegistry::load(const std::filesystem::path& path, double beta) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read stats checkpoint " + path.string());
  Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("$", "stats checkpoint is not valid JSON");
  return from_json(doc, beta);
}

AdvantageNormalizer::AdvantageNormalizer(NormalizerConfig config)
    : AdvantageNormalizer(config, TaskStatsRegistry(config.beta)) {}

AdvantageNormalizer::AdvantageNormalizer(NormalizerConfig config, TaskStatsRegistry stats)
    : config_(config), stats_(std::move(stats)) {
  if (config_.group_size < 2) throw ParameterError("group size must be at least 2");
  if (!(config_.sigma_min > 0.0)) throw ParameterError("sigma_min must be positive");
  if (!(config_.clip > 0.0)) throw ParameterError("advantage clip must be positive");
}

RolloutGroup AdvantageNormalizer::process(RolloutGroup group) {
  if (group.rewards.size() != config_.group_size) {
    throw ParameterError("group has " + std::to_string(group.rewards.size()) +
                         " rewards, expected " + std::to_string(config_.group_size));
  }
  group.advantages.reset();
  if (config_.filter) {
    const double task_max = max_accuracy_reward(group.task) + config_.format_weight;
    group = filter_group(std::move(group), task_max, config_.eps_degenerate);
  }
  if (group.filtered) {
    if (config_.update_stats_on_filtered) stats_.update(group.task, group.rewards);
    return group;
  }

  const EmaAdvantageOptions options{config_.sigma_min, config_.clip};
  switch (config_.scheme) {
    case AdvantageScheme::Grpo:
      stats_.update(group.task, group.rewards);
      group.advantages = grpo_advantages(group, config_.eps_degenerate);
      break;
    case AdvantageScheme::DrGrpo:
      stats_.update(group.task, group.rewards);
      group.advantages = drgrpo_advantages(group);
      break;
    case AdvantageScheme::Ema: {
      const auto current = stats_.get(group.task);
      const bool update_first = config_.update_order == EmaUpdateOrder::Before ||
                                !current || !current->initialized();
      TaskStats stats = update_first ? stats_.update(group.task, group.rewards) : *current;
      group.advantages = config_.sigma_source == SigmaSource::Group
                             ? scaled_advantages(group, group_std(group.rewards), options)
                             : ema_advantages(group, stats, options);
      if (!update_first) stats_.update(group.task, group.rewards);
      break;
    }
  }
  return group;
}

}  // namespace taskwise
