#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "taskwise/normalize.hpp"

namespace taskwise {

enum class PolicyRole { Current, Old, Reference };

/// Tabular softmax policy: one row of logits per context over a finite action set.
class PolicySnapshot {
 public:
  PolicySnapshot(std::size_t contexts, std::size_t actions, PolicyRole role = PolicyRole::Current);
  PolicySnapshot(std::vector<std::vector<double>> logits, PolicyRole role = PolicyRole::Current);

  std::size_t contexts() const noexcept { return contexts_; }
  std::size_t actions() const noexcept { return actions_; }
  PolicyRole role() const noexcept { return role_; }
  void set_role(PolicyRole role) noexcept { role_ = role; }

  double logit(std::size_t context, std::size_t action) const;
  double& logit(std::size_t context, std::size_t action);
  std::span<const double> row(std::size_t context) const;

  /// Flat row-major view, contexts x actions.
  std::span<double> data() noexcept { return logits_; }
  std::span<const double> data() const noexcept { return logits_; }

  double log_prob(std::size_t context, std::size_t action) const;
  std::vector<double> probabilities(std::size_t context) const;
  double entropy(std::size_t context) const;

 private:
  std::size_t contexts_;
  std::size_t actions_;
  std::vector<double> logits_;
  PolicyRole role_;
};

struct Step {
  std::size_t context = 0;
  std::size_t action = 0;
};

/// One sampled output o_i: a sequence of actions whose probability is the product
/// of per-step probabilities.
using Trajectory = std::vector<Step>;

double sequence_log_prob(const PolicySnapshot& policy, const Trajectory& trajectory);

struct ObjectiveParams {
  double epsilon = 0.2;
  double beta_kl = 0.01;

  /// Throws ParameterError unless epsilon in (0, 1) and beta_kl >= 0.
  void validate() const;
};

/// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A). Throws InvalidProbability for ratio <= 0.
double surrogate_term(double ratio, double advantage, double eps);

/// k3 estimator r - log r - 1 with r = p_ref / p_current.
double kl_penalty(double p_current, double p_ref);

/// kl_penalty evaluated from log-probabilities, for sequence-level products.
double kl_penalty_log(double log_p_current, double log_p_ref);

/// A rollout group together with the trajectories that produced its rewards.
struct PolicyGroup {
  RolloutGroup group;
  std::vector<Trajectory> trajectories;
};

struct ObjectiveEvaluation {
  double value = 0.0;
  PolicySnapshot gradient;  // d value / d current logits
  std::size_t groups_used = 0;
};

/// Mean over unfiltered groups of (1/G) sum_i [surrogate_i - beta_kl * KL_i], with
/// sequence-level ratios against `old` and KL against `reference`. Groups that are
/// filtered or carry no advantages contribute nothing.
double group_objective(std::span<const PolicyGroup> groups, const PolicySnapshot& current,
                       const PolicySnapshot& old, const PolicySnapshot& reference,
                       const ObjectiveParams& params);

/// Objective value and its analytic gradient with respect to `current`'s logits.
ObjectiveEvaluation evaluate_objective(std::span<const PolicyGroup> groups,
                                       const PolicySnapshot& current, const PolicySnapshot& old,
                                       const PolicySnapshot& reference,
                                       const ObjectiveParams& params);

}  // namespace taskwise
