#include "taskwise/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "taskwise/errors.hpp"

namespace taskwise {

namespace {

double log_sum_exp(std::span<const double> row) {
  const double hi = *std::max_element(row.begin(), row.end());
  double acc = 0.0;
  for (double v : row) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

void check_shape(const PolicySnapshot& a, const PolicySnapshot& b) {
  if (a.contexts() != b.contexts() || a.actions() != b.actions()) {
    throw ParameterError("policy snapshots have different shapes");
  }
}

bool contributes(const PolicyGroup& g) {
  return !g.group.filtered && g.group.advantages.has_value() && !g.group.advantages->empty();
}

void check_group(const PolicyGroup& g) {
  if (g.group.advantages->size() != g.trajectories.size()) {
    throw ParameterError("group advantages and trajectories differ in length");
  }
}

// Shared evaluation; fills `grad` when non-null.
double evaluate(std::span<const PolicyGroup> groups, const PolicySnapshot& current,
                const PolicySnapshot& old, const PolicySnapshot& reference,
                const ObjectiveParams& params, PolicySnapshot* grad, std::size_t* used) {
  params.validate();
  check_shape(current, old);
  check_shape(current, reference);

  std::size_t n_groups = 0;
  for (const auto& g : groups) n_groups += contributes(g) ? 1 : 0;
  if (used != nullptr) *used = n_groups;
  if (n_groups == 0) return 0.0;

  double total = 0.0;
  for (const auto& g : groups) {
    if (!contributes(g)) continue;
    check_group(g);
    const auto& adv = *g.group.advantages;
    const double weight = 1.0 / (static_cast<double>(adv.size()) * static_cast<double>(n_groups));
    double group_sum = 0.0;
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const auto& traj = g.trajectories[i];
      const double lp_cur = sequence_log_prob(current, traj);
      const double lp_old = sequence_log_prob(old, traj);
      const double lp_ref = sequence_log_prob(reference, traj);
      const double ratio = std::exp(lp_cur - lp_old);
      const double a = adv[i];
      const double surrogate = surrogate_term(ratio, a, params.epsilon);
      group_sum += surrogate - params.beta_kl * kl_penalty_log(lp_cur, lp_ref);

      if (grad != nullptr) {
        const double clipped = std::clamp(ratio, 1.0 - params.epsilon, 1.0 + params.epsilon);
        // The unclipped branch is the active one exactly when it attains the min.
        const double d_surrogate = ratio * a <= clipped * a ? ratio * a : 0.0;
        const double r = std::exp(lp_ref - lp_cur);
        const double d_logp = weight * (d_surrogate + params.beta_kl * (r - 1.0));
        for (const Step& s : traj) {
          const auto probs = current.probabilities(s.context);
          for (std::size_t k = 0; k < probs.size(); ++k) {
            grad->logit(s.context, k) += d_logp * ((k == s.action ? 1.0 : 0.0) - probs[k]);
          }
        }
      }
    }
    total += group_sum / static_cast<double>(adv.size());
  }
  return total / static_cast<double>(n_groups);
}

}  // namespace

PolicySnapshot::PolicySnapshot(std::size_t contexts, std::size_t actions, PolicyRole role)
    : contexts_(contexts), actions_(actions), logits_(contexts * actions, 0.0), role_(role) {
  if (contexts == 0 || actions == 0) throw ParameterError("policy needs at least one context and action");
}

PolicySnapshot::PolicySnapshot(std::vector<std::vector<double>> logits, PolicyRole role)
    : contexts_(logits.size()), actions_(logits.empty() ? 0 : logits.front().size()), role_(role) {
  if (contexts_ == 0 || actions_ == 0) throw ParameterError("policy needs at least one context and action");
  logits_.reserve(contexts_ * actions_);
  for (const auto& row : logits) {
    if (row.size() != actions_) throw ParameterError("ragged logit table");
    for (double v : row) {
      if (!std::isfinite(v)) throw ParameterError("logits must be finite");
      logits_.push_back(v);
    }
  }
}

double PolicySnapshot::logit(std::size_t context, std::size_t action) const {
  return logits_.at(context * actions_ + action);
}

double& PolicySnapshot::logit(std::size_t context, std::size_t action) {
  return logits_.at(context * actions_ + action);
}

std::span<const double> PolicySnapshot::row(std::size_t context) const {
  if (context >= contexts_) throw ParameterError("context index out of range");
  return std::span<const double>(logits_).subspan(context * actions_, actions_);
}

double PolicySnapshot::log_prob(std::size_t context, std::size_t action) const {
  const auto r = row(context);
  if (action >= actions_) throw ParameterError("action index out of range");
  return r[action] - log_sum_exp(r);
}

std::vector<double> PolicySnapshot::probabilities(std::size_t context) const {
  const auto r = row(context);
  const double lse = log_sum_exp(r);
  std::vector<double> out(r.size());
  for (std::size_t k = 0; k < r.size(); ++k) out[k] = std::exp(r[k] - lse);
  return out;
}

double PolicySnapshot::entropy(std::size_t context) const {
  const auto r = row(context);
  const double lse = log_sum_exp(r);
  double h = 0.0;
  for (double v : r) {
    const double lp = v - lse;
    h -= std::exp(lp) * lp;
  }
  return h;
}

double sequence_log_prob(const PolicySnapshot& policy, const Trajectory& trajectory) {
  double lp = 0.0;
  for (const Step& s : trajectory) lp += policy.log_prob(s.context, s.action);
  return lp;
}

void ObjectiveParams::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ParameterError("epsilon must lie in (0, 1)");
  if (!(beta_kl >= 0.0) || !std::isfinite(beta_kl)) throw ParameterError("beta_kl must be >= 0");
}

double surrogate_term(double ratio, double advantage, double eps) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) throw InvalidProbability("probability ratio must be positive and finite");
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_penalty(double p_current, double p_ref) {
  auto valid = [](double p) { return p > 0.0 && p <= 1.0; };
  if (!valid(p_current) || !valid(p_ref)) throw InvalidProbability("KL needs probabilities in (0, 1]");
  return kl_penalty_log(std::log(p_current), std::log(p_ref));
}

double kl_penalty_log(double log_p_current, double log_p_ref) {
  if (!std::isfinite(log_p_current) || !std::isfinite(log_p_ref)) {
    throw InvalidProbability("KL needs non-zero probabilities");
  }
  const double log_r = log_p_ref - log_p_current;
  // r - log r - 1, written to stay accurate near r = 1.
  return std::expm1(log_r) - log_r;
}

double group_objective(std::span<const PolicyGroup> groups, const PolicySnapshot& current,
                       const PolicySnapshot& old, const PolicySnapshot& reference,
                       const ObjectiveParams& params) {
  return evaluate(groups, current, old, reference, params, nullptr, nullptr);
}

ObjectiveEvaluation evaluate_objective(std::span<const PolicyGroup> groups,
                                       const PolicySnapshot& current, const PolicySnapshot& old,
                                       const PolicySnapshot& reference,
                                       const ObjectiveParams& params) {
  ObjectiveEvaluation out{0.0, PolicySnapshot(current.contexts(), current.actions()), 0};
  out.value = evaluate(groups, current, old, reference, params, &out.gradient, &out.groups_used);
  return out;
}

}  // namespace taskwise
