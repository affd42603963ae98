#include "taskwise/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <set>

#include "taskwise/errors.hpp"

namespace taskwise::sim {

namespace {

// Logit for action slots beyond a task's arm count; its probability underflows to 0.
constexpr double kMaskedLogit = -1e4;

std::string at(const std::string& path, std::size_t index) {
  return path + "[" + std::to_string(index) + "]";
}

std::string field(const std::string& path, std::string_view name) {
  return path.empty() ? std::string(name) : path + "." + std::string(name);
}

double mean_of(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// Strict JSON readers that report the failing path.
class Reader {
 public:
  Reader(const Json& obj, std::string path, std::set<std::string> allowed)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "$" : path_, "expected an object");
    for (const auto& [key, value] : obj_.items()) {
      if (!allowed.count(key)) throw ConfigError(field(path_, key), "unknown field");
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }

  const Json& require(const char* key) const {
    if (!obj_.contains(key)) throw ConfigError(field(path_, key), "missing required field");
    return obj_.at(key);
  }

  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    return as_number(obj_.at(key), field(path_, key));
  }

  std::uint64_t count(const char* key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(field(path_, key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::string string(const char* key, std::optional<std::string> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      require(key);
    }
    const auto& v = obj_.at(key);
    if (!v.is_string()) throw ConfigError(field(path_, key), "expected a string");
    return v.get<std::string>();
  }

  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_boolean()) throw ConfigError(field(path_, key), "expected true or false");
    return v.get<bool>();
  }

  std::vector<double> numbers(const char* key) const {
    const auto& v = require(key);
    const std::string p = field(path_, key);
    if (!v.is_array()) throw ConfigError(p, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], at(p, i)));
    return out;
  }

  std::string path(const char* key) const { return field(path_, key); }

  static double as_number(const Json& v, const std::string& p) {
    if (!v.is_number()) throw ConfigError(p, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(p, "expected a finite number");
    return d;
  }

 private:
  const Json& obj_;
  std::string path_;
};

}  // namespace

std::size_t SyntheticTask::arms() const noexcept {
  return family == RewardFamily::SparseBinary ? success_prob.size() : beta_arms.size();
}

double SyntheticTask::arm_mean(std::size_t arm) const {
  if (family == RewardFamily::SparseBinary) return reward_scale * success_prob.at(arm);
  const auto& b = beta_arms.at(arm);
  return reward_scale * b.alpha / (b.alpha + b.beta);
}

double SyntheticTask::arm_std(std::size_t arm) const {
  if (family == RewardFamily::SparseBinary) {
    const double p = success_prob.at(arm);
    return reward_scale * std::sqrt(p * (1.0 - p));
  }
  const auto& b = beta_arms.at(arm);
  const double s = b.alpha + b.beta;
  return reward_scale * std::sqrt(b.alpha * b.beta / (s * s * (s + 1.0)));
}

void SyntheticTask::validate(const std::string& path) const {
  if (arms() < 2) {
    throw ConfigError(field(path, family == RewardFamily::SparseBinary ? "p" : "alpha"),
                      "a task needs at least 2 arms");
  }
  if (!(reward_scale > 0.0) || !std::isfinite(reward_scale)) {
    throw ConfigError(field(path, "scale"), "must be positive");
  }
  if (family == RewardFamily::SparseBinary) {
    for (std::size_t i = 0; i < success_prob.size(); ++i) {
      if (!(success_prob[i] >= 0.0 && success_prob[i] <= 1.0)) {
        throw ConfigError(at(field(path, "p"), i), "probability must lie in [0, 1]");
      }
    }
  } else {
    for (std::size_t i = 0; i < beta_arms.size(); ++i) {
      if (!(beta_arms[i].alpha > 0.0) || !std::isfinite(beta_arms[i].alpha)) {
        throw ConfigError(at(field(path, "alpha"), i), "must be positive");
      }
      if (!(beta_arms[i].beta > 0.0) || !std::isfinite(beta_arms[i].beta)) {
        throw ConfigError(at(field(path, "beta"), i), "must be positive");
      }
    }
  }
}

SyntheticTask sparse_task(std::string name, TaskKind kind, std::vector<double> p, double scale,
                          std::uint64_t seed) {
  SyntheticTask task;
  task.name = std::move(name);
  task.kind = kind;
  task.family = RewardFamily::SparseBinary;
  task.success_prob = std::move(p);
  task.reward_scale = scale;
  task.seed = seed;
  return task;
}

SyntheticTask dense_task(std::string name, TaskKind kind, std::vector<BetaParams> arms,
                         double scale, std::uint64_t seed) {
  SyntheticTask task;
  task.name = std::move(name);
  task.kind = kind;
  task.family = RewardFamily::DenseBounded;
  task.beta_arms = std::move(arms);
  task.reward_scale = scale;
  task.seed = seed;
  return task;
}

PolicyGroup generate_group(const SyntheticTask& task, const PolicySnapshot& policy,
                           std::size_t context, std::size_t group_size, Rng& rng) {
  if (group_size < 2) throw ParameterError("group size must be at least 2");
  const auto probs = policy.probabilities(context);
  const std::size_t arms = std::min(task.arms(), probs.size());
  const std::span<const double> weights(probs.data(), arms);

  PolicyGroup out;
  out.group.task = task.kind;
  out.group.rewards.reserve(group_size);
  out.trajectories.reserve(group_size);
  for (std::size_t i = 0; i < group_size; ++i) {
    const std::size_t arm = rng.categorical(weights);
    double reward = 0.0;
    if (task.family == RewardFamily::SparseBinary) {
      reward = rng.bernoulli(task.success_prob[arm]) ? 1.0 : 0.0;
    } else {
      reward = rng.beta(task.beta_arms[arm].alpha, task.beta_arms[arm].beta);
    }
    out.group.rewards.push_back(task.reward_scale * reward);
    out.trajectories.push_back({Step{context, arm}});
  }
  return out;
}

double TaskSeries::long_run_mean_abs_advantage() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mean_abs_advantage.size(); ++i) {
    if (filtered[i]) continue;
    sum += mean_abs_advantage[i];
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double TaskSeries::filter_rate() const {
  if (filtered.empty()) return 0.0;
  const auto n = std::count(filtered.begin(), filtered.end(), true);
  return static_cast<double>(n) / static_cast<double>(filtered.size());
}

RunReport run_experiment(const std::vector<SyntheticTask>& tasks, AdvantageScheme scheme,
                         const ExperimentOptions& options) {
  if (tasks.empty()) throw ConfigError("tasks", "at least one task is required");
  std::set<TaskKind> kinds;
  std::size_t max_arms = 0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    tasks[t].validate(at("tasks", t));
    if (!kinds.insert(tasks[t].kind).second) {
      throw ConfigError(at("tasks", t) + ".task", "task kinds must be distinct within an experiment");
    }
    max_arms = std::max(max_arms, tasks[t].arms());
  }
  options.objective.validate();
  if (!(options.learning_rate > 0.0)) throw ConfigError("learning_rate", "must be positive");

  PolicySnapshot policy(tasks.size(), max_arms, PolicyRole::Current);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (std::size_t a = tasks[t].arms(); a < max_arms; ++a) policy.logit(t, a) = kMaskedLogit;
  }
  PolicySnapshot reference = policy;
  reference.set_role(PolicyRole::Reference);

  NormalizerConfig norm;
  norm.scheme = scheme;
  norm.group_size = options.group_size;
  norm.beta = options.ema_beta;
  norm.sigma_min = options.sigma_min;
  norm.clip = options.clip;
  norm.eps_degenerate = options.eps_degenerate;
  norm.update_order = options.update_order;
  norm.sigma_source = options.sigma_source;
  norm.update_stats_on_filtered = options.update_stats_on_filtered;
  AdvantageNormalizer normalizer(norm);

  std::vector<Rng> rngs;
  rngs.reserve(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    rngs.emplace_back(mix_seed(mix_seed(options.seed, t), tasks[t].seed));
  }

  RunReport report;
  report.scheme = scheme;
  report.steps = options.steps;
  for (const auto& task : tasks) {
    TaskSeries series;
    series.name = task.name;
    series.kind = task.kind;
    report.tasks.push_back(std::move(series));
  }

  auto ascend = [&](std::span<const PolicyGroup> groups) {
    PolicySnapshot old = policy;
    old.set_role(PolicyRole::Old);
    const auto eval = evaluate_objective(groups, policy, old, reference, options.objective);
    if (eval.groups_used == 0) return;
    auto theta = policy.data();
    const auto grad = eval.gradient.data();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += options.learning_rate * grad[i];
  };

  auto record = [&](std::size_t t, const PolicyGroup& pg) {
    auto& s = report.tasks[t];
    s.mean_reward.push_back(mean_of(pg.group.rewards));
    const auto stats = normalizer.stats().get(tasks[t].kind);
    s.ema_sigma.push_back(stats ? stats->sigma() : 0.0);
    double abs_adv = 0.0;
    if (pg.group.advantages) {
      for (double a : *pg.group.advantages) abs_adv += std::abs(a);
      abs_adv /= static_cast<double>(pg.group.advantages->size());
    }
    s.mean_abs_advantage.push_back(abs_adv);
    s.entropy.push_back(policy.entropy(t));
    s.filtered.push_back(pg.group.filtered);
  };

  std::vector<PolicyGroup> batch(tasks.size());
  for (std::size_t step = 0; step < options.steps; ++step) {
    if (options.interleave == Interleave::RoundRobin) {
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        PolicyGroup pg = generate_group(tasks[t], policy, t, options.group_size, rngs[t]);
        pg.group = normalizer.process(std::move(pg.group));
        ascend(std::span<const PolicyGroup>(&pg, 1));
        record(t, pg);
      }
    } else {
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        batch[t] = generate_group(tasks[t], policy, t, options.group_size, rngs[t]);
        batch[t].group = normalizer.process(std::move(batch[t].group));
      }
      ascend(batch);
      for (std::size_t t = 0; t < tasks.size(); ++t) record(t, batch[t]);
    }
  }

  double accuracy = 0.0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto probs = policy.probabilities(t);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < tasks[t].arms(); ++a) best = std::max(best, tasks[t].arm_mean(a));
    double mass = 0.0;
    for (std::size_t a = 0; a < tasks[t].arms(); ++a) {
      if (tasks[t].arm_mean(a) >= best - 1e-12) mass += probs[a];
    }
    report.tasks[t].final_best_arm_prob = mass;
    accuracy += mass;
  }
  report.arm_selection_accuracy = accuracy / static_cast<double>(tasks.size());
  report.final_policy = policy;
  return report;
}

ExperimentConfig parse_experiment_config(const Json& doc) {
  Reader root(doc, "",
              {"version", "seed", "steps", "group_size", "schemes", "learning_rate", "beta",
               "beta_kl", "epsilon", "sigma_min", "clip", "interleave", "ema_update_order",
               "update_stats_on_filtered", "tasks"});
  ExperimentConfig config;
  const auto version = root.count("version", kExperimentConfigVersion);
  if (version != static_cast<std::uint64_t>(kExperimentConfigVersion)) {
    throw ConfigError("version", "unsupported config version " + std::to_string(version));
  }
  config.version = kExperimentConfigVersion;

  auto& o = config.options;
  o.seed = root.count("seed", o.seed);
  o.steps = root.count("steps", o.steps);
  if (o.steps == 0) throw ConfigError("steps", "must be positive");
  o.group_size = root.count("group_size", o.group_size);
  if (o.group_size < 2) throw ConfigError("group_size", "must be at least 2");
  o.learning_rate = root.number("learning_rate", o.learning_rate);
  if (!(o.learning_rate > 0.0)) throw ConfigError("learning_rate", "must be positive");
  o.ema_beta = root.number("beta", o.ema_beta);
  if (!(o.ema_beta >= 0.0 && o.ema_beta < 1.0)) throw ConfigError("beta", "must lie in [0, 1)");
  o.objective.beta_kl = root.number("beta_kl", o.objective.beta_kl);
  if (!(o.objective.beta_kl >= 0.0)) throw ConfigError("beta_kl", "must be non-negative");
  o.objective.epsilon = root.number("epsilon", o.objective.epsilon);
  if (!(o.objective.epsilon > 0.0 && o.objective.epsilon < 1.0)) {
    throw ConfigError("epsilon", "must lie in (0, 1)");
  }
  o.sigma_min = root.number("sigma_min", o.sigma_min);
  if (!(o.sigma_min > 0.0)) throw ConfigError("sigma_min", "must be positive");
  o.clip = root.number("clip", o.clip);
  if (!(o.clip > 0.0)) throw ConfigError("clip", "must be positive");
  o.update_stats_on_filtered = root.boolean("update_stats_on_filtered", o.update_stats_on_filtered);

  const auto interleave = root.string("interleave", std::string("round_robin"));
  if (interleave == "round_robin") {
    o.interleave = Interleave::RoundRobin;
  } else if (interleave == "mixed") {
    o.interleave = Interleave::Mixed;
  } else {
    throw ConfigError("interleave", "expected \"round_robin\" or \"mixed\"");
  }
  const auto order = root.string("ema_update_order", std::string("before"));
  if (order == "before") {
    o.update_order = EmaUpdateOrder::Before;
  } else if (order == "after") {
    o.update_order = EmaUpdateOrder::After;
  } else {
    throw ConfigError("ema_update_order", "expected \"before\" or \"after\"");
  }

  if (root.has("schemes")) {
    const auto& schemes = root.require("schemes");
    if (!schemes.is_array() || schemes.empty()) throw ConfigError("schemes", "expected a non-empty array");
    for (std::size_t i = 0; i < schemes.size(); ++i) {
      const auto s = schemes[i].is_string() ? scheme_from_string(schemes[i].get<std::string>()) : std::nullopt;
      if (!s) throw ConfigError(at("schemes", i), "expected \"grpo\", \"drgrpo\" or \"ema\"");
      config.schemes.push_back(*s);
    }
  } else {
    config.schemes = {AdvantageScheme::Grpo, AdvantageScheme::DrGrpo, AdvantageScheme::Ema};
  }

  const auto& tasks = root.require("tasks");
  if (!tasks.is_array() || tasks.empty()) throw ConfigError("tasks", "expected a non-empty array");
  std::set<TaskKind> kinds;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::string path = at("tasks", i);
    Reader r(tasks[i], path, {"name", "task", "family", "p", "alpha", "beta", "scale", "seed"});
    SyntheticTask task;
    task.name = r.string("name");
    const auto kind = task_kind_from_string(r.string("task"));
    if (!kind) throw ConfigError(r.path("task"), "unknown task kind");
    if (!kinds.insert(*kind).second) throw ConfigError(r.path("task"), "duplicate task kind");
    task.kind = *kind;
    const auto family = r.string("family");
    if (family == "sparse_binary") {
      task.family = RewardFamily::SparseBinary;
      if (r.has("alpha") || r.has("beta")) throw ConfigError(path, "sparse_binary tasks take only \"p\"");
      task.success_prob = r.numbers("p");
    } else if (family == "dense_bounded") {
      task.family = RewardFamily::DenseBounded;
      if (r.has("p")) throw ConfigError(r.path("p"), "dense_bounded tasks take \"alpha\" and \"beta\"");
      const auto alpha = r.numbers("alpha");
      const auto beta = r.numbers("beta");
      if (alpha.size() != beta.size()) throw ConfigError(r.path("beta"), "must match the length of alpha");
      for (std::size_t a = 0; a < alpha.size(); ++a) task.beta_arms.push_back({alpha[a], beta[a]});
    } else {
      throw ConfigError(r.path("family"), "expected \"sparse_binary\" or \"dense_bounded\"");
    }
    task.reward_scale = r.number("scale", 1.0);
    task.seed = r.count("seed", i);
    task.validate(path);
    config.tasks.push_back(std::move(task));
  }
  return config;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

void write_report_csv(std::ostream& out, const std::vector<RunReport>& reports) {
  out << "scheme,step,task,kind,mean_reward,ema_sigma,mean_abs_advantage,entropy,filtered\n";
  for (const auto& report : reports) {
    for (std::size_t step = 0; step < report.steps; ++step) {
      for (const auto& s : report.tasks) {
        out << to_string(report.scheme) << ',' << step << ',' << s.name << ',' << to_string(s.kind)
            << ',' << format_double(s.mean_reward[step]) << ',' << format_double(s.ema_sigma[step])
            << ',' << format_double(s.mean_abs_advantage[step]) << ','
            << format_double(s.entropy[step]) << ',' << (s.filtered[step] ? 1 : 0) << '\n';
      }
    }
  }
}

Json report_summary(const std::vector<RunReport>& reports) {
  Json runs = Json::array();
  for (const auto& report : reports) {
    Json run = Json::object();
    run["scheme"] = std::string(to_string(report.scheme));
    run["steps"] = report.steps;
    run["arm_selection_accuracy"] = report.arm_selection_accuracy;
    Json tasks = Json::array();
    for (const auto& s : report.tasks) {
      Json t = Json::object();
      t["name"] = s.name;
      t["kind"] = std::string(to_string(s.kind));
      t["long_run_mean_abs_advantage"] = s.long_run_mean_abs_advantage();
      t["filter_rate"] = s.filter_rate();
      t["final_ema_sigma"] = s.ema_sigma.empty() ? 0.0 : s.ema_sigma.back();
      t["final_best_arm_prob"] = s.final_best_arm_prob;
      tasks.push_back(std::move(t));
    }
    run["tasks"] = std::move(tasks);
    runs.push_back(std::move(run));
  }
  Json doc = Json::object();
  doc["format_version"] = kExperimentConfigVersion;
  doc["rng"] = std::string(Rng::kName);
  doc["runs"] = std::move(runs);
  return doc;
}

}  // namespace taskwise::sim
