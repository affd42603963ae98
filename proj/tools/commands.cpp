#include "commands.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>
#include <vector>

#include "taskwise/errors.hpp"
#include "taskwise/protocol.hpp"
#include "taskwise/sim.hpp"

namespace taskwise::cli {

namespace {

struct InputError : Error {
  using Error::Error;
};

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

Json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("$", path.string() + " is not valid JSON");
  return doc;
}

struct ScoreOutcome {
  Json line;
  std::optional<TaskKind> task;
  double r_total = 0.0;
  bool error = false;
  bool scorer_down = false;
};

Json error_entry(const Json& id, std::size_t line_no, const std::string& message) {
  Json e = Json::object();
  if (!id.is_null()) e["id"] = id;
  e["line"] = line_no;
  e["error"] = message;
  return e;
}

ScoreOutcome score_line(const std::string& text, std::size_t line_no, const ScoreOptions& options,
                        const ScorerClient& scorer) {
  ScoreOutcome outcome;
  const Json record = Json::parse(text, nullptr, false);
  if (record.is_discarded() || !record.is_object()) {
    outcome.error = true;
    outcome.line = error_entry(nullptr, line_no, "record is not a JSON object");
    return outcome;
  }
  const Json id = record.contains("id") ? record.at("id") : Json();
  auto fail = [&](const std::string& message) {
    outcome.error = true;
    outcome.line = error_entry(id, line_no, message);
    return outcome;
  };
  if (id.is_null()) return fail("missing field \"id\"");
  if (!record.contains("task") || !record.at("task").is_string()) return fail("missing field \"task\"");
  const auto task = task_kind_from_string(record.at("task").get<std::string>());
  if (!task) return fail("unknown task \"" + record.at("task").get<std::string>() + "\"");
  if (!record.contains("response") || !record.at("response").is_string()) {
    return fail("missing field \"response\"");
  }
  if (!record.contains("ground_truth")) return fail("missing field \"ground_truth\"");
  std::string query;
  if (record.contains("query")) {
    if (!record.at("query").is_string()) return fail("field \"query\" must be a string");
    query = record.at("query").get<std::string>();
  }
  if ((*task == TaskKind::OpenEndedQA || *task == TaskKind::Caption) && query.empty()) {
    return fail("reward-model tasks need a non-empty \"query\"");
  }
  const auto gt = ground_truth_from_json(record.at("ground_truth"), *task, query);
  if (!gt) return fail("ground_truth does not match the " + std::string(to_string(*task)) + " schema");

  try {
    const auto parsed = parse_response(record.at("response").get<std::string>(), *task);
    const auto rec = total_reward(parsed, *gt, *task, options.rewards, &scorer);
    outcome.task = *task;
    outcome.r_total = rec.r_total;
    Json out = Json::object();
    out["id"] = id;
    out["task"] = std::string(to_string(rec.task));
    out["r_acc"] = rec.r_acc;
    out["r_format"] = rec.r_format;
    out["r_total"] = rec.r_total;
    outcome.line = std::move(out);
  } catch (const ScoringUnavailable& e) {
    fail(e.what());
    outcome.scorer_down = true;
    outcome.line["retryable"] = e.retryable();
    outcome.line["attempts"] = e.attempts();
  } catch (const Error& e) {
    fail(e.what());
  }
  return outcome;
}

struct GroupRecords {
  Json key;
  TaskKind task = TaskKind::MultiChoiceQA;
  std::vector<Json> ids;
  std::vector<double> rewards;
};

struct CsvRow {
  std::string scheme;
  std::string task;
  double mean_reward = 0.0;
  double mean_abs_advantage = 0.0;
  double ema_sigma = 0.0;
  double entropy = 0.0;
  bool filtered = false;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError("line " + std::to_string(line_no) + ": bad number \"" + s + "\"");
  }
}

}  // namespace

void apply_score_config(const Json& doc, ScoreOptions& options) {
  if (!doc.is_object()) throw ConfigError("$", "expected an object");
  auto number = [&](const Json& obj, const char* key, const std::string& path) {
    if (!obj.at(key).is_number()) throw ConfigError(path, "expected a number");
    return obj.at(key).get<double>();
  };
  for (const auto& [key, value] : doc.items()) {
    if (key == "format_weight") {
      options.rewards.format_weight = number(doc, "format_weight", key);
      if (!(options.rewards.format_weight >= 0.0)) throw ConfigError(key, "must be non-negative");
    } else if (key == "sigma_spatial") {
      options.rewards.kernel.sigma_spatial = number(doc, "sigma_spatial", key);
      if (!(options.rewards.kernel.sigma_spatial > 0.0)) throw ConfigError(key, "must be positive");
    } else if (key == "sigma_temporal") {
      options.rewards.kernel.sigma_temporal = number(doc, "sigma_temporal", key);
      if (!(options.rewards.kernel.sigma_temporal > 0.0)) throw ConfigError(key, "must be positive");
    } else if (key == "numeric_rel_tol") {
      options.rewards.numeric_rel_tol = number(doc, "numeric_rel_tol", key);
    } else if (key == "mra_tolerances") {
      if (!value.is_array() || value.empty()) throw ConfigError(key, "expected a non-empty array");
      options.rewards.mra_tolerances.clear();
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (!value[i].is_number()) throw ConfigError(key + "[" + std::to_string(i) + "]", "expected a number");
        options.rewards.mra_tolerances.push_back(value[i].get<double>());
      }
    } else if (key == "scorer") {
      if (!value.is_object()) throw ConfigError(key, "expected an object");
      for (const auto& [sk, sv] : value.items()) {
        const std::string path = "scorer." + sk;
        if (sk == "url") {
          if (!sv.is_string()) throw ConfigError(path, "expected a string");
          options.scorer.url = sv.get<std::string>();
        } else if (sk == "timeout_ms") {
          if (!sv.is_number_integer() || sv.get<std::int64_t>() <= 0) {
            throw ConfigError(path, "expected a positive integer");
          }
          options.scorer.timeout_ms = sv.get<int>();
        } else if (sk == "raw_min") {
          options.scorer.raw_range.lo = number(value, "raw_min", path);
        } else if (sk == "raw_max") {
          options.scorer.raw_range.hi = number(value, "raw_max", path);
        } else {
          throw ConfigError(path, "unknown field");
        }
      }
    } else {
      throw ConfigError(key, "unknown field");
    }
  }
}

int cmd_score(const ScoreOptions& options, std::ostream& out, std::ostream& err) {
  std::vector<std::string> lines;
  ScoreOptions effective = options;
  std::optional<ScorerClient> scorer;
  try {
    lines = read_lines(options.input);
    if (options.config) apply_score_config(load_json_file(*options.config), effective);
    effective.scorer = scorer_config_from_env(effective.scorer);
    scorer.emplace(ScorerClient::from_config(effective.scorer));
  } catch (const Error& e) {
    err << "score: " << e.what() << '\n';
    return kExitInput;
  }

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!blank(lines[i])) todo.push_back(i);
  }
  std::vector<ScoreOutcome> outcomes(todo.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < todo.size(); k = next++) {
      outcomes[k] = score_line(lines[todo[k]], todo[k] + 1, effective, *scorer);
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(todo.size())));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::size_t errors = 0;
  bool scorer_down = false;
  std::map<std::string, std::pair<double, std::size_t>> by_task;
  try {
    auto file = open_output(options.output);
    for (const auto& o : outcomes) {
      file << o.line.dump() << '\n';
      if (o.error) ++errors;
      scorer_down = scorer_down || o.scorer_down;
      if (o.task) {
        auto& [sum, n] = by_task[std::string(to_string(*o.task))];
        sum += o.r_total;
        ++n;
      }
    }
  } catch (const Error& e) {
    err << "score: " << e.what() << '\n';
    return kExitInput;
  }

  out << "scored " << outcomes.size() - errors << " records, " << errors << " errors";
  for (const auto& [task, acc] : by_task) {
    out << "; " << task << " mean_reward=" << sim::format_double(acc.first / static_cast<double>(acc.second));
  }
  out << '\n';
  if (scorer_down) {
    err << "score: reward-model backend unavailable for some records\n";
    return kExitScorer;
  }
  return kExitOk;
}

int cmd_advantage(const AdvantageOptions& options, std::ostream& out, std::ostream& err) {
  std::vector<GroupRecords> groups;
  std::optional<AdvantageNormalizer> normalizer;
  try {
    const auto lines = read_lines(options.input);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (blank(lines[i])) continue;
      const std::string where = "line " + std::to_string(i + 1);
      const Json rec = Json::parse(lines[i], nullptr, false);
      if (rec.is_discarded() || !rec.is_object()) throw InputError(where + ": not a JSON object");
      for (const char* key : {"id", "group", "task", "r_total"}) {
        if (!rec.contains(key)) throw InputError(where + ": missing field \"" + key + "\"");
      }
      if (!rec.at("r_total").is_number()) throw InputError(where + ": r_total must be a number");
      const auto task = rec.at("task").is_string()
                            ? task_kind_from_string(rec.at("task").get<std::string>())
                            : std::nullopt;
      if (!task) throw InputError(where + ": unknown task");
      const std::string key = rec.at("group").dump();
      auto [it, fresh] = index.emplace(key, groups.size());
      if (fresh) {
        groups.push_back({rec.at("group"), *task, {}, {}});
      } else if (groups[it->second].task != *task) {
        throw InputError("group " + key + " mixes tasks");
      }
      groups[it->second].ids.push_back(rec.at("id"));
      groups[it->second].rewards.push_back(rec.at("r_total").get<double>());
    }
    for (const auto& g : groups) {
      if (g.rewards.size() != options.normalizer.group_size) {
        throw InputError("group " + g.key.dump() + " has " + std::to_string(g.rewards.size()) +
                         " records, expected " + std::to_string(options.normalizer.group_size));
      }
    }
    TaskStatsRegistry stats = options.stats_in
                                  ? TaskStatsRegistry::load(*options.stats_in, options.normalizer.beta)
                                  : TaskStatsRegistry(options.normalizer.beta);
    normalizer.emplace(options.normalizer, std::move(stats));
  } catch (const Error& e) {
    err << "advantage: " << e.what() << '\n';
    return kExitInput;
  }

  std::size_t filtered = 0;
  std::size_t errors = 0;
  try {
    auto file = open_output(options.output);
    for (const auto& g : groups) {
      RolloutGroup group;
      group.task = g.task;
      group.rewards = g.rewards;
      try {
        group = normalizer->process(std::move(group));
      } catch (const Error& e) {
        ++errors;
        Json entry = Json::object();
        entry["group"] = g.key;
        entry["task"] = std::string(to_string(g.task));
        entry["error"] = e.what();
        file << entry.dump() << '\n';
        continue;
      }
      if (group.filtered) ++filtered;
      for (std::size_t i = 0; i < g.ids.size(); ++i) {
        Json entry = Json::object();
        entry["id"] = g.ids[i];
        entry["group"] = g.key;
        entry["task"] = std::string(to_string(g.task));
        entry["reward"] = g.rewards[i];
        entry["advantage"] = group.advantages ? Json((*group.advantages)[i]) : Json();
        entry["filtered"] = group.filtered;
        if (group.filtered) entry["filter_reason"] = std::string(to_string(group.filter_reason));
        file << entry.dump() << '\n';
      }
    }
    auto stats_path = options.stats_out.value_or(
        std::filesystem::path(options.output.string() + ".stats.json"));
    normalizer->stats().save(stats_path);
  } catch (const Error& e) {
    err << "advantage: " << e.what() << '\n';
    return kExitInput;
  }
  out << "processed " << groups.size() << " groups (" << filtered << " filtered, " << errors
      << " errors) with scheme " << to_string(options.normalizer.scheme) << '\n';
  return kExitOk;
}

int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err) {
  sim::ExperimentConfig config;
  try {
    config = sim::parse_experiment_config(load_json_file(options.config));
    auto& o = config.options;
    if (options.seed) o.seed = *options.seed;
    if (options.steps) {
      if (*options.steps == 0) throw ConfigError("steps", "must be positive");
      o.steps = *options.steps;
    }
    if (options.scheme) config.schemes = {*options.scheme};
    if (options.beta) o.ema_beta = *options.beta;
    if (options.beta_kl) o.objective.beta_kl = *options.beta_kl;
    if (options.epsilon) o.objective.epsilon = *options.epsilon;
    if (options.group_size) o.group_size = *options.group_size;
  } catch (const ConfigError& e) {
    err << "simulate: invalid config at " << e.what() << '\n';
    return kExitInput;
  } catch (const Error& e) {
    err << "simulate: " << e.what() << '\n';
    return kExitInput;
  }

  std::vector<sim::RunReport> reports;
  try {
    for (auto scheme : config.schemes) reports.push_back(sim::run_experiment(config.tasks, scheme, config.options));
    auto csv = open_output(options.output.string() + ".csv");
    sim::write_report_csv(csv, reports);
    auto summary = open_output(options.output.string() + ".summary.json");
    summary << sim::report_summary(reports).dump(2) << '\n';
  } catch (const ConfigError& e) {
    err << "simulate: invalid config at " << e.what() << '\n';
    return kExitInput;
  } catch (const Error& e) {
    err << "simulate: " << e.what() << '\n';
    return kExitInput;
  }

  for (const auto& r : reports) {
    out << "scheme=" << to_string(r.scheme)
        << " arm_selection_accuracy=" << sim::format_double(r.arm_selection_accuracy);
    for (const auto& t : r.tasks) {
      out << " " << t.name << ".mean_abs_adv=" << sim::format_double(t.long_run_mean_abs_advantage());
    }
    out << '\n';
  }
  return kExitOk;
}

int cmd_report(const ReportOptions& options, std::ostream& out, std::ostream& err) {
  struct Acc {
    double abs_adv = 0.0;
    std::size_t kept = 0;
    std::size_t rows = 0;
    double reward = 0.0;
    double last_sigma = 0.0;
    double last_entropy = 0.0;
  };
  std::vector<std::string> scheme_order;
  std::map<std::string, std::vector<std::string>> task_order;
  std::map<std::pair<std::string, std::string>, Acc> acc;
  try {
    const auto lines = read_lines(options.input);
    if (lines.empty() || split_csv(lines.front()).size() != 9 ||
        split_csv(lines.front())[0] != "scheme") {
      throw InputError(options.input.string() + " is not a simulation CSV");
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (blank(lines[i])) continue;
      const auto cells = split_csv(lines[i]);
      if (cells.size() != 9) throw InputError("line " + std::to_string(i + 1) + ": expected 9 columns");
      const auto& scheme = cells[0];
      const auto& task = cells[2];
      if (std::find(scheme_order.begin(), scheme_order.end(), scheme) == scheme_order.end()) {
        scheme_order.push_back(scheme);
      }
      auto& tasks = task_order[scheme];
      if (std::find(tasks.begin(), tasks.end(), task) == tasks.end()) tasks.push_back(task);
      auto& a = acc[{scheme, task}];
      ++a.rows;
      a.reward += to_double(cells[4], i + 1);
      a.last_sigma = to_double(cells[5], i + 1);
      a.last_entropy = to_double(cells[7], i + 1);
      if (cells[8] == "0") {
        a.abs_adv += to_double(cells[6], i + 1);
        ++a.kept;
      }
    }
  } catch (const Error& e) {
    err << "report: " << e.what() << '\n';
    return kExitInput;
  }

  for (const auto& scheme : scheme_order) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& task : task_order[scheme]) {
      const auto& a = acc[{scheme, task}];
      const double mean_abs = a.kept ? a.abs_adv / static_cast<double>(a.kept) : 0.0;
      lo = std::min(lo, mean_abs);
      hi = std::max(hi, mean_abs);
      out << scheme << ' ' << task << " steps=" << a.rows
          << " mean_reward=" << sim::format_double(a.reward / static_cast<double>(a.rows))
          << " mean_abs_adv=" << sim::format_double(mean_abs)
          << " filter_rate=" << sim::format_double(1.0 - static_cast<double>(a.kept) / static_cast<double>(a.rows))
          << " final_ema_sigma=" << sim::format_double(a.last_sigma)
          << " final_entropy=" << sim::format_double(a.last_entropy) << '\n';
    }
    if (task_order[scheme].size() > 1 && lo > 0.0) {
      out << scheme << " mean_abs_adv max/min ratio=" << sim::format_double(hi / lo) << '\n';
    }
  }
  return kExitOk;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Verifiable multi-task rewards and task-wise advantage normalization"};
  app.require_subcommand(1);

  ScoreOptions score;
  auto* score_cmd = app.add_subcommand("score", "Score rollouts (JSONL) into reward records");
  score_cmd->add_option("--input", score.input, "Input JSONL")->required();
  score_cmd->add_option("--output", score.output, "Output JSONL")->required();
  score_cmd->add_option("--config", score.config, "Reward/scorer settings (JSON)");
  std::optional<double> format_weight;
  score_cmd->add_option("--format-weight", format_weight, "Format reward weight (default 1.0)");
  score_cmd->add_option("--jobs", score.jobs, "Worker threads")->check(CLI::PositiveNumber);

  AdvantageOptions adv;
  adv.normalizer.format_weight = 1.0;
  std::string adv_scheme = "ema";
  std::string adv_order = "before";
  bool no_filter = false;
  auto* adv_cmd = app.add_subcommand("advantage", "Compute advantages over grouped reward records");
  adv_cmd->add_option("--input", adv.input, "Grouped reward JSONL")->required();
  adv_cmd->add_option("--output", adv.output, "Advantage JSONL")->required();
  adv_cmd->add_option("--scheme", adv_scheme, "grpo | drgrpo | ema")
      ->check(CLI::IsMember({"grpo", "drgrpo", "ema"}));
  adv_cmd->add_option("--group-size", adv.normalizer.group_size, "Rollouts per group")->check(CLI::Range(2, 1 << 20));
  adv_cmd->add_option("--beta", adv.normalizer.beta, "EMA decay")->check(CLI::Range(0.0, 0.999999999));
  adv_cmd->add_option("--stats-in", adv.stats_in, "Resume from a stats checkpoint");
  adv_cmd->add_option("--stats-out", adv.stats_out, "Stats checkpoint to write");
  adv_cmd->add_option("--ema-update-order", adv_order, "before | after")->check(CLI::IsMember({"before", "after"}));
  adv_cmd->add_option("--format-weight", adv.normalizer.format_weight,
                      "Format weight included in r_total, used to label all-correct groups (default 1.0)")
      ->check(CLI::NonNegativeNumber);
  adv_cmd->add_flag("--no-filter", no_filter, "Keep constant-reward groups");
  adv_cmd->add_flag("--update-stats-on-filtered", adv.normalizer.update_stats_on_filtered,
                    "Let filtered groups update EMA statistics");

  SimulateOptions simulate;
  std::optional<std::string> sim_scheme;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the synthetic multi-task experiment");
  sim_cmd->add_option("--config", simulate.config, "Experiment config (JSON)")->required();
  sim_cmd->add_option("--output", simulate.output, "Output prefix")->required();
  sim_cmd->add_option("--seed", simulate.seed, "Override the config seed");
  sim_cmd->add_option("--steps", simulate.steps, "Override the step count");
  sim_cmd->add_option("--scheme", sim_scheme, "Run a single scheme")->check(CLI::IsMember({"grpo", "drgrpo", "ema"}));
  sim_cmd->add_option("--group-size", simulate.group_size, "Override the group size");
  sim_cmd->add_option("--beta", simulate.beta, "Override the EMA decay");
  sim_cmd->add_option("--beta-kl", simulate.beta_kl, "Override the KL coefficient");
  sim_cmd->add_option("--epsilon", simulate.epsilon, "Override the clip range");

  ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "Summarize a simulation CSV");
  report_cmd->add_option("--input", report.input, "CSV written by simulate")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitInput;
  }

  if (score_cmd->parsed()) {
    if (format_weight) score.rewards.format_weight = *format_weight;
    return cmd_score(score, out, err);
  }
  if (adv_cmd->parsed()) {
    adv.normalizer.scheme = *scheme_from_string(adv_scheme);
    adv.normalizer.update_order = adv_order == "after" ? EmaUpdateOrder::After : EmaUpdateOrder::Before;
    adv.normalizer.filter = !no_filter;
    return cmd_advantage(adv, out, err);
  }
  if (sim_cmd->parsed()) {
    if (sim_scheme) simulate.scheme = scheme_from_string(*sim_scheme);
    return cmd_simulate(simulate, out, err);
  }
  return cmd_report(report, out, err);
}

}  // namespace taskwise::cli
