#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"

namespace fs = std::filesystem;
using namespace taskwise;

namespace {

const fs::path kData = TASKWISE_TEST_DATA_DIR;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "taskwise");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Json> jsonl(const fs::path& p) {
  std::vector<Json> out;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) out.push_back(Json::parse(line));
  return out;
}

/// Fresh scratch directory per test case.
struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() /
          ("taskwise_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  fs::path operator/(const std::string& name) const { return dir / name; }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("score: golden three-record file") {
  Scratch tmp;
  const auto r = invoke({"score", "--input", (kData / "score_input.jsonl").string(), "--output",
                         (tmp / "out.jsonl").string()});
  CHECK(r.code == cli::kExitOk);
  CHECK(slurp(tmp / "out.jsonl") == slurp(kData / "score_expected.jsonl"));
  CHECK(r.out.find("scored 3 records, 0 errors") != std::string::npos);

  // Output order follows input order with several workers as well.
  const auto parallel = invoke({"score", "--input", (kData / "score_input.jsonl").string(), "--output",
                                (tmp / "par.jsonl").string(), "--jobs", "3"});
  CHECK(parallel.code == cli::kExitOk);
  CHECK(slurp(tmp / "par.jsonl") == slurp(tmp / "out.jsonl"));
}

TEST_CASE("score: golden values match the reward examples") {
  const auto rows = jsonl(kData / "score_expected.jsonl");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0]["r_total"].get<double>() == 2.0);
  CHECK(rows[1]["r_acc"].get<double>() == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(rows[2]["r_acc"].get<double>() == doctest::Approx(2.142301741594001).epsilon(1e-12));
}

TEST_CASE("score: empty and missing inputs") {
  Scratch tmp;
  std::ofstream(tmp / "empty.jsonl").close();
  const auto empty = invoke({"score", "--input", (tmp / "empty.jsonl").string(), "--output",
                             (tmp / "out.jsonl").string()});
  CHECK(empty.code == cli::kExitOk);
  CHECK(slurp(tmp / "out.jsonl").empty());

  const auto missing = invoke({"score", "--input", (tmp / "nope.jsonl").string(), "--output",
                               (tmp / "out.jsonl").string()});
  CHECK(missing.code == cli::kExitInput);
  CHECK(missing.err.find("cannot read") != std::string::npos);
}

TEST_CASE("score: bad records become error entries") {
  Scratch tmp;
  const auto r = invoke({"score", "--input", (kData / "score_bad.jsonl").string(), "--output",
                         (tmp / "out.jsonl").string()});
  CHECK(r.code == cli::kExitOk);
  const auto rows = jsonl(tmp / "out.jsonl");
  REQUIRE(rows.size() == 6);
  CHECK(rows[0]["r_total"].get<double>() == 2.0);
  CHECK(rows[1]["line"] == 2);
  CHECK(rows[1].contains("error"));
  CHECK(rows[2]["id"] == "no-task");
  CHECK(rows[2].contains("error"));
  CHECK(rows[3]["id"] == "bad-gt");
  CHECK(rows[3].contains("error"));
  CHECK(rows[4]["id"] == "cap");
  CHECK(rows[4].contains("error"));
  CHECK(rows[5]["r_acc"].get<double>() == 0.75);
  CHECK(r.out.find("scored 2 records, 4 errors") != std::string::npos);
}

TEST_CASE("score: unreachable scorer exits 3") {
  Scratch tmp;
  std::ofstream(tmp / "cfg.json") << R"({"scorer": {"url": "http://127.0.0.1:1", "timeout_ms": 200}})";
  const auto r = invoke({"score", "--input", (kData / "score_bad.jsonl").string(), "--output",
                         (tmp / "out.jsonl").string(), "--config", (tmp / "cfg.json").string()});
  CHECK(r.code == cli::kExitScorer);
  const auto rows = jsonl(tmp / "out.jsonl");
  CHECK(rows[5]["retryable"] == true);
  CHECK(rows[0]["r_total"].get<double>() == 2.0);
}

TEST_CASE("score: invalid settings file exits 2") {
  Scratch tmp;
  std::ofstream(tmp / "cfg.json") << R"({"format_weight": "heavy"})";
  const auto r = invoke({"score", "--input", (kData / "score_input.jsonl").string(), "--output",
                         (tmp / "out.jsonl").string(), "--config", (tmp / "cfg.json").string()});
  CHECK(r.code == cli::kExitInput);
  CHECK(r.err.find("format_weight") != std::string::npos);
}

TEST_CASE("advantage: EMA over grouped records") {
  Scratch tmp;
  const auto r = invoke({"advantage", "--input", (kData / "advantage_input.jsonl").string(), "--output",
                         (tmp / "adv.jsonl").string()});
  CHECK(r.code == cli::kExitOk);
  CHECK(slurp(tmp / "adv.jsonl") == slurp(kData / "advantage_expected.jsonl"));
  CHECK(r.out == "processed 4 groups (2 filtered, 0 errors) with scheme ema\n");

  const auto rows = jsonl(tmp / "adv.jsonl");
  REQUIRE(rows.size() == 32);
  // g1 seeds math_qa at sigma = sqrt(0.25 * 0.75): (2 - 1.25) / 0.4330...
  CHECK(rows[0]["advantage"].get<double>() == doctest::Approx(0.75 / std::sqrt(0.1875)).epsilon(1e-12));
  CHECK(rows[8]["filtered"] == true);
  CHECK(rows[8]["filter_reason"] == "all_correct");
  CHECK(rows[8]["advantage"].is_null());
  CHECK(rows[24]["filter_reason"] == "constant");

  const auto stats = Json::parse(slurp(tmp / "adv.jsonl.stats.json"));
  CHECK(stats["math_qa"]["steps"] == 1);
  CHECK(stats["ocr_qa"]["steps"] == 1);
}

TEST_CASE("advantage: stats checkpoint carries over") {
  Scratch tmp;
  invoke({"advantage", "--input", (kData / "advantage_input.jsonl").string(), "--output",
          (tmp / "a.jsonl").string(), "--stats-out", (tmp / "s.json").string()});
  const auto r = invoke({"advantage", "--input", (kData / "advantage_input.jsonl").string(), "--output",
                         (tmp / "b.jsonl").string(), "--stats-in", (tmp / "s.json").string(),
                         "--stats-out", (tmp / "s2.json").string()});
  CHECK(r.code == cli::kExitOk);
  const auto stats = Json::parse(slurp(tmp / "s2.json"));
  CHECK(stats["math_qa"]["steps"] == 2);
}

TEST_CASE("advantage: GRPO without filtering reports degenerate groups and continues") {
  Scratch tmp;
  const auto r = invoke({"advantage", "--input", (kData / "advantage_input.jsonl").string(), "--output",
                         (tmp / "adv.jsonl").string(), "--scheme", "grpo", "--no-filter"});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out == "processed 4 groups (0 filtered, 2 errors) with scheme grpo\n");
  const auto rows = jsonl(tmp / "adv.jsonl");
  REQUIRE(rows.size() == 8 + 1 + 8 + 1);
  CHECK(rows[8]["group"] == "g2");
  CHECK(rows[8].contains("error"));
  CHECK(rows[9]["group"] == "g3");
  CHECK(rows[9]["advantage"].is_number());
}

TEST_CASE("advantage: ragged group exits 2 naming the group") {
  Scratch tmp;
  const auto r = invoke({"advantage", "--input", (kData / "advantage_ragged.jsonl").string(), "--output",
                         (tmp / "adv.jsonl").string()});
  CHECK(r.code == cli::kExitInput);
  CHECK(r.err.find("group \"g1\" has 7 records") != std::string::npos);
}

TEST_CASE("simulate: deterministic output and report") {
  Scratch tmp;
  const auto a = invoke({"simulate", "--config", (kData / "sim_config.json").string(), "--output",
                         (tmp / "a").string()});
  const auto b = invoke({"simulate", "--config", (kData / "sim_config.json").string(), "--output",
                         (tmp / "b").string()});
  CHECK(a.code == cli::kExitOk);
  CHECK(b.code == cli::kExitOk);
  CHECK(slurp(tmp / "a.csv") == slurp(tmp / "b.csv"));
  CHECK(slurp(tmp / "a.summary.json") == slurp(tmp / "b.summary.json"));
  CHECK(a.out == b.out);

  const auto reseeded = invoke({"simulate", "--config", (kData / "sim_config.json").string(), "--output",
                                (tmp / "c").string(), "--seed", "7", "--scheme", "ema", "--steps", "20"});
  CHECK(reseeded.code == cli::kExitOk);
  std::istringstream csv(slurp(tmp / "c.csv"));
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == 1 + 20 * 2);

  const auto report = invoke({"report", "--input", (tmp / "a.csv").string()});
  CHECK(report.code == cli::kExitOk);
  CHECK(report.out.find("ema sparse steps=300") != std::string::npos);
  CHECK(report.out.find("drgrpo mean_abs_adv max/min ratio=") != std::string::npos);
}

TEST_CASE("simulate: invalid config names the field") {
  Scratch tmp;
  const auto r = invoke({"simulate", "--config", (kData / "sim_bad_config.json").string(), "--output",
                         (tmp / "x").string()});
  CHECK(r.code == cli::kExitInput);
  CHECK(r.err.find("invalid config at tasks[1].p[1]") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp / "x.csv"));
}

TEST_CASE("usage errors exit 2") {
  CHECK(invoke({}).code == cli::kExitInput);
  CHECK(invoke({"advantage", "--input", "x"}).code == cli::kExitInput);
  CHECK(invoke({"advantage", "--input", "x", "--output", "y", "--scheme", "ppo"}).code == cli::kExitInput);
  CHECK(invoke({"report", "--input", (kData / "sim_config.json").string()}).code == cli::kExitInput);
  CHECK(invoke({"--help"}).code == cli::kExitOk);
}

}  // TEST_SUITE
