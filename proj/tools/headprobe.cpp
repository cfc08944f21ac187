#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "headprobe/error.hpp"
#include "headprobe/oracle/suites.hpp"
#include "headprobe/pipeline/config.hpp"
#include "headprobe/pipeline/report.hpp"
#include "headprobe/pipeline/runner.hpp"

namespace fs = std::filesystem;
using namespace headprobe;

namespace {

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kConfig = 2;

// Config, schema and input-file problems are the user's to fix: exit 2.
int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SchemaError*>(&e) ||
      dynamic_cast<const ArgumentError*>(&e) || dynamic_cast<const LoadError*>(&e) ||
      dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const NotFoundError*>(&e)) {
    return kConfig;
  }
  return kPartial;
}

std::vector<std::pair<std::string, std::int64_t>> parse_only_list(const std::vector<std::string>& items) {
  std::vector<std::pair<std::string, std::int64_t>> out;
  for (const auto& s : items) out.push_back(pipeline::parse_only(s));
  return out;
}

bool selected(const std::vector<std::pair<std::string, std::int64_t>>& only, const std::string& label,
              std::int64_t step) {
  if (only.empty()) return true;
  for (const auto& [l, s] : only) {
    if (l == label && s == step) return true;
  }
  return false;
}

int cmd_fetch(const std::string& config_file, const std::vector<std::string>& only_items) {
  auto config = pipeline::load_run_config(config_file);
  std::vector<std::string> notices;
  pipeline::resolve_schedules(config, &notices);
  for (const auto& n : notices) spdlog::info("{}", n);
  const auto only = parse_only_list(only_items);
  int failed = 0, fetched = 0;
  for (const auto& m : config.models) {
    for (auto step : m.steps) {
      if (!selected(only, m.label, step)) continue;
      try {
        const auto dir = pipeline::checkpoint_dir(config, m, step);
        std::cout << m.label << " step " << step << ": " << dir.string() << "\n";
        ++fetched;
      } catch (const Error& e) {
        std::cerr << m.label << " step " << step << ": " << e.what() << "\n";
        ++failed;
      }
    }
  }
  std::cout << fetched << " checkpoints ready, " << failed << " failed\n";
  return failed ? kPartial : kOk;
}

int cmd_run(const std::string& config_file, const std::vector<std::string>& only_items, std::optional<int> workers,
            bool resume, bool report) {
  const auto config = pipeline::load_run_config(config_file);
  pipeline::RunOptions options;
  options.workers = workers;
  options.resume = resume;
  options.only = parse_only_list(only_items);
  const auto result = pipeline::run(config, options);
  for (const auto& c : result.manifest.cells) {
    if (c.status != "ok") std::cerr << "failed: " << c.model << " step " << c.step << " " << c.analysis << ": " << c.error << "\n";
  }
  for (const auto& n : result.manifest.notices) std::cerr << "notice: " << n << "\n";
  std::cout << "cells run " << result.cells_run << ", reused " << result.cells_reused << ", failed "
            << result.cells_failed << "\n";
  std::cout << "results in " << config.output_dir.string() << "\n";
  if (report) {
    const auto r = pipeline::render_report(config.output_dir);
    for (const auto& n : r.notices) std::cerr << "report: " << n << "\n";
    std::cout << r.figures.size() << " figures in " << (config.output_dir / "figures").string() << "\n";
  }
  return result.exit_code;
}

int cmd_report(const std::string& config_file, const std::string& output_dir) {
  fs::path dir = output_dir;
  if (dir.empty()) {
    if (config_file.empty()) throw ArgumentError("report needs --output or --config");
    dir = pipeline::load_run_config(config_file).output_dir;
  }
  const auto r = pipeline::render_report(dir);
  for (const auto& f : r.figures) std::cout << f.string() << "\n";
  for (const auto& n : r.notices) std::cerr << "notice: " << n << "\n";
  return kOk;
}

int print_suite(const oracle::SuiteResult& s, bool verbose) {
  for (const auto& c : s.checks) {
    if (verbose || !c.passed) std::cout << (c.passed ? "  ok   " : "  FAIL ") << c.name << ": " << c.detail << "\n";
  }
  std::printf("%s oracle: %zu/%zu checks passed in %.2f s\n", s.name.c_str(), s.checks.size() - s.failures(),
              s.checks.size(), s.seconds);
  return s.passed() ? kOk : kPartial;
}

int cmd_oracle(const std::string& suite, bool verbose, std::optional<std::uint64_t> seed) {
  int code = kOk;
  if (suite == "engine" || suite == "all") {
    oracle::EngineOracleOptions o;
    if (seed) o.seed = *seed;
    code = std::max(code, print_suite(oracle::run_engine_oracle(o), verbose));
  }
  if (suite == "stats" || suite == "all") {
    oracle::StatsOracleOptions o;
    if (seed) o.seed = *seed;
    code = std::max(code, print_suite(oracle::run_stats_oracle(o), verbose));
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-head probing over model checkpoint sweeps", "headprobe"};
  app.set_version_flag("--version", HEADPROBE_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::string config_file;
  std::vector<std::string> only;
  std::optional<int> workers;
  bool resume = true, report = false, verbose = false;
  std::string output_dir, suite = "all";
  std::optional<std::uint64_t> seed;

  auto* fetch = app.add_subcommand("fetch", "Download the checkpoints a config needs into the cache");
  fetch->add_option("--config", config_file, "Run config (TOML)")->required()->check(CLI::ExistingFile);
  fetch->add_option("--only", only, "Restrict to model:step (repeatable)");

  auto* run = app.add_subcommand("run", "Run the configured analyses");
  run->add_option("--config", config_file, "Run config (TOML)")->required()->check(CLI::ExistingFile);
  run->add_option("--only", only, "Restrict to model:step (repeatable)");
  run->add_option("--workers", workers, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
  run->add_flag("--resume,!--no-resume", resume, "Reuse completed cells (default on)");
  run->add_flag("--report", report, "Render figures after the run");

  auto* rep = app.add_subcommand("report", "Render SVG figures from result tables");
  auto* rep_config = rep->add_option("--config", config_file, "Run config; its output_dir is used")->check(CLI::ExistingFile);
  rep->add_option("--output", output_dir, "Results directory")->excludes(rep_config);

  auto* orc = app.add_subcommand("oracle", "Run the small-instance oracle suites");
  orc->add_option("--suite", suite, "engine, stats or all")->check(CLI::IsMember({"engine", "stats", "all"}));
  orc->add_option("--seed", seed, "Generator seed");
  orc->add_flag("-v,--verbose", verbose, "Print every check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  auto logger = spdlog::stderr_color_mt("headprobe");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*fetch) return cmd_fetch(config_file, only);
    if (*run) return cmd_run(config_file, only, workers, resume, report);
    if (*rep) return cmd_report(config_file, output_dir);
    if (*orc) return cmd_oracle(suite, verbose, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kOk;
}
