#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headprobe/pipeline/config.hpp"

namespace headprobe::pipeline {

// One (model, step, analysis) unit of work.
struct CellRecord {
  std::string model;
  std::int64_t step = 0;
  std::string analysis;
  std::string status;  // "ok" or "failed"
  std::string config_digest;
  std::map<std::string, std::string> inputs;   // name -> digest
  std::map<std::string, std::string> outputs;  // path relative to output_dir -> digest
  std::vector<std::string> diagnostics;
  std::string error;
  double seconds = 0.0;
};

struct RunManifest {
  std::string tool_version;
  nlohmann::json config;
  std::string config_digest;
  std::vector<CellRecord> cells;
  std::map<std::string, std::string> tables;  // table file -> digest
  std::vector<std::string> notices;
  double seconds = 0.0;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  const CellRecord* find(const std::string& model, std::int64_t step, const std::string& analysis) const;
};

struct RunOptions {
  std::optional<int> workers;  // overrides the config
  bool resume = true;
  // model label -> steps to run; other cells are left as they are.
  std::vector<std::pair<std::string, std::int64_t>> only;
};

struct RunResult {
  RunManifest manifest;
  int exit_code = 0;  // 0 ok, 1 some cell or table failed
  std::size_t cells_run = 0;
  std::size_t cells_reused = 0;
  std::size_t cells_failed = 0;
};

// Runs every (model, step) cell of the config on a worker pool, writes
// per-cell part tables under output_dir/cells/, then merges them into the
// result tables in a fixed order and writes output_dir/manifest.json.
RunResult run(const RunConfig& config, const RunOptions& options = {});

// Reads output_dir/manifest.json; nullopt when absent.
std::optional<RunManifest> read_manifest(const std::filesystem::path& output_dir);

// Parses "label:step".
std::pair<std::string, std::int64_t> parse_only(const std::string& text);

// Resolves "available" and hub-enumerated schedules in place. With a repo
// model and the all14m schedule the repo's step branches are used when the
// hub answers; otherwise the built-in list stays.
void resolve_schedules(RunConfig& config, std::vector<std::string>* notices = nullptr);

// Directory of a model checkpoint, downloading it when the model lives on the hub.
std::filesystem::path checkpoint_dir(const RunConfig& config, const ModelEntry& model, std::int64_t step);

}  // namespace headprobe::pipeline
