#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headprobe/ablation/ablation.hpp"
#include "headprobe/hub/hub.hpp"
#include "headprobe/probes/probes.hpp"
#include "headprobe/stimuli/pairs.hpp"

namespace headprobe::pipeline {

// Per-cell analyses in table order; composite is computed from the others
// after all cells finish.
enum class Analysis { kPhase1, kStress1Back, kStressPositional, kStressPos, kModnoun, kAblation, kComposite };

std::string to_string(Analysis a);
std::optional<Analysis> parse_analysis(const std::string& name);
const std::vector<Analysis>& all_analyses();

struct ModelEntry {
  std::string label;                        // directory-safe name used in tables
  std::optional<std::string> repo;          // hub repository, or
  std::optional<std::filesystem::path> path;  // local directory holding step<N>/ checkpoints
  std::string run;                          // run label (seed) for the coupling fit; defaults to label
  std::string preset;                       // "pythia-14m", "pythia-410m" or empty
  std::vector<std::int64_t> steps;          // resolved schedule for this model
  bool steps_from_config = false;           // set by a per-model steps list
};

struct DatasetPaths {
  std::optional<std::filesystem::path> rawc;
  stimuli::Schema rawc_schema = stimuli::Schema::rawc();
  std::string rawc_schema_name = "rawc";
  bool nouns_only = true;
  std::optional<std::filesystem::path> positional;  // generated from rawc when absent
  std::string positional_phrase = "kind of";
  std::optional<std::filesystem::path> pos;
  std::optional<std::filesystem::path> modnoun;  // derived from rawc when absent
};

struct AblationConfig {
  std::vector<ablation::AblationKind> kinds{ablation::AblationKind::kZero};
  std::int64_t source_step = 1;
  std::optional<std::vector<std::vector<probes::HeadId>>> targets;
  std::optional<std::vector<std::vector<probes::HeadId>>> baselines;
  bool interaction = false;
};

struct RunConfig {
  std::vector<ModelEntry> models;
  std::string schedule_name;  // "paper20", "all14m", "available" or "custom"
  std::vector<std::int64_t> custom_steps;
  DatasetPaths datasets;
  std::vector<Analysis> analyses;  // sorted, unique
  AblationConfig ablation;
  probes::CueAggregation aggregation = probes::CueAggregation::kMean;
  std::filesystem::path output_dir;
  int workers = 1;
  hub::HubOptions hub;

  bool wants(Analysis a) const;
  // Normalized form of everything that affects results (paths absolute,
  // worker count and output directory left out).
  nlohmann::json snapshot() const;
  std::string digest() const;
};

// Parses and validates a TOML run config. Relative paths resolve against the
// file's directory. Step schedules named "available" are resolved later by
// the runner. Throws ConfigError.
RunConfig load_run_config(const std::filesystem::path& file);
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir);

// Checks the cross-field rules; called by the loaders.
void validate(const RunConfig& config);

// "pythia-14m" / "pythia-410m" when the repo or label names one of them.
std::string infer_preset(const std::string& repo_or_label);

}  // namespace headprobe::pipeline
