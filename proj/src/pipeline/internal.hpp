#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "headprobe/ablation/ablation.hpp"
#include "headprobe/neox/checkpoint.hpp"
#include "headprobe/pipeline/config.hpp"
#include "headprobe/pipeline/table.hpp"
#include "headprobe/stimuli/pairs.hpp"
#include "headprobe/stimuli/perturb.hpp"

namespace headprobe::pipeline::detail {

struct ModnounItem {
  std::string id;
  std::string sentence;
  std::string reversed;
};

struct StimulusSets {
  std::vector<stimuli::StimulusPair> pairs;
  std::vector<stimuli::PerturbedStimulus> positional;
  std::vector<stimuli::PerturbedStimulus> pos;
  std::vector<ModnounItem> modnoun;
  std::map<std::string, std::string> digests;  // dataset -> digest of the file it came from
  std::vector<std::string> notices;
};

// Loads every dataset the analyses need and writes rejects under
// output_dir/rejects/.
StimulusSets load_stimulus_sets(const RunConfig& config);

const std::vector<std::string>& header(const std::string& table);
Table make_table(const std::string& name);

struct CellResult {
  std::map<std::string, Table> tables;  // part table name -> rows
  std::vector<std::string> diagnostics;
};

struct LoadedCheckpoint {
  neox::Checkpoint checkpoint;
  std::map<std::string, std::string> digests;  // file -> digest
};

LoadedCheckpoint load_cell_checkpoint(const RunConfig& config, const ModelEntry& model, std::int64_t step);

// Phase-1, stress and modnoun analyses of one checkpoint in one pass over the
// stimuli.
std::map<Analysis, CellResult> compute_stage1(const RunConfig& config, const ModelEntry& model, std::int64_t step,
                                              const neox::Checkpoint& ckpt, const StimulusSets& sets,
                                              const std::vector<Analysis>& analyses);

struct AblationPlan {
  std::vector<ablation::AblationSpec> specs;
  std::optional<int> tracked_layer;  // hidden index
};

CellResult compute_ablation(const RunConfig& config, const ModelEntry& model, std::int64_t step,
                            const neox::Checkpoint& ckpt, const StimulusSets& sets, const AblationPlan& plan,
                            const neox::ModelWeights* source, std::vector<probes::LayerScore> intact);

// Layer scores stored in a phase-1 part table.
std::vector<probes::LayerScore> layer_scores_from_table(const Table& t);

}  // namespace headprobe::pipeline::detail
