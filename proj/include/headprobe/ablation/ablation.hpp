#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "headprobe/neox/config.hpp"
#include "headprobe/neox/weights.hpp"
#include "headprobe/probes/probes.hpp"
#include "headprobe/stats/stats.hpp"

namespace headprobe::ablation {

using probes::HeadId;

enum class AblationKind { kZero, kCopyFromStep };
enum class Condition { kTarget, kBaseline };

std::string to_string(AblationKind k);
std::string to_string(Condition c);

struct AblationSpec {
  AblationKind kind = AblationKind::kZero;
  std::optional<std::int64_t> source_step;  // for kCopyFromStep
  std::vector<HeadId> targets;
  Condition label = Condition::kTarget;

  // "(3,1)+(3,2)"
  std::string heads_label() const;
  // Throws ArgumentError on an empty or out-of-range head set.
  void validate(const neox::ModelConfig& config) const;
};

struct AblationOutcome {
  std::int64_t step = 0;
  int layer = 0;
  double r2_intact = 0.0;
  double r2_ablated = 0.0;
  double delta_r2 = 0.0;                  // r2_intact - r2_ablated
  std::optional<double> fraction_intact;  // r2_ablated / r2_intact; missing when r2_intact == 0
  std::string diagnostic;
};

AblationOutcome make_outcome(std::int64_t step, int layer, double r2_intact, double r2_ablated);

struct AblationEvaluation {
  std::vector<AblationOutcome> per_layer;  // block outputs 1..L
  double mean_delta_r2 = 0.0;
  std::optional<double> mean_fraction;  // over layers with a defined fraction
};

// Copy of `weights` with the Q and K slices (weights and biases) of every
// target head zeroed or copied from `source`. V, the output projection and all
// other tensors are untouched.
neox::ModelWeights apply_ablation(const neox::ModelConfig& config, const neox::ModelWeights& weights,
                                  const AblationSpec& request, const neox::ModelWeights* source = nullptr);

// Scores the ablated model on `pairs` and compares with the intact scores
// (computed here when `intact` is empty).
AblationEvaluation evaluate_ablated(const neox::ModelConfig& config, const neox::ModelWeights& weights_intact,
                                    const AblationSpec& request, const std::vector<probes::AlignedPair>& pairs,
                                    std::int64_t step, const neox::ModelWeights* source = nullptr,
                                    std::vector<probes::LayerScore> intact = {});

AblationEvaluation summarize(const std::vector<AblationOutcome>& per_layer);

struct ConditionObservation {
  double value = 0.0;
  Condition condition = Condition::kTarget;
  std::int64_t step = 0;
};

struct ConditionEffect {
  stats::RegressionResult fit;  // value ~ target + log10(step + 1) [+ target x log step]
  double coefficient = 0.0;     // condition (target = 1)
  double se = 0.0;
  double t = 0.0;
  double p = 1.0;
};

ConditionEffect condition_effect(const std::vector<ConditionObservation>& observations, bool interaction = false);

struct HeadGroup {
  std::vector<HeadId> heads;
  Condition label = Condition::kTarget;
};

struct HeadSets {
  std::vector<HeadGroup> targets;
  std::vector<HeadGroup> baselines;
};

// pythia-14m: targets (3,1), (3,2) and both; baselines (3,3), (3,4) and both.
// pythia-410m: each of (1,14), (4,7), (1,3), (2,3), (6,10), (1,13), each with a
// same-layer control taken from `composite` (lowest composite among unused
// non-target heads, ties to the lower head index). Other names throw
// ArgumentError.
HeadSets default_head_sets(const std::string& model, const std::vector<probes::CompositeIndexRow>& composite = {});

// Same-layer controls for `targets`, one per target head.
std::vector<HeadId> matched_controls(const std::vector<HeadId>& targets,
                                     const std::vector<probes::CompositeIndexRow>& composite);

}  // namespace headprobe::ablation
