#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "headprobe/neox/config.hpp"
#include "headprobe/neox/engine.hpp"
#include "headprobe/neox/weights.hpp"
#include "headprobe/stats/stats.hpp"
#include "headprobe/stimuli/align.hpp"

namespace headprobe::probes {

using stimuli::TokenSpan;

// 0-based block and head indices. Printed 1-based, "(3,2)" being block index 2,
// head index 1.
struct HeadId {
  int layer = 0;
  int head = 0;

  std::string label() const;
  // Parses a 1-based "(3,2)" or "3,2" label.
  static HeadId parse(const std::string& text);

  friend auto operator<=>(const HeadId&, const HeadId&) = default;
};

// Every head of a model in (layer, head) order.
std::vector<HeadId> all_heads(const neox::ModelConfig& config);

struct LayerScore {
  std::int64_t step = 0;
  int layer = 0;  // hidden-state index: 0 = embeddings, l = after block l
  double r2 = 0.0;
  std::size_t n_pairs = 0;
  bool degenerate = false;  // constant distances; r2 reported as 0
};

struct HeadTrajectory {
  HeadId head;
  std::vector<std::int64_t> steps;
  std::vector<double> mean_attention;
  std::vector<double> stderr_attention;
};

// How several cue tokens combine for one query token.
enum class CueAggregation { kMean, kSum };

struct HeadScore {
  double value = 0.0;
  bool masked = false;  // some cue token sat at or after a query token
};

struct CompositeInputs {
  HeadId head;
  std::optional<double> coef;             // trajectory regression slope
  std::optional<double> noun_attention;   // final step, noun cues
  std::optional<double> verb_attention;   // final step, verb cues
  std::optional<double> oneback_t;        // 1-back subtraction t statistic
  std::optional<double> positional_attention;
};

struct CompositeIndexRow {
  HeadId head;
  double z_coef = 0.0;
  double z_noun_attn = 0.0;
  double z_verb_attn = 0.0;
  double z_oneback_t = 0.0;
  double z_positional_attn = 0.0;
  double composite = 0.0;
};

struct CouplingReport {
  stats::RegressionResult logratio_fit;  // R2 ~ LogRatio + run dummies
  stats::RegressionResult step_fit;      // R2 ~ log10(step + 1) + run dummies
  double delta_aic = 0.0;                // AIC(step_fit) - AIC(logratio_fit)
};

// 1 - cos(u, v) for the span-mean hidden vectors at hidden index `layer`.
// Throws NumericError on a zero-norm mean vector.
double target_distance(const neox::ForwardTrace& a, const neox::ForwardTrace& b, TokenSpan span_a, TokenSpan span_b,
                       int layer);

// Simple regression of relatedness on distance. Needs >= 3 pairs; constant
// distances raise DegenerateError.
LayerScore layer_r2(const std::vector<double>& distances, const std::vector<double>& relatedness,
                    std::int64_t step = 0, int layer = 0);

// Layer with the highest r2; ties go to the lower layer.
int select_tracked_layer(const std::vector<LayerScore>& final_step_scores);

// Mean over target (query) tokens of the mean (or sum) over cue (key) tokens.
HeadScore head_attention_score(const neox::ForwardTrace& trace, TokenSpan target_span, TokenSpan cue_span,
                               HeadId head, CueAggregation aggregation = CueAggregation::kMean);

// Mean over t = 1..T-1 of attention[t, t-1].
double one_back_score(const neox::ForwardTrace& trace, HeadId head);

// One-tailed paired t-test of cue attention over 1-back attention.
stats::TTestResult oneback_subtraction_test(const std::vector<double>& cue_attention,
                                            const std::vector<double>& one_back);

// R2 series regressed on attention series over aligned checkpoints.
stats::RegressionResult trajectory_regression(const std::vector<double>& r2_series,
                                              const std::vector<double>& attention_series);

// Z-scores each variable across heads (population sd), averages the five,
// sorts by composite descending (ties by head order).
std::vector<CompositeIndexRow> composite_index(const std::vector<CompositeInputs>& inputs);

double modnoun_log_ratio(const neox::ModelConfig& config, const neox::ModelWeights& weights,
                         const neox::EncodedSentence& original, const neox::EncodedSentence& reversed);

// Both sentences of a stimulus pair with their target spans located.
struct AlignedPair {
  std::string pair_id;
  stimuli::AlignedSentence a;
  stimuli::AlignedSentence b;
  double relatedness = 0.0;
};

// Target distance between the pair's sentences after every block: element i
// is hidden index i + 1. The embedding layer is skipped since the target
// tokens, and so their distance, are identical there.
std::vector<double> pair_distances(const neox::ForwardTrace& a, const neox::ForwardTrace& b, const AlignedPair& pair);

// distances[p][i] for pair p at hidden index i + 1 -> one LayerScore per
// block. Layers with constant distances are flagged degenerate.
std::vector<LayerScore> layer_scores_from_distances(const std::vector<std::vector<double>>& distances,
                                                    const std::vector<double>& relatedness, std::int64_t step);

// Runs the model over every pair (hidden states only) and scores each layer.
std::vector<LayerScore> layer_scores(const neox::ModelConfig& config, const neox::ModelWeights& weights,
                                     const std::vector<AlignedPair>& pairs, std::int64_t step);

// One observation per (run, checkpoint). Run labels become intercept dummies.
CouplingReport logratio_r2_coupling(const std::vector<double>& r2_series, const std::vector<double>& logratio_series,
                                    const std::vector<std::int64_t>& steps, const std::vector<std::string>& run_labels);

// Indicator columns for every label except the first in sorted order.
std::vector<std::vector<double>> label_dummies(const std::vector<std::string>& labels);

}  // namespace headprobe::probes
