#include "headprobe/ablation/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "headprobe/error.hpp"

namespace headprobe::ablation {

std::string to_string(AblationKind k) { return k == AblationKind::kZero ? "zero" : "copy_from_step"; }

std::string to_string(Condition c) { return c == Condition::kTarget ? "target" : "baseline"; }

std::string AblationSpec::heads_label() const {
  std::string out;
  for (const auto& h : targets) out += (out.empty() ? "" : "+") + h.label();
  return out;
}

void AblationSpec::validate(const neox::ModelConfig& config) const {
  if (targets.empty()) throw ArgumentError("ablation has no target heads");
  for (const auto& h : targets) {
    if (h.layer < 0 || h.layer >= config.n_layers || h.head < 0 || h.head >= config.n_heads) {
      throw ArgumentError("ablation head " + h.label() + " out of range");
    }
  }
}

AblationOutcome make_outcome(std::int64_t step, int layer, double r2_intact, double r2_ablated) {
  AblationOutcome o;
  o.step = step;
  o.layer = layer;
  o.r2_intact = r2_intact;
  o.r2_ablated = r2_ablated;
  o.delta_r2 = r2_intact - r2_ablated;
  if (r2_intact != 0.0) {
    o.fraction_intact = r2_ablated / r2_intact;
  } else {
    o.diagnostic = "intact R2 is zero; fraction undefined";
  }
  return o;
}

neox::ModelWeights apply_ablation(const neox::ModelConfig& config, const neox::ModelWeights& weights,
                                  const AblationSpec& request, const neox::ModelWeights* source) {
  request.validate(config);
  if (request.kind == AblationKind::kCopyFromStep) {
    if (!source) throw ArgumentError("copy_from_step ablation needs source weights");
    source->validate(config);
  } else if (source) {
    throw ArgumentError("zero ablation takes no source weights");
  }
  neox::ModelWeights out = weights;
  for (const auto& h : request.targets) {
    auto& layer = out.layers[static_cast<std::size_t>(h.layer)];
    for (auto which : {neox::Projection::kQuery, neox::Projection::kKey}) {
      auto rows = neox::head_weight_rows(config, layer, h.head, which);
      auto bias = neox::head_bias(config, layer, h.head, which);
      if (request.kind == AblationKind::kZero) {
        std::fill(rows.begin(), rows.end(), 0.0f);
        std::fill(bias.begin(), bias.end(), 0.0f);
      } else {
        const auto& src = source->layers[static_cast<std::size_t>(h.layer)];
        const auto from_rows = neox::head_weight_rows(config, src, h.head, which);
        const auto from_bias = neox::head_bias(config, src, h.head, which);
        std::copy(from_rows.begin(), from_rows.end(), rows.begin());
        std::copy(from_bias.begin(), from_bias.end(), bias.begin());
      }
    }
  }
  return out;
}

AblationEvaluation summarize(const std::vector<AblationOutcome>& per_layer) {
  AblationEvaluation ev;
  ev.per_layer = per_layer;
  double delta = 0.0, frac = 0.0;
  int n = 0, nf = 0;
  for (const auto& o : per_layer) {
    delta += o.delta_r2;
    ++n;
    if (o.fraction_intact) {
      frac += *o.fraction_intact;
      ++nf;
    }
  }
  if (n > 0) ev.mean_delta_r2 = delta / n;
  if (nf > 0) ev.mean_fraction = frac / nf;
  return ev;
}

AblationEvaluation evaluate_ablated(const neox::ModelConfig& config, const neox::ModelWeights& weights_intact,
                                    const AblationSpec& request, const std::vector<probes::AlignedPair>& pairs,
                                    std::int64_t step, const neox::ModelWeights* source,
                                    std::vector<probes::LayerScore> intact) {
  if (intact.empty()) intact = probes::layer_scores(config, weights_intact, pairs, step);
  if (intact.size() != static_cast<std::size_t>(config.n_layers)) {
    throw ArgumentError("intact scores must cover layers 1.." + std::to_string(config.n_layers));
  }
  const auto ablated_weights = apply_ablation(config, weights_intact, request, source);
  const auto ablated = probes::layer_scores(config, ablated_weights, pairs, step);
  std::vector<AblationOutcome> rows;
  for (std::size_t i = 0; i < ablated.size(); ++i) {
    rows.push_back(make_outcome(step, ablated[i].layer, intact[i].r2, ablated[i].r2));
  }
  return summarize(rows);
}

ConditionEffect condition_effect(const std::vector<ConditionObservation>& obs, bool interaction) {
  std::set<Condition> conditions;
  std::set<std::int64_t> steps;
  for (const auto& o : obs) {
    conditions.insert(o.condition);
    steps.insert(o.step);
  }
  if (conditions.size() < 2) throw ArgumentError("condition_effect: both target and baseline observations needed");
  if (steps.size() < 3) throw ArgumentError("condition_effect: need at least 3 distinct steps");

  std::vector<double> indicator, y, log_step, inter;
  for (const auto& o : obs) {
    if (o.step < 0) throw ArgumentError("condition_effect: negative step");
    const double ind = o.condition == Condition::kTarget ? 1.0 : 0.0;
    const double ls = std::log10(static_cast<double>(o.step) + 1.0);
    indicator.push_back(ind);
    y.push_back(o.value);
    log_step.push_back(ls);
    inter.push_back(ind * ls);
  }
  std::vector<std::vector<double>> extra{log_step};
  if (interaction) extra.push_back(inter);
  ConditionEffect out;
  out.fit = stats::ols(indicator, y, extra);
  out.coefficient = out.fit.slope;
  out.se = out.fit.se_slope;
  out.t = out.fit.t;
  out.p = out.fit.p;
  return out;
}

std::vector<HeadId> matched_controls(const std::vector<HeadId>& targets,
                                     const std::vector<probes::CompositeIndexRow>& composite) {
  std::set<HeadId> used(targets.begin(), targets.end());
  std::vector<HeadId> out;
  for (const auto& t : targets) {
    const probes::CompositeIndexRow* best = nullptr;
    for (const auto& row : composite) {
      if (row.head.layer != t.layer || used.count(row.head)) continue;
      if (!best || row.composite < best->composite ||
          (row.composite == best->composite && row.head.head < best->head.head)) {
        best = &row;
      }
    }
    if (!best) throw ArgumentError("no control head left in layer " + std::to_string(t.layer + 1) + " for " + t.label());
    used.insert(best->head);
    out.push_back(best->head);
  }
  return out;
}

HeadSets default_head_sets(const std::string& model, const std::vector<probes::CompositeIndexRow>& composite) {
  auto h = [](int layer, int head) { return HeadId{layer - 1, head - 1}; };
  HeadSets sets;
  if (model == "pythia-14m") {
    sets.targets = {{{h(3, 1)}, Condition::kTarget}, {{h(3, 2)}, Condition::kTarget},
                    {{h(3, 1), h(3, 2)}, Condition::kTarget}};
    sets.baselines = {{{h(3, 3)}, Condition::kBaseline}, {{h(3, 4)}, Condition::kBaseline},
                      {{h(3, 3), h(3, 4)}, Condition::kBaseline}};
    return sets;
  }
  if (model == "pythia-410m") {
    const std::vector<HeadId> targets{h(1, 14), h(4, 7), h(1, 3), h(2, 3), h(6, 10), h(1, 13)};
    for (const auto& t : targets) sets.targets.push_back({{t}, Condition::kTarget});
    if (!composite.empty()) {
      for (const auto& c : matched_controls(targets, composite)) sets.baselines.push_back({{c}, Condition::kBaseline});
    }
    return sets;
  }
  throw ArgumentError("no default ablation heads for model '" + model + "'; supply target and baseline heads");
}

}  // namespace headprobe::ablation
