#include "headprobe/probes/probes.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

#include "headprobe/error.hpp"

namespace headprobe::probes {

namespace {

void check_head(const neox::ForwardTrace& trace, HeadId h) {
  if (h.layer < 0 || h.layer >= trace.n_layers || h.head < 0 || h.head >= trace.n_heads) {
    throw ArgumentError("head " + h.label() + " outside a model with " + std::to_string(trace.n_layers) +
                        " layers and " + std::to_string(trace.n_heads) + " heads");
  }
}

void check_span(const neox::ForwardTrace& trace, TokenSpan s, const char* what) {
  if (s.empty() || s.begin < 0 || s.end > trace.seq_len) {
    throw ArgumentError(std::string(what) + " span [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                        ") invalid for a sequence of " + std::to_string(trace.seq_len));
  }
}

std::vector<double> span_mean(const neox::ForwardTrace& trace, TokenSpan span, int layer) {
  std::vector<double> out(static_cast<std::size_t>(trace.d_model), 0.0);
  for (int t = span.begin; t < span.end; ++t) {
    const auto h = trace.hidden_state(layer, t);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += h[i];
  }
  for (auto& v : out) v /= span.size();
  return out;
}

}  // namespace

std::string HeadId::label() const { return "(" + std::to_string(layer + 1) + "," + std::to_string(head + 1) + ")"; }

HeadId HeadId::parse(const std::string& text) {
  static const std::regex pattern(R"(^\s*\(?\s*(\d+)\s*,\s*(\d+)\s*\)?\s*$)");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) throw ArgumentError("cannot parse head '" + text + "'");
  const int l = std::stoi(m[1]), h = std::stoi(m[2]);
  if (l < 1 || h < 1) throw ArgumentError("head labels are 1-based: '" + text + "'");
  return HeadId{l - 1, h - 1};
}

std::vector<HeadId> all_heads(const neox::ModelConfig& config) {
  std::vector<HeadId> out;
  for (int l = 0; l < config.n_layers; ++l) {
    for (int h = 0; h < config.n_heads; ++h) out.push_back({l, h});
  }
  return out;
}

double target_distance(const neox::ForwardTrace& a, const neox::ForwardTrace& b, TokenSpan span_a, TokenSpan span_b,
                       int layer) {
  check_span(a, span_a, "first");
  check_span(b, span_b, "second");
  if (a.d_model != b.d_model) throw ArgumentError("traces differ in width");
  const auto u = span_mean(a, span_a, layer);
  const auto v = span_mean(b, span_b, layer);
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw NumericError("zero-norm embedding at layer " + std::to_string(layer));
  const double cos = std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
  return 1.0 - cos;
}

LayerScore layer_r2(const std::vector<double>& distances, const std::vector<double>& relatedness, std::int64_t step,
                    int layer) {
  if (distances.size() != relatedness.size()) throw ArgumentError("layer_r2: series lengths differ");
  if (distances.size() < 3) throw ArgumentError("layer_r2: need at least 3 pairs");
  if (std::all_of(distances.begin(), distances.end(), [&](double d) { return d == distances.front(); })) {
    throw DegenerateError("layer_r2: distances are constant at layer " + std::to_string(layer));
  }
  LayerScore s;
  s.step = step;
  s.layer = layer;
  s.n_pairs = distances.size();
  const double r = stats::pearson(distances, relatedness);
  s.r2 = r * r;
  return s;
}

int select_tracked_layer(const std::vector<LayerScore>& scores) {
  if (scores.empty()) throw ArgumentError("select_tracked_layer: no scores");
  const LayerScore* best = &scores.front();
  for (const auto& s : scores) {
    if (s.r2 > best->r2 || (s.r2 == best->r2 && s.layer < best->layer)) best = &s;
  }
  return best->layer;
}

HeadScore head_attention_score(const neox::ForwardTrace& trace, TokenSpan target_span, TokenSpan cue_span, HeadId head,
                               CueAggregation aggregation) {
  check_head(trace, head);
  check_span(trace, target_span, "target");
  check_span(trace, cue_span, "cue");
  HeadScore out;
  double total = 0.0;
  for (int q = target_span.begin; q < target_span.end; ++q) {
    const auto row = trace.attention_row(head.layer, head.head, q);
    double s = 0.0;
    for (int k = cue_span.begin; k < cue_span.end; ++k) {
      if (k > q) out.masked = true;
      s += row[static_cast<std::size_t>(k)];
    }
    total += aggregation == CueAggregation::kMean ? s / cue_span.size() : s;
  }
  out.value = total / target_span.size();
  return out;
}

double one_back_score(const neox::ForwardTrace& trace, HeadId head) {
  check_head(trace, head);
  if (trace.seq_len < 2) throw ArgumentError("one_back_score: need at least 2 tokens");
  double s = 0.0;
  for (int t = 1; t < trace.seq_len; ++t) s += trace.attention_weight(head.layer, head.head, t, t - 1);
  return s / (trace.seq_len - 1);
}

stats::TTestResult oneback_subtraction_test(const std::vector<double>& cue_attention,
                                            const std::vector<double>& one_back) {
  return stats::paired_t_one_tailed(cue_attention, one_back);
}

stats::RegressionResult trajectory_regression(const std::vector<double>& r2_series,
                                              const std::vector<double>& attention_series) {
  if (r2_series.size() != attention_series.size()) {
    throw ArgumentError("trajectory_regression: R2 and attention series are not on the same step grid");
  }
  if (r2_series.size() < 3) throw ArgumentError("trajectory_regression: need at least 3 checkpoints");
  return stats::ols(attention_series, r2_series);
}

std::vector<CompositeIndexRow> composite_index(const std::vector<CompositeInputs>& inputs) {
  if (inputs.size() < 2) throw ArgumentError("composite_index: need at least 2 heads");
  using Field = std::optional<double> CompositeInputs::*;
  const std::pair<Field, const char*> fields[] = {{&CompositeInputs::coef, "trajectory coefficient"},
                                                  {&CompositeInputs::noun_attention, "noun attention"},
                                                  {&CompositeInputs::verb_attention, "verb attention"},
                                                  {&CompositeInputs::oneback_t, "1-back t"},
                                                  {&CompositeInputs::positional_attention, "positional attention"}};
  std::vector<std::vector<double>> z;
  for (const auto& [field, name] : fields) {
    std::vector<double> column;
    for (const auto& in : inputs) {
      if (!(in.*field)) throw ArgumentError(std::string("composite_index: ") + name + " missing for head " + in.head.label());
      column.push_back(*(in.*field));
    }
    try {
      z.push_back(stats::zscore(column));
    } catch (const DegenerateError&) {
      throw DegenerateError(std::string("composite_index: ") + name + " has zero variance across heads");
    }
  }
  std::vector<CompositeIndexRow> rows(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& r = rows[i];
    r.head = inputs[i].head;
    r.z_coef = z[0][i];
    r.z_noun_attn = z[1][i];
    r.z_verb_attn = z[2][i];
    r.z_oneback_t = z[3][i];
    r.z_positional_attn = z[4][i];
    r.composite = (r.z_coef + r.z_noun_attn + r.z_verb_attn + r.z_oneback_t + r.z_positional_attn) / 5.0;
  }
  std::stable_sort(rows.begin(), rows.end(), [](const CompositeIndexRow& a, const CompositeIndexRow& b) {
    if (a.composite != b.composite) return a.composite > b.composite;
    return a.head < b.head;
  });
  return rows;
}

double modnoun_log_ratio(const neox::ModelConfig& config, const neox::ModelWeights& weights,
                         const neox::EncodedSentence& original, const neox::EncodedSentence& reversed) {
  return neox::sentence_log_prob(config, weights, original) - neox::sentence_log_prob(config, weights, reversed);
}

std::vector<double> pair_distances(const neox::ForwardTrace& a, const neox::ForwardTrace& b, const AlignedPair& pair) {
  std::vector<double> out;
  for (int l = 1; l <= a.n_layers; ++l) out.push_back(target_distance(a, b, pair.a.target_span, pair.b.target_span, l));
  return out;
}

std::vector<LayerScore> layer_scores_from_distances(const std::vector<std::vector<double>>& distances,
                                                    const std::vector<double>& relatedness, std::int64_t step) {
  if (distances.empty()) throw ArgumentError("layer_scores: no pairs");
  const std::size_t layers = distances.front().size();
  std::vector<LayerScore> out;
  for (std::size_t i = 0; i < layers; ++i) {
    const int layer = static_cast<int>(i) + 1;
    std::vector<double> column;
    for (const auto& d : distances) column.push_back(d.at(i));
    try {
      out.push_back(layer_r2(column, relatedness, step, layer));
    } catch (const DegenerateError&) {
      LayerScore s;
      s.step = step;
      s.layer = layer;
      s.n_pairs = column.size();
      s.degenerate = true;
      out.push_back(s);
    }
  }
  return out;
}

std::vector<LayerScore> layer_scores(const neox::ModelConfig& config, const neox::ModelWeights& weights,
                                     const std::vector<AlignedPair>& pairs, std::int64_t step) {
  neox::CaptureSpec capture;
  capture.want_attention = false;
  std::vector<std::vector<double>> distances;
  std::vector<double> relatedness;
  for (const auto& p : pairs) {
    const auto ta = neox::forward(config, weights, p.a.encoded, capture);
    const auto tb = neox::forward(config, weights, p.b.encoded, capture);
    distances.push_back(pair_distances(ta, tb, p));
    relatedness.push_back(p.relatedness);
  }
  return layer_scores_from_distances(distances, relatedness, step);
}

std::vector<std::vector<double>> label_dummies(const std::vector<std::string>& labels) {
  const std::set<std::string> unique(labels.begin(), labels.end());
  std::vector<std::vector<double>> out;
  for (auto it = std::next(unique.begin(), unique.empty() ? 0 : 1); it != unique.end(); ++it) {
    std::vector<double> col(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) col[i] = labels[i] == *it ? 1.0 : 0.0;
    out.push_back(std::move(col));
  }
  return out;
}

CouplingReport logratio_r2_coupling(const std::vector<double>& r2_series, const std::vector<double>& logratio_series,
                                    const std::vector<std::int64_t>& steps, const std::vector<std::string>& run_labels) {
  const std::size_t n = r2_series.size();
  if (logratio_series.size() != n || steps.size() != n || run_labels.size() != n) {
    throw ArgumentError("logratio_r2_coupling: series are not aligned");
  }
  if (n < 3) throw ArgumentError("logratio_r2_coupling: need at least 3 checkpoints");
  const auto dummies = label_dummies(run_labels);
  std::vector<double> log_step(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (steps[i] < 0) throw ArgumentError("logratio_r2_coupling: negative step");
    log_step[i] = std::log10(static_cast<double>(steps[i]) + 1.0);
  }
  CouplingReport out;
  out.logratio_fit = stats::ols(logratio_series, r2_series, dummies);
  out.step_fit = stats::ols(log_step, r2_series, dummies);
  out.delta_aic = out.step_fit.aic - out.logratio_fit.aic;
  return out;
}

}  // namespace headprobe::probes
