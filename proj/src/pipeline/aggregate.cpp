#include "aggregate.hpp"

#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "headprobe/ablation/ablation.hpp"
#include "headprobe/error.hpp"
#include "headprobe/hub/hub.hpp"
#include "headprobe/stats/stats.hpp"
#include "internal.hpp"

namespace headprobe::pipeline::detail {

namespace fs = std::filesystem;
using probes::HeadId;

namespace {

using HeadKey = std::pair<int, int>;  // 1-based layer, head as written in tables

HeadKey head_key(const Table& t, std::size_t row) {
  return {static_cast<int>(t.number(row, "layer")), static_cast<int>(t.number(row, "head"))};
}

// dataset -> head -> step -> mean_attention for one model.
std::map<std::string, std::map<HeadKey, std::map<std::int64_t, double>>> head_means(const Table& heads,
                                                                                   const std::string& model) {
  std::map<std::string, std::map<HeadKey, std::map<std::int64_t, double>>> out;
  for (std::size_t i = 0; i < heads.rows.size(); ++i) {
    if (heads.at(i, "model") != model) continue;
    out[heads.at(i, "dataset")][head_key(heads, i)][static_cast<std::int64_t>(heads.number(i, "step"))] =
        heads.number(i, "mean_attention");
  }
  return out;
}

std::map<std::int64_t, double> r2_at_layer(const Table& layers, const std::string& model, int layer) {
  std::map<std::int64_t, double> out;
  for (std::size_t i = 0; i < layers.rows.size(); ++i) {
    if (layers.at(i, "model") == model && static_cast<int>(layers.number(i, "layer")) == layer) {
      out[static_cast<std::int64_t>(layers.number(i, "step"))] = layers.number(i, "r2");
    }
  }
  return out;
}

}  // namespace

Aggregator::Aggregator(const RunConfig& config, fs::path output_dir, RunManifest& manifest)
    : config_(config), out_(std::move(output_dir)), manifest_(manifest) {}

const std::vector<probes::CompositeIndexRow>* Aggregator::composite(const std::string& model) const {
  auto it = composite_.find(model);
  return it == composite_.end() ? nullptr : &it->second;
}

std::optional<int> Aggregator::tracked_layer(const std::string& model) const {
  auto it = tracked_.find(model);
  return it == tracked_.end() ? std::nullopt : std::optional<int>(it->second);
}

template <typename Fn>
void Aggregator::guarded(const std::string& what, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    failed_ = true;
    manifest_.notices.push_back(what + " failed: " + e.what());
    spdlog::error("{} failed: {}", what, e.what());
  }
}

Table Aggregator::collect(const std::string& table, const std::vector<Analysis>& analyses) const {
  Table out = make_table(table);
  for (const auto& m : config_.models) {
    for (auto step : m.steps) {
      for (auto a : analyses) {
        const auto* cell = manifest_.find(m.label, step, to_string(a));
        if (!cell || cell->status != "ok") continue;
        const std::string rel =
            "cells/" + m.label + "/" + hub::revision_name(step) + "/" + to_string(a) + "/" + table + ".csv";
        if (!cell->outputs.count(rel)) continue;
        Table part = read_table(out_ / rel);
        if (part.header != out.header) throw SchemaError(rel + " has an unexpected header");
        for (auto& r : part.rows) out.rows.push_back(std::move(r));
      }
    }
  }
  return out;
}

void Aggregator::write(const std::string& name, const Table& table) {
  manifest_.tables[name + ".csv"] = write_table(out_ / (name + ".csv"), table);
}

void Aggregator::stage1() {
  const bool phase1 = config_.wants(Analysis::kPhase1);
  Table layers = make_table("layer_scores");
  Table heads = make_table("head_scores");
  Table tests = make_table("tests");
  Table traj = make_table("trajectory");
  Table modnoun = make_table("modnoun");

  if (phase1) {
    guarded("layer_scores", [&] {
      layers = collect("layer_scores", {Analysis::kPhase1});
      write("layer_scores", layers);
      for (const auto& m : config_.models) {
        const auto final_step = m.steps.back();
        std::vector<probes::LayerScore> scores;
        for (std::size_t i = 0; i < layers.rows.size(); ++i) {
          if (layers.at(i, "model") != m.label || layers.number(i, "step") != static_cast<double>(final_step)) continue;
          scores.push_back({final_step, static_cast<int>(layers.number(i, "layer")), layers.number(i, "r2"),
                            static_cast<std::size_t>(layers.number(i, "n")), layers.at(i, "degenerate") == "1"});
        }
        if (scores.empty()) {
          manifest_.notices.push_back(m.label + ": no phase1 result at the final step " + std::to_string(final_step) +
                                      "; no tracked layer");
          continue;
        }
        tracked_[m.label] = probes::select_tracked_layer(scores);
      }
    });
  }
  const std::vector<Analysis> head_sources{Analysis::kPhase1, Analysis::kStress1Back, Analysis::kStressPositional,
                                           Analysis::kStressPos};
  if (std::any_of(head_sources.begin(), head_sources.end(), [&](Analysis a) { return config_.wants(a); })) {
    guarded("head_scores", [&] {
      heads = collect("head_scores", head_sources);
      write("head_scores", heads);
    });
  }
  if (config_.wants(Analysis::kStress1Back)) {
    guarded("tests", [&] {
      tests = collect("tests", {Analysis::kStress1Back});
      const auto p_col = tests.column("p_raw"), fdr_col = tests.column("p_fdr");
      for (const auto& m : config_.models) {
        std::vector<std::size_t> idx;
        std::vector<double> p;
        for (std::size_t i = 0; i < tests.rows.size(); ++i) {
          if (tests.rows[i][0] != m.label) continue;
          const double v = tests.number(i, "p_raw");
          if (std::isfinite(v)) {
            idx.push_back(i);
            p.push_back(v);
          }
        }
        if (p.empty()) continue;
        const auto adj = stats::bh_fdr(p);
        for (std::size_t k = 0; k < idx.size(); ++k) tests.rows[idx[k]][fdr_col] = num(adj[k]);
      }
      (void)p_col;
      write("tests", tests);
    });
  }
  if (phase1) {
    guarded("trajectory", [&] {
      traj = trajectory(layers, heads);
      write("trajectory", traj);
    });
  }
  if (config_.wants(Analysis::kComposite)) {
    guarded("composite", [&] { write("composite", composite_table(heads, tests, traj)); });
  }
  if (config_.wants(Analysis::kModnoun)) {
    guarded("modnoun", [&] {
      modnoun = collect("modnoun", {Analysis::kModnoun});
      write("modnoun", modnoun);
    });
    if (phase1) guarded("coupling", [&] { write("coupling", coupling(layers, modnoun)); });
  }
}

Table Aggregator::trajectory(const Table& layers, const Table& heads) {
  Table out = make_table("trajectory");
  for (const auto& m : config_.models) {
    auto tracked = tracked_layer(m.label);
    if (!tracked) continue;
    const auto r2 = r2_at_layer(layers, m.label, *tracked);
    const auto means = head_means(heads, m.label);
    auto rawc = means.find("rawc");
    if (rawc == means.end()) continue;
    const std::size_t first = out.rows.size();
    std::vector<std::size_t> idx;
    std::vector<double> p;
    for (const auto& [key, series] : rawc->second) {
      std::vector<double> ys, xs;
      for (const auto& [step, value] : r2) {
        auto it = series.find(step);
        if (it == series.end() || !std::isfinite(it->second) || !std::isfinite(value)) continue;
        ys.push_back(value);
        xs.push_back(it->second);
      }
      std::vector<std::string> row{m.label, std::to_string(*tracked), std::to_string(key.first),
                                   std::to_string(key.second), std::to_string(xs.size())};
      if (xs.size() < 3) {
        row.insert(row.end(), {"nan", "nan", "nan", "nan", "nan", "", "nan", "fewer than 3 checkpoints"});
      } else {
        try {
          auto fit = probes::trajectory_regression(ys, xs);
          row.insert(row.end(),
                     {num(fit.slope), num(fit.intercept), num(fit.se_slope), num(fit.t), num(fit.p), "", num(fit.r2), ""});
          if (std::isfinite(fit.p)) {
            idx.push_back(out.rows.size());
            p.push_back(fit.p);
          }
        } catch (const Error& e) {
          row.insert(row.end(), {"nan", "nan", "nan", "nan", "nan", "", "nan", e.what()});
        }
      }
      out.rows.push_back(std::move(row));
    }
    if (!p.empty()) {
      const auto adj = stats::bh_fdr(p);
      const auto col = out.column("p_fdr");
      for (std::size_t k = 0; k < idx.size(); ++k) out.rows[idx[k]][col] = num(adj[k]);
    }
    if (out.rows.size() - first > 0 && idx.empty()) {
      manifest_.notices.push_back(m.label + ": trajectory regressions need at least 3 checkpoints with phase1 results");
    }
  }
  return out;
}

Table Aggregator::composite_table(const Table& heads, const Table& tests, const Table& traj) {
  Table out = make_table("composite");
  for (const auto& m : config_.models) {
    const auto final_step = m.steps.back();
    const auto means = head_means(heads, m.label);
    auto at_final = [&](const std::string& dataset, HeadKey key) -> std::optional<double> {
      auto d = means.find(dataset);
      if (d == means.end()) return std::nullopt;
      auto h = d->second.find(key);
      if (h == d->second.end()) return std::nullopt;
      auto s = h->second.find(final_step);
      if (s == h->second.end() || !std::isfinite(s->second)) return std::nullopt;
      return s->second;
    };
    std::map<HeadKey, double> coef, oneback_t;
    for (std::size_t i = 0; i < traj.rows.size(); ++i) {
      if (traj.at(i, "model") == m.label && std::isfinite(traj.number(i, "slope"))) {
        coef[head_key(traj, i)] = traj.number(i, "slope");
      }
    }
    for (std::size_t i = 0; i < tests.rows.size(); ++i) {
      if (tests.at(i, "model") == m.label && tests.number(i, "step") == static_cast<double>(final_step) &&
          std::isfinite(tests.number(i, "t"))) {
        oneback_t[head_key(tests, i)] = tests.number(i, "t");
      }
    }
    auto rawc = means.find("rawc");
    if (rawc == means.end()) {
      manifest_.notices.push_back(m.label + ": composite skipped, no phase1 head scores");
      continue;
    }
    std::vector<probes::CompositeInputs> inputs;
    std::size_t incomplete = 0;
    for (const auto& [key, _] : rawc->second) {
      probes::CompositeInputs in;
      in.head = {key.first - 1, key.second - 1};
      if (auto it = coef.find(key); it != coef.end()) in.coef = it->second;
      // Cue kind: pos_verb_target items are disambiguated by a noun, pos_noun_target items by a verb.
      in.noun_attention = at_final("pos_verb_target", key);
      in.verb_attention = at_final("pos_noun_target", key);
      if (auto it = oneback_t.find(key); it != oneback_t.end()) in.oneback_t = it->second;
      in.positional_attention = at_final("positional", key);
      if (!in.coef || !in.noun_attention || !in.verb_attention || !in.oneback_t || !in.positional_attention) {
        ++incomplete;
      }
      inputs.push_back(in);
    }
    if (incomplete) {
      manifest_.notices.push_back(m.label + ": composite skipped, " + std::to_string(incomplete) +
                                  " heads lack one of the five inputs at step " + std::to_string(final_step));
      continue;
    }
    std::vector<probes::CompositeIndexRow> rows;
    try {
      rows = probes::composite_index(inputs);
    } catch (const Error& e) {
      manifest_.notices.push_back(m.label + ": composite skipped: " + e.what());
      continue;
    }
    std::map<HeadId, const probes::CompositeInputs*> by_head;
    for (const auto& in : inputs) by_head[in.head] = &in;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      const auto& in = *by_head.at(r.head);
      out.rows.push_back({m.label, std::to_string(i + 1), std::to_string(r.head.layer + 1),
                          std::to_string(r.head.head + 1), num(*in.coef), num(*in.noun_attention),
                          num(*in.verb_attention), num(*in.oneback_t), num(*in.positional_attention), num(r.z_coef),
                          num(r.z_noun_attn), num(r.z_verb_attn), num(r.z_oneback_t), num(r.z_positional_attn),
                          num(r.composite)});
    }
    composite_[m.label] = std::move(rows);
  }
  return out;
}

Table Aggregator::coupling(const Table& layers, const Table& modnoun) {
  Table out = make_table("coupling");
  std::vector<double> r2, ratios;
  std::vector<std::int64_t> steps;
  std::vector<std::string> runs;
  for (const auto& m : config_.models) {
    auto tracked = tracked_layer(m.label);
    if (!tracked) continue;
    const auto series = r2_at_layer(layers, m.label, *tracked);
    for (std::size_t i = 0; i < modnoun.rows.size(); ++i) {
      if (modnoun.at(i, "model") != m.label) continue;
      const auto step = static_cast<std::int64_t>(modnoun.number(i, "step"));
      const double lr = modnoun.number(i, "mean_log_ratio");
      auto it = series.find(step);
      if (it == series.end() || !std::isfinite(lr) || !std::isfinite(it->second)) continue;
      r2.push_back(it->second);
      ratios.push_back(lr);
      steps.push_back(step);
      runs.push_back(m.run);
    }
  }
  const std::size_t n_runs = std::set<std::string>(runs.begin(), runs.end()).size();
  if (r2.size() < 3 + n_runs) {
    manifest_.notices.push_back("coupling skipped: " + std::to_string(r2.size()) + " observations over " +
                                std::to_string(n_runs) + " runs is too few");
    return out;
  }
  try {
    auto rep = probes::logratio_r2_coupling(r2, ratios, steps, runs);
    for (const auto& [name, fit] : {std::pair{"logratio", rep.logratio_fit}, std::pair{"log_step", rep.step_fit}}) {
      out.rows.push_back({name, std::to_string(fit.n), std::to_string(n_runs), num(fit.slope), num(fit.se_slope),
                          num(fit.t), num(fit.p), num(fit.r2), num(fit.aic), num(rep.delta_aic)});
    }
  } catch (const Error& e) {
    manifest_.notices.push_back(std::string("coupling skipped: ") + e.what());
  }
  return out;
}

void Aggregator::stage2() {
  Table summary = make_table("ablation_summary");
  guarded("ablation_outcomes", [&] { write("ablation_outcomes", collect("ablation_outcomes", {Analysis::kAblation})); });
  guarded("ablation_summary", [&] {
    summary = collect("ablation_summary", {Analysis::kAblation});
    write("ablation_summary", summary);
  });
  guarded("ablation_effects", [&] { write("ablation_effects", effects(summary)); });
}

Table Aggregator::effects(const Table& summary) {
  Table out = make_table("ablation_effects");
  static const std::vector<std::string> metrics{"mean_delta_r2", "mean_fraction", "tracked_delta_r2",
                                                "tracked_fraction"};
  for (const auto& m : config_.models) {
    for (auto kind : config_.ablation.kinds) {
      const std::string kind_name = ablation::to_string(kind);
      for (const auto& metric : metrics) {
        std::vector<ablation::ConditionObservation> obs;
        std::set<std::int64_t> steps;
        for (std::size_t i = 0; i < summary.rows.size(); ++i) {
          if (summary.at(i, "model") != m.label || summary.at(i, "kind") != kind_name) continue;
          const double v = summary.number(i, metric);
          if (!std::isfinite(v)) continue;
          const auto step = static_cast<std::int64_t>(summary.number(i, "step"));
          obs.push_back({v,
                         summary.at(i, "condition") == "target" ? ablation::Condition::kTarget
                                                                : ablation::Condition::kBaseline,
                         step});
          steps.insert(step);
        }
        if (obs.empty()) continue;
        try {
          auto eff = ablation::condition_effect(obs, config_.ablation.interaction);
          out.rows.push_back({m.label, kind_name, metric, std::to_string(obs.size()), std::to_string(steps.size()),
                              num(eff.coefficient), num(eff.se), num(eff.t), num(eff.p),
                              config_.ablation.interaction ? "1" : "0", num(eff.fit.r2)});
        } catch (const Error& e) {
          manifest_.notices.push_back(m.label + " " + kind_name + " " + metric + ": condition effect skipped: " +
                                      e.what());
        }
      }
    }
  }
  return out;
}

}  // namespace headprobe::pipeline::detail
