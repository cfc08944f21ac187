#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "headprobe/error.hpp"
#include "headprobe/hub/hub.hpp"
#include "headprobe/neox/engine.hpp"
#include "headprobe/pipeline/runner.hpp"
#include "headprobe/stats/stats.hpp"
#include "headprobe/stimuli/align.hpp"
#include "internal.hpp"

namespace headprobe::pipeline::detail {

namespace fs = std::filesystem;
using probes::HeadId;

const std::vector<std::string>& header(const std::string& table) {
  static const std::map<std::string, std::vector<std::string>> headers{
      {"layer_scores", {"model", "step", "layer", "r2", "n", "degenerate"}},
      {"head_scores", {"model", "step", "layer", "head", "dataset", "n", "mean_attention", "stderr", "masked"}},
      {"tests", {"model", "step", "layer", "head", "n", "mean_diff", "t", "df", "p_raw", "p_fdr"}},
      {"modnoun", {"model", "run", "step", "n", "mean_log_ratio", "stderr"}},
      {"ablation_outcomes",
       {"model", "step", "condition", "kind", "source_step", "heads", "layer", "r2_intact", "r2_ablated", "delta_r2",
        "fraction_intact", "diagnostic"}},
      {"ablation_summary",
       {"model", "step", "condition", "kind", "heads", "mean_delta_r2", "mean_fraction", "tracked_layer",
        "tracked_delta_r2", "tracked_fraction"}},
      {"trajectory",
       {"model", "tracked_layer", "layer", "head", "n_steps", "slope", "intercept", "se", "t", "p_raw", "p_fdr", "r2",
        "note"}},
      {"composite",
       {"model", "rank", "layer", "head", "coef", "noun_attention", "verb_attention", "oneback_t",
        "positional_attention", "z_coef", "z_noun_attn", "z_verb_attn", "z_oneback_t", "z_positional_attn",
        "composite"}},
      {"ablation_effects",
       {"model", "kind", "metric", "n", "n_steps", "coefficient", "se", "t", "p", "interaction", "r2"}},
      {"coupling", {"fit", "n", "runs", "slope", "se", "t", "p", "r2", "aic", "delta_aic"}},
  };
  auto it = headers.find(table);
  if (it == headers.end()) throw ArgumentError("unknown table " + table);
  return it->second;
}

Table make_table(const std::string& name) { return Table{header(name), {}}; }

LoadedCheckpoint load_cell_checkpoint(const RunConfig& config, const ModelEntry& model, std::int64_t step) {
  const fs::path dir = checkpoint_dir(config, model, step);
  LoadedCheckpoint out{neox::load_checkpoint(dir), {}};
  std::map<std::string, std::string> known;
  if (std::ifstream ref(dir / ".ref.json"); ref) {
    try {
      for (const auto& f : nlohmann::json::parse(ref)) known[f.at("name")] = f.at("digest");
    } catch (const nlohmann::json::exception&) {
      known.clear();
    }
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() &&
        (name == "config.json" || name == "tokenizer.json" || e.path().extension() == ".safetensors")) {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    auto it = known.find(name);
    out.digests[name] = it != known.end() ? it->second : "sha256:" + hub::sha256_file(f);
  }
  return out;
}

namespace {

struct Accumulator {
  std::vector<double> values;
  std::size_t masked = 0;
};

using HeadAccumulators = std::vector<Accumulator>;  // indexed like all_heads()

std::string mean_or_nan(const std::vector<double>& v) {
  return v.empty() ? "nan" : num(stats::mean(v));
}

std::string stderr_or_nan(const std::vector<double>& v) {
  return v.size() < 2 ? "nan" : num(stats::standard_error(v));
}

void add_head_rows(Table& t, const std::string& model, std::int64_t step, const std::string& dataset,
                   const std::vector<HeadId>& heads, const HeadAccumulators& acc) {
  for (std::size_t h = 0; h < heads.size(); ++h) {
    t.rows.push_back({model, num(step), std::to_string(heads[h].layer + 1), std::to_string(heads[h].head + 1),
                      dataset, std::to_string(acc[h].values.size()), mean_or_nan(acc[h].values),
                      stderr_or_nan(acc[h].values), std::to_string(acc[h].masked)});
  }
}

void score_heads(const neox::ForwardTrace& trace, const stimuli::AlignedSentence& s, const std::vector<HeadId>& heads,
                 probes::CueAggregation agg, HeadAccumulators& acc) {
  for (std::size_t h = 0; h < heads.size(); ++h) {
    auto score = probes::head_attention_score(trace, s.target_span, s.cue_span, heads[h], agg);
    acc[h].values.push_back(score.value);
    if (score.masked) ++acc[h].masked;
  }
}

// Aligned pairs in file order; failures are counted into diagnostics.
std::vector<probes::AlignedPair> align_pairs(const neox::Tokenizer& tok, const std::vector<stimuli::StimulusPair>& pairs,
                                             std::vector<std::string>& diagnostics) {
  std::vector<probes::AlignedPair> out;
  std::size_t failed = 0;
  for (const auto& p : pairs) {
    try {
      out.push_back({p.pair_id, stimuli::align_spans(tok, p.sentence_a, p.word, p.cue_a),
                     stimuli::align_spans(tok, p.sentence_b, p.word, p.cue_b), p.relatedness});
    } catch (const AlignmentError& e) {
      if (failed++ < 5) diagnostics.push_back("pair " + p.pair_id + ": " + e.what());
    }
  }
  if (failed) diagnostics.push_back(std::to_string(failed) + " pairs could not be aligned and were left out");
  return out;
}

void perturbed_scores(const neox::Checkpoint& ckpt, const std::vector<stimuli::PerturbedStimulus>& items,
                      stimuli::PerturbationKind kind, const std::vector<HeadId>& heads, probes::CueAggregation agg,
                      HeadAccumulators& acc, std::vector<std::string>& diagnostics) {
  neox::CaptureSpec capture;
  capture.want_hidden = false;
  std::size_t failed = 0;
  for (const auto& item : items) {
    if (item.kind != kind) continue;
    stimuli::AlignedSentence s;
    try {
      s = stimuli::align_spans(ckpt.tokenizer, item.sentence, item.target, item.cue);
    } catch (const AlignmentError& e) {
      if (failed++ < 5) diagnostics.push_back(to_string(kind) + " '" + item.sentence + "': " + e.what());
      continue;
    }
    auto trace = neox::forward(ckpt.config, ckpt.weights, s.encoded, capture);
    score_heads(trace, s, heads, agg, acc);
  }
  if (failed) diagnostics.push_back(std::to_string(failed) + " " + to_string(kind) + " sentences left out");
}

}  // namespace

std::vector<probes::LayerScore> layer_scores_from_table(const Table& t) {
  std::vector<probes::LayerScore> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    probes::LayerScore s;
    s.step = static_cast<std::int64_t>(t.number(i, "step"));
    s.layer = static_cast<int>(t.number(i, "layer"));
    s.r2 = t.number(i, "r2");
    s.n_pairs = static_cast<std::size_t>(t.number(i, "n"));
    s.degenerate = t.at(i, "degenerate") == "1";
    out.push_back(s);
  }
  return out;
}

std::map<Analysis, CellResult> compute_stage1(const RunConfig& config, const ModelEntry& model, std::int64_t step,
                                              const neox::Checkpoint& ckpt, const StimulusSets& sets,
                                              const std::vector<Analysis>& analyses) {
  auto wants = [&](Analysis a) { return std::find(analyses.begin(), analyses.end(), a) != analyses.end(); };
  const auto heads = probes::all_heads(ckpt.config);
  const auto agg = config.aggregation;
  std::map<Analysis, CellResult> out;

  if (wants(Analysis::kPhase1) || wants(Analysis::kStress1Back)) {
    std::vector<std::string> diag;
    auto pairs = align_pairs(ckpt.tokenizer, sets.pairs, diag);
    neox::CaptureSpec capture;
    capture.want_hidden = wants(Analysis::kPhase1);
    std::vector<std::vector<double>> distances;
    std::vector<double> relatedness;
    HeadAccumulators cue(heads.size()), oneback(heads.size());
    std::size_t numeric_failures = 0;
    for (const auto& pair : pairs) {
      auto ta = neox::forward(ckpt.config, ckpt.weights, pair.a.encoded, capture);
      auto tb = neox::forward(ckpt.config, ckpt.weights, pair.b.encoded, capture);
      if (capture.want_hidden) {
        try {
          distances.push_back(probes::pair_distances(ta, tb, pair));
          relatedness.push_back(pair.relatedness);
        } catch (const NumericError& e) {
          if (numeric_failures++ < 5) diag.push_back("pair " + pair.pair_id + ": " + e.what());
        }
      }
      for (const auto* item : {&ta, &tb}) {
        const auto& sentence = item == &ta ? pair.a : pair.b;
        score_heads(*item, sentence, heads, agg, cue);
        if (item->seq_len >= 2) {
          for (std::size_t h = 0; h < heads.size(); ++h) oneback[h].values.push_back(probes::one_back_score(*item, heads[h]));
        } else {
          for (auto& a : oneback) a.values.push_back(std::nan(""));
        }
      }
    }
    if (numeric_failures) diag.push_back(std::to_string(numeric_failures) + " pairs with zero-norm embeddings left out");

    if (wants(Analysis::kPhase1)) {
      CellResult r;
      r.diagnostics = diag;
      Table layers = make_table("layer_scores");
      if (distances.size() >= 3) {
        for (const auto& s : probes::layer_scores_from_distances(distances, relatedness, step)) {
          layers.rows.push_back({model.label, num(step), std::to_string(s.layer), num(s.r2), std::to_string(s.n_pairs),
                                 s.degenerate ? "1" : "0"});
          if (s.degenerate) r.diagnostics.push_back("layer " + std::to_string(s.layer) + ": constant distances");
        }
      } else {
        throw DegenerateError("phase1 needs at least 3 aligned pairs, got " + std::to_string(distances.size()));
      }
      Table head_rows = make_table("head_scores");
      add_head_rows(head_rows, model.label, step, "rawc", heads, cue);
      r.tables["layer_scores"] = std::move(layers);
      r.tables["head_scores"] = std::move(head_rows);
      out[Analysis::kPhase1] = std::move(r);
    }
    if (wants(Analysis::kStress1Back)) {
      CellResult r;
      r.diagnostics = diag;
      Table tests = make_table("tests");
      for (std::size_t h = 0; h < heads.size(); ++h) {
        std::vector<double> a, b;
        for (std::size_t i = 0; i < cue[h].values.size(); ++i) {
          if (std::isnan(oneback[h].values[i])) continue;
          a.push_back(cue[h].values[i]);
          b.push_back(oneback[h].values[i]);
        }
        std::vector<std::string> row{model.label, num(step), std::to_string(heads[h].layer + 1),
                                     std::to_string(heads[h].head + 1), std::to_string(a.size())};
        try {
          auto t = probes::oneback_subtraction_test(a, b);
          row.insert(row.end(), {num(t.mean_diff), num(t.t), num(static_cast<std::int64_t>(t.df)),
                                 num(t.p_one_tailed), ""});
        } catch (const Error& e) {
          row.insert(row.end(), {"nan", "nan", "nan", "nan", ""});
          r.diagnostics.push_back("head " + heads[h].label() + ": " + e.what());
        }
        tests.rows.push_back(std::move(row));
      }
      Table head_rows = make_table("head_scores");
      add_head_rows(head_rows, model.label, step, "oneback", heads, oneback);
      r.tables["tests"] = std::move(tests);
      r.tables["head_scores"] = std::move(head_rows);
      out[Analysis::kStress1Back] = std::move(r);
    }
  }

  if (wants(Analysis::kStressPositional)) {
    CellResult r;
    HeadAccumulators acc(heads.size());
    perturbed_scores(ckpt, sets.positional, stimuli::PerturbationKind::kPositional, heads, agg, acc, r.diagnostics);
    Table t = make_table("head_scores");
    add_head_rows(t, model.label, step, "positional", heads, acc);
    r.tables["head_scores"] = std::move(t);
    out[Analysis::kStressPositional] = std::move(r);
  }

  if (wants(Analysis::kStressPos)) {
    CellResult r;
    Table t = make_table("head_scores");
    for (auto kind : {stimuli::PerturbationKind::kPosNounTarget, stimuli::PerturbationKind::kPosVerbTarget}) {
      HeadAccumulators acc(heads.size());
      perturbed_scores(ckpt, sets.pos, kind, heads, agg, acc, r.diagnostics);
      add_head_rows(t, model.label, step, to_string(kind), heads, acc);
    }
    r.tables["head_scores"] = std::move(t);
    out[Analysis::kStressPos] = std::move(r);
  }

  if (wants(Analysis::kModnoun)) {
    CellResult r;
    std::vector<double> ratios;
    std::size_t short_items = 0;
    for (const auto& item : sets.modnoun) {
      auto original = ckpt.tokenizer.encode(item.sentence);
      auto reversed = ckpt.tokenizer.encode(item.reversed);
      if (original.size() < 2 || reversed.size() < 2) {
        ++short_items;
        continue;
      }
      ratios.push_back(probes::modnoun_log_ratio(ckpt.config, ckpt.weights, original, reversed));
    }
    if (short_items) r.diagnostics.push_back(std::to_string(short_items) + " single-token sentences left out");
    Table t = make_table("modnoun");
    t.rows.push_back({model.label, model.run, num(step), std::to_string(ratios.size()), mean_or_nan(ratios),
                      stderr_or_nan(ratios)});
    r.tables["modnoun"] = std::move(t);
    out[Analysis::kModnoun] = std::move(r);
  }
  return out;
}

CellResult compute_ablation(const RunConfig& config, const ModelEntry& model, std::int64_t step,
                            const neox::Checkpoint& ckpt, const StimulusSets& sets, const AblationPlan& plan,
                            const neox::ModelWeights* source, std::vector<probes::LayerScore> intact) {
  (void)config;
  CellResult r;
  auto pairs = align_pairs(ckpt.tokenizer, sets.pairs, r.diagnostics);
  if (intact.empty()) intact = probes::layer_scores(ckpt.config, ckpt.weights, pairs, step);
  Table outcomes = make_table("ablation_outcomes");
  Table summary = make_table("ablation_summary");
  for (const auto& item : plan.specs) {
    const bool copy = item.kind == ablation::AblationKind::kCopyFromStep;
    auto eval = ablation::evaluate_ablated(ckpt.config, ckpt.weights, item, pairs, step, copy ? source : nullptr, intact);
    const std::string cond = ablation::to_string(item.label), kind = ablation::to_string(item.kind);
    const std::string src = copy && item.source_step ? num(*item.source_step) : "";
    for (const auto& o : eval.per_layer) {
      outcomes.rows.push_back({model.label, num(step), cond, kind, src, item.heads_label(), std::to_string(o.layer),
                               num(o.r2_intact), num(o.r2_ablated), num(o.delta_r2), num(o.fraction_intact),
                               o.diagnostic});
    }
    std::vector<std::string> row{model.label, num(step), cond, kind, item.heads_label(), num(eval.mean_delta_r2),
                                 num(eval.mean_fraction)};
    const ablation::AblationOutcome* tracked = nullptr;
    if (plan.tracked_layer) {
      for (const auto& o : eval.per_layer) {
        if (o.layer == *plan.tracked_layer) tracked = &o;
      }
    }
    if (tracked) {
      row.insert(row.end(), {std::to_string(tracked->layer), num(tracked->delta_r2), num(tracked->fraction_intact)});
    } else {
      row.insert(row.end(), {"", "", ""});
    }
    summary.rows.push_back(std::move(row));
  }
  r.tables["ablation_outcomes"] = std::move(outcomes);
  r.tables["ablation_summary"] = std::move(summary);
  return r;
}

}  // namespace headprobe::pipeline::detail
