#include "headprobe/pipeline/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>

#include <nlohmann/json.hpp>

#include "headprobe/error.hpp"
#include "headprobe/pipeline/table.hpp"
#include "headprobe/stats/stats.hpp"
#include "svg.hpp"

namespace headprobe::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr double kWidth = 900;
constexpr double kPanelH = 280;
constexpr double kMargin = 20;

const char* const kLogStep = "log10(step + 1)";

using HeadKey = std::pair<int, int>;  // 1-based layer, head

std::string head_label(const HeadKey& k) { return "(" + std::to_string(k.first) + "," + std::to_string(k.second) + ")"; }

double log_step(double step) { return std::log10(step + 1.0); }

std::vector<std::string> models_in_order(const Table& t) {
  std::vector<std::string> out;
  if (t.empty()) return out;
  const auto col = t.column("model");
  for (const auto& r : t.rows) {
    if (std::find(out.begin(), out.end(), r[col]) == out.end()) out.push_back(r[col]);
  }
  return out;
}

// Per-head series over steps for one model and dataset of head_scores.
std::map<HeadKey, std::map<double, double>> head_series(const Table& heads, const std::string& model,
                                                        const std::string& dataset, const std::string& value_col) {
  std::map<HeadKey, std::map<double, double>> out;
  const bool has_dataset = std::find(heads.header.begin(), heads.header.end(), "dataset") != heads.header.end();
  for (std::size_t i = 0; i < heads.rows.size(); ++i) {
    if (heads.at(i, "model") != model) continue;
    if (has_dataset && heads.at(i, "dataset") != dataset) continue;
    const HeadKey k{static_cast<int>(heads.number(i, "layer")), static_cast<int>(heads.number(i, "head"))};
    out[k][heads.number(i, "step")] = heads.number(i, value_col);
  }
  return out;
}

template <typename Key>
std::vector<svg::Series> to_series(const std::map<Key, std::map<double, double>>& by_key,
                                   const std::function<std::string(const Key&)>& label) {
  std::vector<svg::Series> out;
  std::size_t i = 0;
  for (const auto& [key, points] : by_key) {
    svg::Series s;
    s.label = label(key);
    s.color = svg::palette(i);
    s.dash = (i / 10) % 2 == 1 ? "5 3" : "";
    for (const auto& [step, v] : points) {
      s.xs.push_back(log_step(step));
      s.ys.push_back(v);
    }
    out.push_back(std::move(s));
    ++i;
  }
  return out;
}

bool has_dataset(const Table& heads, const std::string& dataset) {
  if (heads.empty()) return false;
  const auto col = heads.column("dataset");
  return std::any_of(heads.rows.begin(), heads.rows.end(), [&](const auto& r) { return r[col] == dataset; });
}

class Renderer {
 public:
  explicit Renderer(fs::path dir) : dir_(std::move(dir)), fig_dir_(dir_ / "figures") {
    const auto manifest = dir_ / "manifest.json";
    if (fs::exists(manifest)) {
      std::ifstream in(manifest);
      const auto doc = nlohmann::json::parse(in, nullptr, false);
      if (!doc.is_discarded() && doc.contains("config") && doc["config"].contains("analyses")) {
        std::set<std::string> a;
        for (const auto& v : doc["config"]["analyses"]) a.insert(v.get<std::string>());
        analyses_ = std::move(a);
      }
    }
  }

  ReportResult render() {
    static const std::vector<std::string> names{"layer_scores", "head_scores",      "tests",
                                                "trajectory",   "composite",        "modnoun",
                                                "ablation_summary"};
    for (const auto& n : names) {
      if (fs::exists(dir_ / (n + ".csv"))) tables_[n] = read_table(dir_ / (n + ".csv"));
    }
    if (tables_.empty()) {
      throw NotFoundError("no result tables in " + dir_.string() + "; run the phase1 analysis first");
    }
    fs::create_directories(fig_dir_);

    r2_by_layer();
    attention_trajectory();
    heatmap();
    stress_1back();
    stress_head_dataset("stress_positional", "positional", {"positional"});
    stress_head_dataset("stress_pos", "pos", {"pos_noun_target", "pos_verb_target"});
    modnoun();
    composite();
    ablation();

    nlohmann::json j;
    j["figures"] = nlohmann::json::array();
    for (const auto& f : result_.figures) j["figures"].push_back(f.filename().string());
    j["notices"] = result_.notices;
    write_file_atomic(fig_dir_ / "report.json", j.dump(2) + "\n");
    return result_;
  }

 private:
  const Table* table(const std::string& name) const {
    auto it = tables_.find(name);
    return it == tables_.end() ? nullptr : &it->second;
  }

  // Whether the run asked for `analysis`; unknown without a manifest.
  std::optional<bool> configured(const std::string& analysis) const {
    if (!analyses_) return std::nullopt;
    return analyses_->count(analysis) > 0;
  }

  void skip(const std::string& figure, const std::string& analysis, const std::string& why) {
    result_.notices.push_back(figure + " skipped: " + why + "; produced by the " + analysis + " analysis");
  }

  void save(const std::string& name, const std::string& source, svg::Document& doc) {
    doc.root_attr("data-figure", name);
    doc.root_attr("data-source", source);
    const auto file = fig_dir_ / (name + ".svg");
    write_file_atomic(file, doc.str());
    result_.figures.push_back(file);
  }

  static svg::Box panel_box(std::size_t i) {
    return {kMargin, kMargin + 24 + static_cast<double>(i) * (kPanelH + kMargin), kWidth - 2 * kMargin, kPanelH};
  }

  static svg::Document page(std::size_t panels, const std::string& title) {
    const std::size_t n = std::max<std::size_t>(1, panels);
    svg::Document doc(kWidth, kMargin + 24 + static_cast<double>(n) * (kPanelH + kMargin));
    doc.text(kMargin, kMargin + 6, title, 15, "start", {{"font-weight", "bold"}});
    return doc;
  }

  // One line panel per model, or a single "no data" panel.
  void per_model_lines(const std::string& name, const std::string& source, const std::string& title,
                       const std::string& ylabel, const std::vector<std::string>& models,
                       const std::function<std::vector<svg::Series>(const std::string&)>& build) {
    auto doc = page(models.size(), title);
    if (models.empty()) svg::no_data(doc, panel_box(0), title);
    for (std::size_t i = 0; i < models.size(); ++i) {
      svg::line_panel(doc, panel_box(i), models[i], kLogStep, ylabel, build(models[i]));
    }
    save(name, source, doc);
  }

  void r2_by_layer() {
    const Table* t = table("layer_scores");
    if (!t) return skip("r2_by_layer", "phase1", "layer_scores.csv is missing");
    per_model_lines("r2_by_layer", "layer_scores.csv", "Layer R2 vs log step", "R2", models_in_order(*t),
                    [&](const std::string& m) {
                      std::map<int, std::map<double, double>> by_layer;
                      for (std::size_t i = 0; i < t->rows.size(); ++i) {
                        if (t->at(i, "model") != m) continue;
                        by_layer[static_cast<int>(t->number(i, "layer"))][t->number(i, "step")] = t->number(i, "r2");
                      }
                      return to_series<int>(by_layer, [](const int& l) { return "Layer " + std::to_string(l); });
                    });
  }

  void attention_trajectory() {
    const Table* t = table("head_scores");
    if (!t) return skip("attention_trajectory", "phase1", "head_scores.csv is missing");
    if (!has_dataset(*t, "rawc") && !t->empty() && configured("phase1") != true) {
      return skip("attention_trajectory", "phase1", "head_scores.csv has no rawc rows");
    }
    std::vector<std::string> models;
    for (const auto& m : models_in_order(*t)) {
      if (!head_series(*t, m, "rawc", "mean_attention").empty()) models.push_back(m);
    }
    per_model_lines("attention_trajectory", "head_scores.csv", "Mean attention to the cue vs log step",
                    "attention", models, [&](const std::string& m) {
                      return to_series<HeadKey>(head_series(*t, m, "rawc", "mean_attention"), head_label);
                    });
  }

  void heatmap() {
    const Table* t = table("head_scores");
    if (!t) return skip("heatmap_final_step", "phase1", "head_scores.csv is missing");
    if (!has_dataset(*t, "rawc") && !t->empty() && configured("phase1") != true) {
      return skip("heatmap_final_step", "phase1", "head_scores.csv has no rawc rows");
    }
    struct Grid {
      std::string model;
      double step = 0;
      int layers = 0, heads = 0;
      std::map<HeadKey, double> z;
    };
    std::vector<Grid> grids;
    double domain = 0;
    for (const auto& m : models_in_order(*t)) {
      const auto series = head_series(*t, m, "rawc", "mean_attention");
      if (series.empty()) continue;
      Grid g;
      g.model = m;
      for (const auto& [k, pts] : series) {
        if (!pts.empty()) g.step = std::max(g.step, pts.rbegin()->first);
      }
      std::vector<HeadKey> keys;
      std::vector<double> values;
      for (const auto& [k, pts] : series) {
        g.layers = std::max(g.layers, k.first);
        g.heads = std::max(g.heads, k.second);
        auto it = pts.find(g.step);
        if (it == pts.end() || !std::isfinite(it->second)) continue;
        keys.push_back(k);
        values.push_back(it->second);
      }
      std::vector<double> z(values.size(), 0.0);
      try {
        z = stats::zscore(values);
      } catch (const Error& e) {
        result_.notices.push_back("heatmap_final_step: " + m + " attention not z-scored (" + e.what() +
                                  "); drawn as zeros");
      }
      for (std::size_t i = 0; i < keys.size(); ++i) {
        g.z[keys[i]] = z[i];
        domain = std::max(domain, std::abs(z[i]));
      }
      grids.push_back(std::move(g));
    }
    if (domain == 0) domain = 1;

    const double cell = 34, label_w = 70, top = 30;
    double height = kMargin + 24;
    for (const auto& g : grids) height += top + g.layers * cell + 40;
    svg::Document doc(kWidth, std::max(height, kMargin + 24 + kPanelH));
    doc.text(kMargin, kMargin + 6, "z-scored attention to the cue at the final step", 15, "start",
             {{"font-weight", "bold"}});
    doc.root_attr("data-scale", "z");
    doc.root_attr("data-domain-min", svg::fmt(-domain, 6));
    doc.root_attr("data-domain-max", svg::fmt(domain, 6));
    if (grids.empty()) svg::no_data(doc, panel_box(0), "z-scored attention");

    double y = kMargin + 24;
    for (const auto& g : grids) {
      doc.open_group({{"class", "heatmap"}, {"data-model", g.model}});
      doc.text(kMargin, y + 16, g.model + " step " + svg::fmt(g.step, 0), 13, "start", {{"font-weight", "bold"}});
      const double x0 = kMargin + label_w, y0 = y + top;
      for (int h = 1; h <= g.heads; ++h) {
        doc.text(x0 + (h - 0.5) * cell, y0 - 4, "H" + std::to_string(h), 10, "middle");
      }
      for (int l = 1; l <= g.layers; ++l) {
        const double ry = y0 + (l - 1) * cell;
        doc.text(x0 - 6, ry + cell / 2 + 3.5, "Layer " + std::to_string(l), 10, "end");
        for (int h = 1; h <= g.heads; ++h) {
          auto it = g.z.find({l, h});
          const double z = it == g.z.end() ? std::nan("") : it->second;
          doc.rect(x0 + (h - 1) * cell, ry, cell - 1, cell - 1, svg::diverging(z / domain),
                   {{"data-layer", std::to_string(l)}, {"data-head", std::to_string(h)}, {"data-z", svg::fmt(z, 6)}});
          if (std::isfinite(z)) doc.text(x0 + (h - 0.5) * cell, ry + cell / 2 + 3.5, svg::fmt(z, 1), 9, "middle");
        }
      }
      doc.close_group();
      y += top + g.layers * cell + 40;
    }

    // Color bar, symmetric about zero.
    const double bx = kWidth - 90, by = kMargin + 54, bh = 200;
    doc.open_group({{"class", "colorbar"}});
    const int steps = 40;
    for (int i = 0; i < steps; ++i) {
      const double t = 1.0 - 2.0 * (i + 0.5) / steps;
      doc.rect(bx, by + bh * i / steps, 16, bh / steps + 0.5, svg::diverging(t));
    }
    doc.text(bx + 22, by + 4, svg::fmt(domain, 2), 10);
    doc.text(bx + 22, by + bh / 2 + 4, "0", 10);
    doc.text(bx + 22, by + bh + 4, svg::fmt(-domain, 2), 10);
    doc.text(bx, by - 8, "z", 11);
    doc.close_group();
    save("heatmap_final_step", "head_scores.csv", doc);
  }

  void stress_1back() {
    const Table* t = table("tests");
    if (!t) return skip("stress_1back", "stress_1back", "tests.csv is missing");
    per_model_lines("stress_1back", "tests.csv", "Paired t (cue minus previous token) vs log step", "t",
                    models_in_order(*t), [&](const std::string& m) {
                      return to_series<HeadKey>(head_series(*t, m, "", "t"), head_label);
                    });
  }

  void stress_head_dataset(const std::string& analysis, const std::string& name,
                           const std::vector<std::string>& datasets) {
    const std::string figure = "stress_" + name;
    const Table* t = table("head_scores");
    if (!t) return skip(figure, analysis, "head_scores.csv is missing");
    const bool present =
        std::any_of(datasets.begin(), datasets.end(), [&](const std::string& d) { return has_dataset(*t, d); });
    if (!present && configured(analysis) != true) return skip(figure, analysis, "no " + name + " rows in head_scores.csv");

    struct Panel {
      std::string title;
      std::vector<svg::Series> series;
    };
    std::vector<Panel> panels;
    for (const auto& m : models_in_order(*t)) {
      for (const auto& d : datasets) {
        auto series = head_series(*t, m, d, "mean_attention");
        if (series.empty()) continue;
        std::string title = m;
        if (d == "pos_noun_target") title += ": noun targets, verb cue";
        if (d == "pos_verb_target") title += ": verb targets, noun cue";
        panels.push_back({title, to_series<HeadKey>(series, head_label)});
      }
    }
    const std::string title = name == "positional" ? "Attention to the cue in the positional control vs log step"
                                                   : "Attention to the cue by part of speech vs log step";
    auto doc = page(panels.size(), title);
    if (panels.empty()) svg::no_data(doc, panel_box(0), title);
    for (std::size_t i = 0; i < panels.size(); ++i) {
      svg::line_panel(doc, panel_box(i), panels[i].title, kLogStep, "attention", panels[i].series);
    }
    save(figure, "head_scores.csv", doc);
  }

  void modnoun() {
    const Table* t = table("modnoun");
    if (!t) return skip("modnoun", "modnoun", "modnoun.csv is missing");
    std::map<std::string, std::map<double, double>> by_model;
    for (std::size_t i = 0; i < t->rows.size(); ++i) {
      by_model[t->at(i, "model")][t->number(i, "step")] = t->number(i, "mean_log_ratio");
    }
    const std::string title = "Mean log-probability ratio, original vs reversed order";
    auto doc = page(1, title);
    svg::line_panel(doc, panel_box(0), title, kLogStep, "log ratio",
                    to_series<std::string>(by_model, [](const std::string& s) { return s; }));
    save("modnoun", "modnoun.csv", doc);
  }

  void composite() {
    const Table* t = table("composite");
    if (!t) return skip("composite", "composite", "composite.csv is missing");
    const auto models = models_in_order(*t);
    const std::string title = "Composite index by head";
    std::vector<std::vector<svg::Bar>> per_model;
    std::size_t max_bars = 1;
    for (const auto& m : models) {
      std::vector<svg::Bar> bars;
      for (std::size_t i = 0; i < t->rows.size(); ++i) {
        if (t->at(i, "model") != m) continue;
        bars.push_back({head_label({static_cast<int>(t->number(i, "layer")), static_cast<int>(t->number(i, "head"))}),
                        t->number(i, "composite")});
      }
      max_bars = std::max(max_bars, bars.size());
      per_model.push_back(std::move(bars));
    }
    const double panel_h = std::max(kPanelH, 70.0 + 14.0 * static_cast<double>(max_bars));
    const std::size_t n = std::max<std::size_t>(1, models.size());
    svg::Document doc(kWidth, kMargin + 24 + static_cast<double>(n) * (panel_h + kMargin));
    doc.text(kMargin, kMargin + 6, title, 15, "start", {{"font-weight", "bold"}});
    auto box = [&](std::size_t i) {
      return svg::Box{kMargin, kMargin + 24 + static_cast<double>(i) * (panel_h + kMargin), kWidth - 2 * kMargin,
                      panel_h};
    };
    if (models.empty()) svg::no_data(doc, box(0), title);
    for (std::size_t i = 0; i < models.size(); ++i) {
      svg::bar_panel(doc, box(i), models[i], "composite (mean of z-scores)", per_model[i]);
    }
    save("composite", "composite.csv", doc);
  }

  void ablation() {
    const Table* t = table("ablation_summary");
    if (!t) return skip("ablation_delta_r2", "ablation", "ablation_summary.csv is missing");
    struct Panel {
      std::string title;
      std::map<std::string, std::map<double, double>> series;
      std::map<std::string, bool> baseline;
    };
    std::vector<std::pair<std::string, Panel>> panels;
    for (std::size_t i = 0; i < t->rows.size(); ++i) {
      const std::string key = t->at(i, "model") + "/" + t->at(i, "kind");
      auto it = std::find_if(panels.begin(), panels.end(), [&](const auto& p) { return p.first == key; });
      if (it == panels.end()) {
        Panel p;
        p.title = t->at(i, "model") + ", " + t->at(i, "kind") + " ablation";
        const auto& tracked = t->at(i, "tracked_layer");
        if (!tracked.empty()) p.title += ", Layer " + tracked;
        panels.emplace_back(key, std::move(p));
        it = std::prev(panels.end());
      }
      const std::string label = t->at(i, "condition") + " " + t->at(i, "heads");
      it->second.series[label][t->number(i, "step")] = t->number(i, "tracked_delta_r2");
      it->second.baseline[label] = t->at(i, "condition") == "baseline";
    }
    const std::string title = "R2 drop under ablation (intact minus ablated) vs log step";
    auto doc = page(panels.size(), title);
    if (panels.empty()) svg::no_data(doc, panel_box(0), title);
    for (std::size_t i = 0; i < panels.size(); ++i) {
      auto& p = panels[i].second;
      auto series = to_series<std::string>(p.series, [](const std::string& s) { return s; });
      for (auto& s : series) s.dash = p.baseline[s.label] ? "5 3" : "";
      svg::line_panel(doc, panel_box(i), p.title, kLogStep, "delta R2", series);
    }
    save("ablation_delta_r2", "ablation_summary.csv", doc);
  }

  fs::path dir_, fig_dir_;
  std::optional<std::set<std::string>> analyses_;
  std::map<std::string, Table> tables_;
  ReportResult result_;
};

}  // namespace

ReportResult render_report(const fs::path& output_dir) {
  if (!fs::is_directory(output_dir)) throw NotFoundError("output directory " + output_dir.string() + " does not exist");
  return Renderer(output_dir).render();
}

}  // namespace headprobe::pipeline
