#include "headprobe/pipeline/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "aggregate.hpp"
#include "headprobe/error.hpp"
#include "headprobe/hub/hub.hpp"
#include "internal.hpp"

namespace headprobe::pipeline {

namespace fs = std::filesystem;
using detail::CellResult;

nlohmann::json RunManifest::to_json() const {
  nlohmann::json cells_json = nlohmann::json::array();
  for (const auto& c : cells) {
    cells_json.push_back({{"model", c.model},
                          {"step", c.step},
                          {"analysis", c.analysis},
                          {"status", c.status},
                          {"config_digest", c.config_digest},
                          {"inputs", c.inputs},
                          {"outputs", c.outputs},
                          {"diagnostics", c.diagnostics},
                          {"error", c.error},
                          {"seconds", c.seconds}});
  }
  return {{"tool_version", tool_version}, {"config", config},   {"config_digest", config_digest},
          {"cells", cells_json},          {"tables", tables},   {"notices", notices},
          {"seconds", seconds}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.tool_version = j.value("tool_version", "");
  m.config = j.value("config", nlohmann::json::object());
  m.config_digest = j.value("config_digest", "");
  for (const auto& c : j.value("cells", nlohmann::json::array())) {
    CellRecord r;
    r.model = c.at("model");
    r.step = c.at("step");
    r.analysis = c.at("analysis");
    r.status = c.at("status");
    r.config_digest = c.value("config_digest", "");
    r.inputs = c.value("inputs", std::map<std::string, std::string>{});
    r.outputs = c.value("outputs", std::map<std::string, std::string>{});
    r.diagnostics = c.value("diagnostics", std::vector<std::string>{});
    r.error = c.value("error", "");
    r.seconds = c.value("seconds", 0.0);
    m.cells.push_back(std::move(r));
  }
  m.tables = j.value("tables", std::map<std::string, std::string>{});
  m.notices = j.value("notices", std::vector<std::string>{});
  m.seconds = j.value("seconds", 0.0);
  return m;
}

const CellRecord* RunManifest::find(const std::string& model, std::int64_t step, const std::string& analysis) const {
  for (const auto& c : cells) {
    if (c.model == model && c.step == step && c.analysis == analysis) return &c;
  }
  return nullptr;
}

std::optional<RunManifest> read_manifest(const fs::path& output_dir) {
  std::ifstream in(output_dir / "manifest.json");
  if (!in) return std::nullopt;
  try {
    return RunManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    spdlog::warn("ignoring unreadable manifest: {}", e.what());
    return std::nullopt;
  }
}

std::pair<std::string, std::int64_t> parse_only(const std::string& text) {
  static const std::regex re(R"(^([A-Za-z0-9._-]+):(?:step)?(\d+)$)");
  std::smatch m;
  if (!std::regex_match(text, m, re)) throw ArgumentError("--only expects model:step, got '" + text + "'");
  return {m[1], std::stoll(m[2])};
}

namespace {

std::vector<std::int64_t> steps_in(const std::vector<std::string>& names) {
  static const std::regex re(R"(^step(\d+)$)");
  std::vector<std::int64_t> out;
  std::smatch m;
  for (const auto& n : names) {
    if (std::regex_match(n, m, re)) out.push_back(std::stoll(m[1]));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

void resolve_schedules(RunConfig& config, std::vector<std::string>* notices) {
  for (auto& m : config.models) {
    if (m.steps_from_config) continue;
    if (config.schedule_name == "available") {
      std::vector<std::string> names;
      if (m.path) {
        for (const auto& e : fs::directory_iterator(*m.path)) {
          if (e.is_directory()) names.push_back(e.path().filename().string());
        }
      } else {
        hub::HubClient client(config.hub);
        names = client.list_revisions(*m.repo);
      }
      m.steps = steps_in(names);
      if (m.steps.empty()) throw ConfigError("model '" + m.label + "' has no step<N> checkpoints");
    } else if (config.schedule_name == "all14m" && m.repo) {
      try {
        hub::HubClient client(config.hub);
        auto steps = steps_in(client.list_revisions(*m.repo));
        if (!steps.empty()) {
          if (notices && steps != m.steps) {
            notices->push_back(m.label + ": hub lists " + std::to_string(steps.size()) + " step revisions; using them");
          }
          m.steps = std::move(steps);
        }
      } catch (const Error& e) {
        if (notices) notices->push_back(m.label + ": could not enumerate hub revisions (" + e.what() +
                                        "), using the built-in all14m list");
      }
    }
  }
}

fs::path checkpoint_dir(const RunConfig& config, const ModelEntry& model, std::int64_t step) {
  if (model.path) {
    const fs::path dir = *model.path / hub::revision_name(step);
    if (!fs::is_directory(dir)) throw LoadError("checkpoint directory " + dir.string() + " does not exist");
    return dir;
  }
  hub::HubClient client(config.hub);
  return client.fetch_checkpoint(*model.repo, hub::revision_name(step)).local_dir;
}

namespace {

const std::vector<Analysis> kStage1{Analysis::kPhase1, Analysis::kStress1Back, Analysis::kStressPositional,
                                    Analysis::kStressPos, Analysis::kModnoun};

struct Task {
  std::size_t model_index = 0;
  std::int64_t step = 0;
  std::vector<Analysis> analyses;
};

std::string part_path(const std::string& model, std::int64_t step, Analysis a, const std::string& table) {
  return "cells/" + model + "/" + hub::revision_name(step) + "/" + to_string(a) + "/" + table + ".csv";
}

std::string list_digest(const std::vector<std::string>& items) {
  std::string joined;
  for (const auto& s : items) joined += s + "\n";
  return sha256_bytes(joined);
}

class Runner {
 public:
  Runner(const RunConfig& config, const RunOptions& options) : config_(config), options_(options) {}

  RunResult execute() {
    const auto started = std::chrono::steady_clock::now();
    fs::create_directories(config_.output_dir);
    // Read even without resume: cells outside --only keep their earlier results.
    previous_ = read_manifest(config_.output_dir);
    for (const auto& [label, step] : options_.only) {
      bool known = false;
      for (const auto& m : config_.models) {
        known |= m.label == label && std::find(m.steps.begin(), m.steps.end(), step) != m.steps.end();
      }
      if (!known) throw ArgumentError("--only " + label + ":" + std::to_string(step) + " is not a cell of this config");
    }

    manifest_.tool_version = HEADPROBE_VERSION;
    manifest_.config = config_.snapshot();
    manifest_.config_digest = config_.digest();
    manifest_.notices = notices_;
    sets_ = detail::load_stimulus_sets(config_);
    for (auto& n : sets_.notices) manifest_.notices.push_back(n);

    run_tasks(stage1_tasks());
    detail::Aggregator agg(config_, config_.output_dir, manifest_);
    agg.stage1();
    if (config_.wants(Analysis::kAblation)) {
      plans_.clear();
      for (std::size_t i = 0; i < config_.models.size(); ++i) plans_.push_back(plan_for(i, agg));
      run_tasks(stage2_tasks());
      agg.stage2();
    }
    manifest_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_manifest();

    RunResult result;
    result.manifest = manifest_;
    result.cells_run = cells_run_;
    result.cells_reused = cells_reused_;
    for (const auto& c : manifest_.cells) result.cells_failed += c.status != "ok";
    result.exit_code = result.cells_failed > 0 || agg.failed() ? 1 : 0;
    return result;
  }

  std::vector<std::string> notices_;

 private:
  bool selected(const ModelEntry& m, std::int64_t step) const {
    if (options_.only.empty()) return true;
    return std::any_of(options_.only.begin(), options_.only.end(),
                       [&](const auto& o) { return o.first == m.label && o.second == step; });
  }

  std::map<std::string, std::string> dataset_inputs(Analysis a) const {
    std::vector<std::string> names;
    switch (a) {
      case Analysis::kPhase1:
      case Analysis::kStress1Back:
      case Analysis::kAblation:
        names = {"rawc"};
        break;
      case Analysis::kStressPositional:
        names = {"positional"};
        break;
      case Analysis::kStressPos:
        names = {"pos"};
        break;
      case Analysis::kModnoun:
        names = {"modnoun"};
        break;
      case Analysis::kComposite:
        break;
    }
    std::map<std::string, std::string> out;
    for (const auto& n : names) {
      auto it = sets_.digests.find(n);
      if (it != sets_.digests.end()) out["dataset:" + n] = it->second;
    }
    return out;
  }

  // Whether a previous run already produced this cell with the same inputs.
  const CellRecord* reusable(const ModelEntry& m, std::int64_t step, Analysis a,
                             const std::map<std::string, std::string>& inputs) const {
    if (!previous_ || !options_.resume) return nullptr;
    const CellRecord* prev = previous_->find(m.label, step, to_string(a));
    if (!prev || prev->status != "ok" || prev->config_digest != manifest_.config_digest) return nullptr;
    for (const auto& [k, v] : inputs) {
      auto it = prev->inputs.find(k);
      if (it == prev->inputs.end() || it->second != v) return nullptr;
    }
    for (const auto& [rel, digest] : prev->outputs) {
      const fs::path p = config_.output_dir / rel;
      if (!fs::exists(p) || "sha256:" + hub::sha256_file(p) != digest) return nullptr;
    }
    return prev;
  }

  std::vector<Task> stage1_tasks() {
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < config_.models.size(); ++i) {
      const auto& m = config_.models[i];
      for (auto step : m.steps) {
        Task t{i, step, {}};
        for (auto a : kStage1) {
          if (!config_.wants(a)) continue;
          if (!selected(m, step)) {
            keep_previous(m, step, a);
            continue;
          }
          if (const auto* prev = reusable(m, step, a, dataset_inputs(a))) {
            record(*prev);
            ++cells_reused_;
          } else {
            t.analyses.push_back(a);
          }
        }
        if (!t.analyses.empty()) tasks.push_back(std::move(t));
      }
    }
    return tasks;
  }

  std::vector<Task> stage2_tasks() {
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < config_.models.size(); ++i) {
      const auto& m = config_.models[i];
      for (auto step : m.steps) {
        if (!selected(m, step)) {
          keep_previous(m, step, Analysis::kAblation);
          continue;
        }
        if (const auto* prev = reusable(m, step, Analysis::kAblation, ablation_inputs(i))) {
          record(*prev);
          ++cells_reused_;
        } else {
          tasks.push_back({i, step, {Analysis::kAblation}});
        }
      }
    }
    return tasks;
  }

  std::map<std::string, std::string> ablation_inputs(std::size_t model_index) const {
    auto inputs = dataset_inputs(Analysis::kAblation);
    inputs["plan"] = plans_[model_index].digest;
    return inputs;
  }

  void keep_previous(const ModelEntry& m, std::int64_t step, Analysis a) {
    const auto* prev = previous_ ? previous_->find(m.label, step, to_string(a)) : nullptr;
    if (prev && prev->config_digest == manifest_.config_digest) {
      record(*prev);
    } else {
      manifest_.notices.push_back(m.label + " step " + std::to_string(step) + " " + to_string(a) +
                                  ": outside --only and no earlier result for this config");
    }
  }

  void record(CellRecord r) {
    std::lock_guard lock(mu_);
    auto it = std::find_if(manifest_.cells.begin(), manifest_.cells.end(), [&](const CellRecord& c) {
      return c.model == r.model && c.step == r.step && c.analysis == r.analysis;
    });
    if (it != manifest_.cells.end()) {
      *it = std::move(r);
    } else {
      manifest_.cells.push_back(std::move(r));
    }
  }

  struct Plan {
    std::optional<detail::AblationPlan> plan;
    std::string error;
    std::string digest;
    std::optional<std::int64_t> source_step;
  };

  Plan plan_for(std::size_t model_index, const detail::Aggregator& agg) {
    const auto& m = config_.models[model_index];
    Plan out;
    std::vector<ablation::HeadGroup> targets, baselines;
    if (config_.ablation.targets) {
      for (const auto& g : *config_.ablation.targets) targets.push_back({g, ablation::Condition::kTarget});
      for (const auto& g : *config_.ablation.baselines) baselines.push_back({g, ablation::Condition::kBaseline});
    } else {
      try {
        const auto* composite = agg.composite(m.label);
        if (m.preset == "pythia-410m" && !composite) {
          throw ConfigError("pythia-410m default baselines need the composite index; add composite to analyses");
        }
        auto sets = ablation::default_head_sets(m.preset, composite ? *composite : std::vector<probes::CompositeIndexRow>{});
        targets = sets.targets;
        baselines = sets.baselines;
      } catch (const Error& e) {
        out.error = e.what();
        out.digest = sha256_bytes(out.error);
        return out;
      }
    }
    detail::AblationPlan plan;
    plan.tracked_layer = agg.tracked_layer(m.label);
    std::vector<std::string> labels;
    for (auto kind : config_.ablation.kinds) {
      std::optional<std::int64_t> source;
      if (kind == ablation::AblationKind::kCopyFromStep) {
        source = config_.ablation.source_step;
        if (std::find(m.steps.begin(), m.steps.end(), *source) == m.steps.end() && m.path &&
            !fs::is_directory(*m.path / hub::revision_name(*source))) {
          manifest_.notices.push_back(m.label + ": no checkpoint at step " + std::to_string(*source) +
                                      ", copying from the earliest step " + std::to_string(m.steps.front()));
          source = m.steps.front();
        }
        out.source_step = source;
      }
      for (const auto* groups : {&targets, &baselines}) {
        for (const auto& g : *groups) {
          ablation::AblationSpec item;
          item.kind = kind;
          item.source_step = source;
          item.targets = g.heads;
          item.label = g.label;
          plan.specs.push_back(item);
          labels.push_back(ablation::to_string(kind) + " " + ablation::to_string(g.label) + " " + item.heads_label() +
                           (source ? " from " + std::to_string(*source) : ""));
        }
      }
    }
    labels.push_back("tracked " + (plan.tracked_layer ? std::to_string(*plan.tracked_layer) : std::string("none")));
    out.digest = list_digest(labels);
    out.plan = std::move(plan);
    return out;
  }

  void run_tasks(const std::vector<Task>& tasks) {
    if (tasks.empty()) return;
    const int workers = std::max(1, options_.workers.value_or(config_.workers));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) run_task(tasks[i]);
    };
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(workers), tasks.size());
    if (n <= 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < n; ++w) pool.emplace_back(work);
    }
  }

  void run_task(const Task& task) {
    const auto& m = config_.models[task.model_index];
    const auto started = std::chrono::steady_clock::now();
    std::map<Analysis, CellResult> results;
    std::string error;
    std::map<std::string, std::string> checkpoint_digests;
    spdlog::info("{} step {}: {}", m.label, task.step, names(task.analyses));
    try {
      if (task.analyses == std::vector<Analysis>{Analysis::kAblation}) {
        results[Analysis::kAblation] = run_ablation(task, checkpoint_digests);
      } else {
        auto loaded = detail::load_cell_checkpoint(config_, m, task.step);
        checkpoint_digests = loaded.digests;
        results = detail::compute_stage1(config_, m, task.step, loaded.checkpoint, sets_, task.analyses);
      }
    } catch (const std::exception& e) {
      error = e.what();
      spdlog::error("{} step {} failed: {}", m.label, task.step, error);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    for (auto a : task.analyses) {
      CellRecord r;
      r.model = m.label;
      r.step = task.step;
      r.analysis = to_string(a);
      r.config_digest = manifest_.config_digest;
      r.inputs = a == Analysis::kAblation ? ablation_inputs(task.model_index) : dataset_inputs(a);
      for (const auto& [f, d] : checkpoint_digests) r.inputs["checkpoint:" + f] = d;
      r.seconds = seconds / static_cast<double>(task.analyses.size());
      auto it = results.find(a);
      if (!error.empty() || it == results.end()) {
        r.status = "failed";
        r.error = error.empty() ? "no result" : error;
      } else {
        try {
          for (const auto& [table, rows] : it->second.tables) {
            const std::string rel = part_path(m.label, task.step, a, table);
            r.outputs[rel] = write_table(config_.output_dir / rel, rows);
          }
          r.diagnostics = it->second.diagnostics;
          r.status = "ok";
        } catch (const std::exception& e) {
          r.status = "failed";
          r.error = e.what();
        }
      }
      record(std::move(r));
    }
    {
      std::lock_guard lock(mu_);
      ++cells_run_;
      write_manifest_locked();
    }
  }

  CellResult run_ablation(const Task& task, std::map<std::string, std::string>& digests) {
    const auto& m = config_.models[task.model_index];
    const auto& plan = plans_[task.model_index];
    if (!plan.plan) throw ConfigError(plan.error);
    auto loaded = detail::load_cell_checkpoint(config_, m, task.step);
    digests = loaded.digests;
    std::optional<detail::LoadedCheckpoint> source;
    if (plan.source_step) {
      if (*plan.source_step == task.step) {
        source.emplace(detail::LoadedCheckpoint{loaded.checkpoint, {}});
      } else {
        source = detail::load_cell_checkpoint(config_, m, *plan.source_step);
      }
      for (const auto& [f, d] : source->digests) digests["source:" + f] = d;
    }
    std::vector<probes::LayerScore> intact;
    {
      std::lock_guard lock(mu_);
      const CellRecord* phase1 = nullptr;
      for (const auto& c : manifest_.cells) {
        if (c.model == m.label && c.step == task.step && c.analysis == "phase1" && c.status == "ok") phase1 = &c;
      }
      if (phase1) {
        const auto rel = part_path(m.label, task.step, Analysis::kPhase1, "layer_scores");
        if (phase1->outputs.count(rel)) intact = detail::layer_scores_from_table(read_table(config_.output_dir / rel));
      }
    }
    return detail::compute_ablation(config_, m, task.step, loaded.checkpoint, sets_, *plan.plan,
                                    source ? &source->checkpoint.weights : nullptr, std::move(intact));
  }

  static std::string names(const std::vector<Analysis>& as) {
    std::string s;
    for (auto a : as) s += (s.empty() ? "" : ", ") + to_string(a);
    return s;
  }

  void sort_cells() {
    auto order = [&](const CellRecord& c) {
      std::size_t model = config_.models.size();
      for (std::size_t i = 0; i < config_.models.size(); ++i) {
        if (config_.models[i].label == c.model) model = i;
      }
      auto a = parse_analysis(c.analysis).value_or(Analysis::kComposite);
      return std::make_tuple(model, c.step, static_cast<int>(a));
    };
    std::sort(manifest_.cells.begin(), manifest_.cells.end(),
              [&](const CellRecord& a, const CellRecord& b) { return order(a) < order(b); });
  }

  void write_manifest_locked() {
    sort_cells();
    write_file_atomic(config_.output_dir / "manifest.json", manifest_.to_json().dump(2) + "\n");
  }

  void write_manifest() {
    std::lock_guard lock(mu_);
    write_manifest_locked();
  }

  const RunConfig& config_;
  const RunOptions& options_;
  std::optional<RunManifest> previous_;
  RunManifest manifest_;
  detail::StimulusSets sets_;
  std::vector<Plan> plans_;
  std::mutex mu_;
  std::size_t cells_run_ = 0;
  std::size_t cells_reused_ = 0;
};

}  // namespace

RunResult run(const RunConfig& config, const RunOptions& options) {
  RunConfig resolved = config;
  std::vector<std::string> notices;
  resolve_schedules(resolved, &notices);
  validate(resolved);
  Runner runner(resolved, options);
  runner.notices_ = std::move(notices);
  return runner.execute();
}

}  // namespace headprobe::pipeline
