#include <catch_amalgamated.hpp>

#include <fstream>

#include "headprobe/error.hpp"
#include "headprobe/oracle/synthetic_study.hpp"
#include "headprobe/pipeline/config.hpp"
#include "headprobe/pipeline/runner.hpp"
#include "headprobe/pipeline/table.hpp"
#include "helpers.hpp"

using namespace headprobe;
using namespace headprobe::pipeline;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") {
      out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
  }
  return out;
}

}  // namespace

TEST_CASE("a synthetic study runs end to end") {
  auto root = testing::scratch_dir("pipeline-e2e");
  oracle::SyntheticOptions opt;
  opt.steps = {0, 1, 2, 4};
  opt.n_pairs = 8;
  auto study = oracle::make_synthetic_study(root, opt);
  auto config = load_run_config(study.config_file);
  auto result = run(config);
  for (const auto& c : result.manifest.cells) {
    INFO(c.model << " " << c.step << " " << c.analysis << ": " << c.error);
    CHECK(c.status == "ok");
  }
  for (const auto& n : result.manifest.notices) UNSCOPED_INFO(n);
  CHECK(result.exit_code == 0);
  const auto out = config.output_dir;

  auto layers = read_table(out / "layer_scores.csv");
  CHECK(layers.rows.size() == 2 * 4 * 2);  // models x steps x layers
  for (std::size_t i = 0; i < layers.rows.size(); ++i) {
    CHECK(layers.number(i, "r2") >= 0.0);
    CHECK(layers.number(i, "r2") <= 1.0);
  }
  auto heads = read_table(out / "head_scores.csv");
  // rawc, oneback, positional, pos_noun_target, pos_verb_target per head per step per model
  CHECK(heads.rows.size() == 2 * 4 * 5 * 4);
  for (std::size_t i = 0; i < heads.rows.size(); ++i) {
    const double v = heads.number(i, "mean_attention");
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  auto tests = read_table(out / "tests.csv");
  CHECK(tests.rows.size() == 2 * 4 * 4);
  for (std::size_t i = 0; i < tests.rows.size(); ++i) {
    if (tests.at(i, "p_raw") == "nan") continue;
    CHECK(tests.number(i, "p_fdr") >= tests.number(i, "p_raw"));
  }
  CHECK(read_table(out / "trajectory.csv").rows.size() == 2 * 4);
  auto composite = read_table(out / "composite.csv");
  CHECK(composite.rows.size() == 2 * 4);
  CHECK(read_table(out / "modnoun.csv").rows.size() == 2 * 4);
  CHECK(read_table(out / "coupling.csv").rows.size() == 2);
  // zero + step1_copy, 2 target and 2 baseline groups, 2 layers
  CHECK(read_table(out / "ablation_outcomes.csv").rows.size() == 2 * 4 * 2 * 4 * 2);
  auto summary = read_table(out / "ablation_summary.csv");
  for (std::size_t i = 0; i < summary.rows.size(); ++i) {
    if (summary.at(i, "kind") == "step1_copy" && summary.at(i, "step") == "1") {
      CHECK(summary.number(i, "mean_delta_r2") == 0.0);
    }
  }
  CHECK_FALSE(read_table(out / "ablation_effects.csv").rows.empty());

  SECTION("a re-run recomputes nothing and reproduces the digests") {
    auto again = run(config);
    CHECK(again.cells_run == 0);
    CHECK(again.cells_reused == result.manifest.cells.size());
    CHECK(again.manifest.tables == result.manifest.tables);
    for (std::size_t i = 0; i < again.manifest.cells.size(); ++i) {
      CHECK(again.manifest.cells[i].outputs == result.manifest.cells[i].outputs);
    }
  }
  SECTION("--no-resume recomputes everything with identical bytes") {
    const auto before = csv_files(out);
    RunOptions o;
    o.resume = false;
    o.workers = 3;
    auto again = run(config, o);
    CHECK(again.cells_reused == 0);
    CHECK(csv_files(out) == before);
  }
  SECTION("--only reruns one cell") {
    fs::remove(out / "cells/synth-a/step2/phase1/layer_scores.csv");
    RunOptions o;
    o.only = {parse_only("synth-a:2")};
    auto again = run(config, o);
    CHECK(again.cells_run == 1);
    CHECK(again.manifest.tables == result.manifest.tables);
  }
  SECTION("--only with --no-resume keeps the other cells") {
    const auto before = csv_files(out);
    RunOptions o;
    o.resume = false;
    o.only = {parse_only("synth-b:4")};
    auto again = run(config, o);
    CHECK(again.cells_reused == 0);
    CHECK(again.manifest.cells.size() == result.manifest.cells.size());
    CHECK(again.manifest.tables == result.manifest.tables);
    CHECK(csv_files(out) == before);
  }
  fs::remove_all(root);
}

TEST_CASE("a failing cell is recorded and the others still run") {
  auto root = testing::scratch_dir("pipeline-fail");
  oracle::SyntheticOptions opt;
  opt.steps = {0, 1, 2, 4};
  opt.n_pairs = 6;
  opt.n_models = 1;
  auto study = oracle::make_synthetic_study(root, opt);
  std::ofstream(root / "checkpoints/synth-a/step2/model.safetensors", std::ios::trunc) << "broken";
  auto config = load_run_config(study.config_file);
  auto result = run(config);
  CHECK(result.exit_code == 1);
  std::size_t failed = 0;
  for (const auto& c : result.manifest.cells) {
    if (c.step == 2) {
      CHECK(c.status == "failed");
      CHECK(c.error.find("step2") != std::string::npos);
      ++failed;
    } else if (c.analysis != "ablation" || c.step != 1) {
      CHECK(c.status == "ok");
    }
  }
  CHECK(failed > 0);
  CHECK(read_table(config.output_dir / "layer_scores.csv").rows.size() == 3 * 2);
  fs::remove_all(root);
}

TEST_CASE("run config validation") {
  auto root = testing::scratch_dir("pipeline-config");
  oracle::SyntheticOptions opt;
  opt.steps = {0, 1};
  opt.n_models = 1;
  auto study = oracle::make_synthetic_study(root, opt);
  const std::string base =
      "schedule = [0, 1]\n[[models]]\nlabel = \"m\"\npath = \"checkpoints/synth-a\"\n"
      "[datasets]\nrawc = \"data/rawc.csv\"\nrawc_schema = \"canonical\"\npos = \"data/pos.csv\"\n";

  auto cfg = parse_run_config("analyses = [\"phase1\"]\n" + base, root);
  CHECK(cfg.models.at(0).steps == std::vector<std::int64_t>{0, 1});
  CHECK(cfg.output_dir == root / "results");

  CHECK_THROWS_AS(parse_run_config("analyses = [\"composite\", \"phase1\"]\n" + base, root), ConfigError);
  CHECK_THROWS_AS(parse_run_config("analyses = []\n" + base, root), ConfigError);
  CHECK_THROWS_AS(parse_run_config("analyses = [\"phase2\"]\n" + base, root), ConfigError);
  CHECK_THROWS_AS(parse_run_config("analyses = [\"phase1\"]\nfoo = 1\n" + base, root), ConfigError);
  CHECK_THROWS_AS(parse_run_config("analyses = [\"phase1\"\n" + base, root), ConfigError);
  CHECK_THROWS_AS(parse_run_config("analyses = [\"modnoun\"]\nschedule = [0]\n[[models]]\nlabel = \"m\"\n"
                                   "path = \"checkpoints/synth-a\"\n[datasets]\nmodnoun = \"missing.csv\"\n",
                                   root),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config("analyses = [\"ablation\"]\n" + base, root), ConfigError);  // no head sets
  CHECK_THROWS_AS(parse_run_config("analyses = [\"phase1\"]\nschedule = [2, 1]\n[[models]]\npath = \"checkpoints/synth-a\"\n"
                                   "[datasets]\nrawc = \"data/rawc.csv\"\n",
                                   root),
                  ConfigError);
  auto full = parse_run_config(
      "analyses = [\"composite\", \"phase1\", \"stress_1back\", \"stress_positional\", \"stress_pos\"]\n" + base, root);
  CHECK(full.analyses.size() == 5);
  CHECK(full.digest() == parse_run_config("workers = 4\nanalyses = [\"phase1\", \"stress_1back\", "
                                          "\"stress_positional\", \"stress_pos\", \"composite\"]\n" + base,
                                          root)
                             .digest());
  CHECK(infer_preset("EleutherAI/pythia-14m") == "pythia-14m");
  CHECK(infer_preset("EleutherAI/pythia-410m-deduped") == "pythia-410m");
  CHECK(parse_only("pythia-14m:143000") == std::pair<std::string, std::int64_t>{"pythia-14m", 143000});
  CHECK_THROWS_AS(parse_only("nostep"), ArgumentError);
  fs::remove_all(root);
}
