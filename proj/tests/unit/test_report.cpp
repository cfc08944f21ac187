#include <catch_amalgamated.hpp>

#include <fstream>
#include <regex>

#include "headprobe/error.hpp"
#include "headprobe/oracle/synthetic_study.hpp"
#include "headprobe/pipeline/config.hpp"
#include "headprobe/pipeline/report.hpp"
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

std::string attr(const std::string& svg, const std::string& name) {
  std::smatch m;
  const std::regex re(name + "=\"([^\"]*)\"");
  if (!std::regex_search(svg, m, re)) return "";
  return m[1];
}

std::vector<double> all_attr(const std::string& svg, const std::string& name) {
  std::vector<double> out;
  const std::regex re(name + "=\"([^\"]*)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
    out.push_back(std::stod((*it)[1]));
  }
  return out;
}

// Two layers x two heads at steps 0 and 10, hand-picked attention values.
void write_phase1_tables(const fs::path& dir, bool empty = false) {
  Table layers{{"model", "step", "layer", "r2", "n", "degenerate"}, {}};
  Table heads{{"model", "step", "layer", "head", "dataset", "n", "mean_attention", "stderr", "masked"}, {}};
  if (!empty) {
    layers.rows = {{"m", "0", "1", "0.01", "6", "0"},
                   {"m", "0", "2", "0.02", "6", "0"},
                   {"m", "10", "1", "0.05", "6", "0"},
                   {"m", "10", "2", "0.2", "6", "0"}};
    const std::vector<std::pair<std::string, std::vector<double>>> att{{"0", {0.1, 0.1, 0.1, 0.1}},
                                                                      {"10", {0.1, 0.2, 0.3, 0.8}}};
    for (const auto& [step, v] : att) {
      int k = 0;
      for (int l = 1; l <= 2; ++l) {
        for (int h = 1; h <= 2; ++h) {
          heads.rows.push_back({"m", step, std::to_string(l), std::to_string(h), "rawc", "6", num(v[k++]), "0.01", "0"});
        }
      }
    }
  }
  write_table(dir / "layer_scores.csv", layers);
  write_table(dir / "head_scores.csv", heads);
}

bool has_figure(const ReportResult& r, const std::string& name) {
  return std::any_of(r.figures.begin(), r.figures.end(), [&](const fs::path& p) { return p.stem() == name; });
}

bool has_notice(const ReportResult& r, const std::string& fragment) {
  return std::any_of(r.notices.begin(), r.notices.end(),
                     [&](const std::string& n) { return n.find(fragment) != std::string::npos; });
}

}  // namespace

TEST_CASE("phase1 tables alone give trajectories and a heatmap, stress panels skipped") {
  auto dir = testing::scratch_dir("report-phase1");
  write_phase1_tables(dir);
  auto r = render_report(dir);
  CHECK(has_figure(r, "r2_by_layer"));
  CHECK(has_figure(r, "attention_trajectory"));
  CHECK(has_figure(r, "heatmap_final_step"));
  CHECK_FALSE(has_figure(r, "stress_1back"));
  CHECK_FALSE(has_figure(r, "stress_positional"));
  CHECK_FALSE(has_figure(r, "stress_pos"));
  CHECK_FALSE(has_figure(r, "ablation_delta_r2"));
  CHECK(has_notice(r, "stress_1back analysis"));
  CHECK(has_notice(r, "stress_positional analysis"));
  CHECK(has_notice(r, "stress_pos analysis"));
  CHECK(has_notice(r, "ablation analysis"));
  CHECK(has_notice(r, "composite analysis"));
  CHECK(has_notice(r, "modnoun analysis"));
  for (const auto& f : r.figures) {
    const auto s = slurp(f);
    CHECK(s.rfind("<?xml", 0) == 0);
    CHECK(s.find("</svg>") != std::string::npos);
    CHECK(fs::exists(dir / attr(s, "data-source")));
  }
  auto index = testing::read_json(dir / "figures" / "report.json");
  CHECK(index["figures"].size() == r.figures.size());
  CHECK(index["notices"].size() == r.notices.size());
}

TEST_CASE("heatmap colour scale is symmetric about zero") {
  auto dir = testing::scratch_dir("report-heatmap");
  write_phase1_tables(dir);
  render_report(dir);
  const auto svg = slurp(dir / "figures" / "heatmap_final_step.svg");
  const double lo = std::stod(attr(svg, "data-domain-min"));
  const double hi = std::stod(attr(svg, "data-domain-max"));
  CHECK(lo == -hi);

  // Independent z of the step-10 values: mean 0.35, population sd sqrt(0.0725).
  const std::vector<double> v{0.1, 0.2, 0.3, 0.8};
  const double sd = std::sqrt(0.0725);
  double max_abs = 0;
  std::vector<double> expected;
  for (double x : v) {
    expected.push_back((x - 0.35) / sd);
    max_abs = std::max(max_abs, std::abs(expected.back()));
  }
  CHECK(hi == Catch::Approx(max_abs).margin(1e-6));
  const auto z = all_attr(svg, "data-z");
  REQUIRE(z.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(z[i] == Catch::Approx(expected[i]).margin(1e-6));
}

TEST_CASE("empty tables give no-data figures") {
  auto dir = testing::scratch_dir("report-empty");
  write_phase1_tables(dir, true);
  ReportResult r;
  REQUIRE_NOTHROW(r = render_report(dir));
  for (const auto& name : {"r2_by_layer", "attention_trajectory", "heatmap_final_step"}) {
    INFO(name);
    REQUIRE(has_figure(r, name));
    CHECK(slurp(dir / "figures" / (std::string(name) + ".svg")).find(">no data<") != std::string::npos);
  }
}

TEST_CASE("a directory without tables names the analysis to run") {
  auto dir = testing::scratch_dir("report-none");
  try {
    render_report(dir);
    FAIL("expected NotFoundError");
  } catch (const NotFoundError& e) {
    CHECK(std::string(e.what()).find("phase1") != std::string::npos);
  }
  CHECK_THROWS_AS(render_report(dir / "absent"), NotFoundError);
}

TEST_CASE("a full synthetic study renders every figure") {
  auto root = testing::scratch_dir("report-full");
  oracle::SyntheticOptions opt;
  opt.steps = {0, 1, 4};
  opt.n_pairs = 6;
  auto study = oracle::make_synthetic_study(root, opt);
  auto config = load_run_config(study.config_file);
  REQUIRE(run(config).exit_code == 0);
  auto r = render_report(config.output_dir);
  for (const auto& n : r.notices) UNSCOPED_INFO(n);
  CHECK(r.notices.empty());
  for (const auto& name : {"r2_by_layer", "attention_trajectory", "heatmap_final_step", "stress_1back",
                           "stress_positional", "stress_pos", "modnoun", "composite", "ablation_delta_r2"}) {
    INFO(name);
    CHECK(has_figure(r, name));
  }
  const auto abl = slurp(config.output_dir / "figures" / "ablation_delta_r2.svg");
  CHECK(abl.find("stroke-dasharray=\"5 3\"") != std::string::npos);  // baselines dashed
  CHECK(abl.find(">no data<") == std::string::npos);
}

TEST_CASE("a configured analysis with no rows draws an empty panel") {
  auto dir = testing::scratch_dir("report-configured");
  write_phase1_tables(dir);
  nlohmann::json manifest{{"config", {{"analyses", {"phase1", "stress_positional"}}}}};
  std::ofstream(dir / "manifest.json") << manifest.dump();
  auto r = render_report(dir);
  REQUIRE(has_figure(r, "stress_positional"));
  CHECK(slurp(dir / "figures" / "stress_positional.svg").find(">no data<") != std::string::npos);
  CHECK_FALSE(has_figure(r, "stress_pos"));
}
