#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "headprobe/pipeline/config.hpp"
#include "headprobe/pipeline/runner.hpp"
#include "headprobe/pipeline/table.hpp"
#include "headprobe/probes/probes.hpp"

namespace headprobe::pipeline::detail {

// Merges part tables of completed cells into the result tables, in config
// model order, then step, then analysis, then the part's own row order.
class Aggregator {
 public:
  Aggregator(const RunConfig& config, std::filesystem::path output_dir, RunManifest& manifest);

  // layer_scores, head_scores, tests, trajectory, composite, modnoun, coupling.
  void stage1();
  // ablation_outcomes, ablation_summary, ablation_effects.
  void stage2();

  bool failed() const { return failed_; }
  const std::vector<probes::CompositeIndexRow>* composite(const std::string& model) const;
  std::optional<int> tracked_layer(const std::string& model) const;

 private:
  Table collect(const std::string& table, const std::vector<Analysis>& analyses) const;
  void write(const std::string& name, const Table& table);
  template <typename Fn>
  void guarded(const std::string& what, Fn&& fn);

  Table trajectory(const Table& layers, const Table& heads);
  Table composite_table(const Table& heads, const Table& tests, const Table& trajectory);
  Table coupling(const Table& layers, const Table& modnoun);
  Table effects(const Table& summary);

  const RunConfig& config_;
  std::filesystem::path out_;
  RunManifest& manifest_;
  bool failed_ = false;
  std::map<std::string, int> tracked_;
  std::map<std::string, std::vector<probes::CompositeIndexRow>> composite_;
};

}  // namespace headprobe::pipeline::detail
