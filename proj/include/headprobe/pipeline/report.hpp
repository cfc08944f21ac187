#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace headprobe::pipeline {

struct ReportResult {
  std::vector<std::filesystem::path> figures;
  std::vector<std::string> notices;  // skipped panels and why
};

// Renders SVG figures from the result tables in `output_dir` into
// output_dir/figures/ and writes figures/report.json. Each figure records the
// CSV it was drawn from in a data-source attribute.
//
// A panel whose table is absent is skipped with a notice naming the analysis
// that produces it. An empty table gives a figure annotated "no data". Throws
// NotFoundError when the directory holds no result tables at all.
ReportResult render_report(const std::filesystem::path& output_dir);

}  // namespace headprobe::pipeline
