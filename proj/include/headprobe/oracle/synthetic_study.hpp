#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace headprobe::oracle {

struct SyntheticOptions {
  std::uint64_t seed = 7;
  std::vector<std::int64_t> steps{0, 1, 2, 4, 8, 16};
  int n_models = 2;  // one run label per model
  int n_pairs = 16;
  int n_layers = 2;
  int n_heads = 2;
  int d_model = 16;
  int workers = 1;
};

struct SyntheticStudy {
  std::filesystem::path root;
  std::filesystem::path config_file;
  std::vector<std::string> models;
};

// Writes a small offline study under `root`: random GPT-NeoX checkpoints per
// step (weights drift between two random draws), a byte-level tokenizer,
// stimulus CSVs and a run config requesting every analysis.
SyntheticStudy make_synthetic_study(const std::filesystem::path& root, const SyntheticOptions& options = {});

// tokenizer.json with one token per byte and no merges.
nlohmann::json byte_level_tokenizer();

}  // namespace headprobe::oracle
