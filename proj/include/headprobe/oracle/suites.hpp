#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace headprobe::oracle {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteResult {
  std::string name;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const;
  std::size_t failures() const;
};

struct EngineOracleOptions {
  int n_models = 50;
  std::uint64_t seed = 20240601;
  int max_layers = 2;
  int max_heads = 2;
  int max_d = 8;
  int max_tokens = 8;
  // |engine - reference| <= tolerance * max(|reference|, 1)
  double tolerance = 1e-5;
};

// Engine forward pass (float32) against the double-precision loop reference
// on random tiny models: hidden states, attention, logits and sentence
// log-probability. Each model also gets one head with zeroed query and key
// projections whose rows must be exactly 1 / (q + 1).
SuiteResult run_engine_oracle(const EngineOracleOptions& options = {});

struct StatsOracleOptions {
  std::uint64_t seed = 1729;
  int permutations = 1000;
  int random_trials = 200;
};

// ols, paired t, bh_fdr, zscore and pearson against the hand-formula
// references on the documented examples and fixed-seed random inputs, plus
// bh_fdr monotonicity and order preservation under random permutations.
SuiteResult run_stats_oracle(const StatsOracleOptions& options = {});

}  // namespace headprobe::oracle
