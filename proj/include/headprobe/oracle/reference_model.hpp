#pragma once

#include <vector>

#include "headprobe/neox/config.hpp"
#include "headprobe/neox/weights.hpp"

namespace headprobe::oracle {

using Matrix = std::vector<std::vector<double>>;

// Straight-loop double-precision GPT-NeoX evaluation, written independently of
// the engine (no shared helpers) so the two can check each other.
struct ReferenceTrace {
  std::vector<Matrix> hidden;                  // [L + 1][T][d]
  std::vector<std::vector<Matrix>> attention;  // [L][H][T][T]
  Matrix logits;                               // [T][V]
};

ReferenceTrace reference_forward(const neox::ModelConfig& config, const neox::ModelWeights& weights,
                                 const std::vector<int>& tokens);

double reference_log_prob(const neox::ModelConfig& config, const neox::ModelWeights& weights,
                          const std::vector<int>& tokens);

}  // namespace headprobe::oracle
