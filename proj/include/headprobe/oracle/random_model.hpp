#pragma once

#include <random>

#include "headprobe/neox/config.hpp"
#include "headprobe/neox/weights.hpp"

namespace headprobe::oracle {

// Tiny random architecture: layers and heads in [1, max_heads], d_model <=
// max_d, rotary dims even, parallel or sequential residual.
neox::ModelConfig random_tiny_config(std::mt19937_64& rng, int max_layers = 2, int max_heads = 2, int max_d = 8,
                                     int vocab = 16);

// Normal(0, scale) parameters; layernorm scales around 1.
neox::ModelWeights random_weights(const neox::ModelConfig& config, std::mt19937_64& rng, double scale = 0.5);

}  // namespace headprobe::oracle
