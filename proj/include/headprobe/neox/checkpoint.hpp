#pragma once

#include <filesystem>
#include <optional>

#include "headprobe/neox/config.hpp"
#include "headprobe/neox/tokenizer.hpp"
#include "headprobe/neox/weights.hpp"

namespace headprobe::neox {

struct Checkpoint {
  ModelConfig config;
  ModelWeights weights;
  Tokenizer tokenizer;
};

// Loads config.json, tokenizer.json and every *.safetensors file in `dir`.
// The step is taken from a trailing "step<N>" in the directory name when
// present.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::optional<std::int64_t> step_from_name(const std::string& name);

}  // namespace headprobe::neox
