#pragma once

#include <nlohmann/json.hpp>

namespace headprobe::neox {

enum class Activation { kGelu, kGeluTanh, kRelu };

// Architecture hyperparameters of a GPT-NeoX-style decoder.
struct ModelConfig {
  int n_layers = 0;
  int n_heads = 0;
  int d_model = 0;
  int d_head = 0;
  int vocab_size = 0;
  int intermediate_size = 0;
  double rotary_pct = 0.25;
  double rotary_base = 10000.0;
  double layer_norm_eps = 1e-5;
  int max_positions = 2048;
  bool parallel_residual = true;
  Activation activation = Activation::kGelu;

  // floor(rotary_pct * d_head); validate() requires it to be even.
  int rotary_dims() const;

  // Throws ValidationError on any broken invariant.
  void validate() const;

  // Reads the checkpoint's config.json. Falls back to the newer
  // `rope_parameters` block when rotary_pct / rotary_emb_base are absent.
  static ModelConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace headprobe::neox
