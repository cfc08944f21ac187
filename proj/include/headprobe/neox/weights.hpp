#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "headprobe/neox/config.hpp"
#include "headprobe/neox/tensor.hpp"

namespace headprobe::neox {

struct LayerWeights {
  Tensor input_ln_weight, input_ln_bias;          // [d]
  Tensor post_attn_ln_weight, post_attn_ln_bias;  // [d]
  Tensor qkv_weight, qkv_bias;                    // [3d, d], [3d]
  Tensor attn_out_weight, attn_out_bias;          // [d, d], [d]
  Tensor mlp_up_weight, mlp_up_bias;              // [inter, d], [inter]
  Tensor mlp_down_weight, mlp_down_bias;          // [d, inter], [d]

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

enum class Projection { kQuery = 0, kKey = 1, kValue = 2 };

// All parameters of one checkpoint. Immutable once loaded; ablations work on
// copies.
struct ModelWeights {
  std::optional<std::int64_t> step;
  Tensor embedding;  // [vocab, d]
  std::vector<LayerWeights> layers;
  Tensor final_ln_weight, final_ln_bias;  // [d]
  Tensor unembedding;                     // [vocab, d]

  // Builds from a flat name -> tensor map in the released naming scheme
  // (gpt_neox.layers.{i}.attention.query_key_value.weight, ...). Unknown
  // extra tensors are ignored; a missing tensor raises ValidationError.
  static ModelWeights from_named(const ModelConfig& config, std::map<std::string, Tensor> named);

  std::map<std::string, Tensor> to_named() const;

  // Throws ValidationError naming the tensor with expected vs actual shape.
  void validate(const ModelConfig& config) const;

  // Zero-initialized weights with shapes matching `config`.
  static ModelWeights zeros(const ModelConfig& config);

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

// The fused QKV projection is laid out as [head][{q,k,v}][d_head] along its
// output (row) dimension, so each head's Q, K, or V slice is a contiguous
// block of d_head rows.
std::int64_t qkv_row_offset(const ModelConfig& config, int head, Projection which);

std::span<float> head_weight_rows(const ModelConfig& config, LayerWeights& layer, int head, Projection which);
std::span<const float> head_weight_rows(const ModelConfig& config, const LayerWeights& layer, int head,
                                        Projection which);
std::span<float> head_bias(const ModelConfig& config, LayerWeights& layer, int head, Projection which);
std::span<const float> head_bias(const ModelConfig& config, const LayerWeights& layer, int head, Projection which);

}  // namespace headprobe::neox
