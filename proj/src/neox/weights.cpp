#include "headprobe/neox/weights.hpp"

#include <functional>

#include "headprobe/error.hpp"

namespace headprobe::neox {

namespace {

using Shape = std::vector<std::int64_t>;

std::string layer_prefix(std::size_t i) { return "gpt_neox.layers." + std::to_string(i) + "."; }

// Visits every tensor with its canonical name and expected shape.
template <typename Weights, typename Fn>
void for_each_tensor(const ModelConfig& c, Weights& w, Fn&& fn) {
  const std::int64_t d = c.d_model, v = c.vocab_size, inter = c.intermediate_size;
  fn("gpt_neox.embed_in.weight", w.embedding, Shape{v, d});
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const std::string p = layer_prefix(i);
    fn(p + "input_layernorm.weight", l.input_ln_weight, Shape{d});
    fn(p + "input_layernorm.bias", l.input_ln_bias, Shape{d});
    fn(p + "post_attention_layernorm.weight", l.post_attn_ln_weight, Shape{d});
    fn(p + "post_attention_layernorm.bias", l.post_attn_ln_bias, Shape{d});
    fn(p + "attention.query_key_value.weight", l.qkv_weight, Shape{3 * d, d});
    fn(p + "attention.query_key_value.bias", l.qkv_bias, Shape{3 * d});
    fn(p + "attention.dense.weight", l.attn_out_weight, Shape{d, d});
    fn(p + "attention.dense.bias", l.attn_out_bias, Shape{d});
    fn(p + "mlp.dense_h_to_4h.weight", l.mlp_up_weight, Shape{inter, d});
    fn(p + "mlp.dense_h_to_4h.bias", l.mlp_up_bias, Shape{inter});
    fn(p + "mlp.dense_4h_to_h.weight", l.mlp_down_weight, Shape{d, inter});
    fn(p + "mlp.dense_4h_to_h.bias", l.mlp_down_bias, Shape{d});
  }
  fn("gpt_neox.final_layer_norm.weight", w.final_ln_weight, Shape{d});
  fn("gpt_neox.final_layer_norm.bias", w.final_ln_bias, Shape{d});
  fn("embed_out.weight", w.unembedding, Shape{v, d});
}

}  // namespace

ModelWeights ModelWeights::from_named(const ModelConfig& config, std::map<std::string, Tensor> named) {
  ModelWeights w;
  w.layers.resize(static_cast<std::size_t>(config.n_layers));
  for_each_tensor(config, w, [&](const std::string& name, Tensor& slot, const Shape&) {
    auto it = named.find(name);
    if (it == named.end()) throw ValidationError("missing tensor '" + name + "'");
    slot = std::move(it->second);
  });
  w.validate(config);
  return w;
}

std::map<std::string, Tensor> ModelWeights::to_named() const {
  std::map<std::string, Tensor> out;
  // Names only; the expected shapes are irrelevant here.
  for_each_tensor(ModelConfig{}, *this,
                  [&](const std::string& name, const Tensor& t, const Shape&) { out.emplace(name, t); });
  return out;
}

void ModelWeights::validate(const ModelConfig& config) const {
  if (layers.size() != static_cast<std::size_t>(config.n_layers)) {
    throw ValidationError("weights hold " + std::to_string(layers.size()) + " layers, config expects " +
                          std::to_string(config.n_layers));
  }
  for_each_tensor(config, *this, [&](const std::string& name, const Tensor& t, const Shape& expected) {
    if (t.shape != expected) {
      throw ValidationError("tensor '" + name + "' has shape " + shape_string(t.shape) + ", expected " +
                            shape_string(expected));
    }
  });
}

ModelWeights ModelWeights::zeros(const ModelConfig& config) {
  ModelWeights w;
  w.layers.resize(static_cast<std::size_t>(config.n_layers));
  for_each_tensor(config, w, [](const std::string&, Tensor& slot, const Shape& shape) { slot = Tensor(shape); });
  return w;
}

std::int64_t qkv_row_offset(const ModelConfig& config, int head, Projection which) {
  if (head < 0 || head >= config.n_heads) {
    throw ArgumentError("head index " + std::to_string(head) + " out of range [0, " + std::to_string(config.n_heads) +
                        ")");
  }
  return (static_cast<std::int64_t>(head) * 3 + static_cast<int>(which)) * config.d_head;
}

std::span<float> head_weight_rows(const ModelConfig& config, LayerWeights& layer, int head, Projection which) {
  const auto offset = static_cast<std::size_t>(qkv_row_offset(config, head, which)) * config.d_model;
  return std::span<float>(layer.qkv_weight.data).subspan(offset, static_cast<std::size_t>(config.d_head) * config.d_model);
}

std::span<const float> head_weight_rows(const ModelConfig& config, const LayerWeights& layer, int head,
                                        Projection which) {
  const auto offset = static_cast<std::size_t>(qkv_row_offset(config, head, which)) * config.d_model;
  return std::span<const float>(layer.qkv_weight.data)
      .subspan(offset, static_cast<std::size_t>(config.d_head) * config.d_model);
}

std::span<float> head_bias(const ModelConfig& config, LayerWeights& layer, int head, Projection which) {
  return std::span<float>(layer.qkv_bias.data)
      .subspan(static_cast<std::size_t>(qkv_row_offset(config, head, which)), static_cast<std::size_t>(config.d_head));
}

std::span<const float> head_bias(const ModelConfig& config, const LayerWeights& layer, int head, Projection which) {
  return std::span<const float>(layer.qkv_bias.data)
      .subspan(static_cast<std::size_t>(qkv_row_offset(config, head, which)), static_cast<std::size_t>(config.d_head));
}

}  // namespace headprobe::neox
