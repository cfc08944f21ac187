#include "headprobe/oracle/random_model.hpp"

namespace headprobe::oracle {

neox::ModelConfig random_tiny_config(std::mt19937_64& rng, int max_layers, int max_heads, int max_d, int vocab) {
  std::uniform_int_distribution<int> layers(1, max_layers), heads(1, max_heads), coin(0, 1);
  neox::ModelConfig c;
  c.n_layers = layers(rng);
  c.n_heads = heads(rng);
  // d_head in {2, 4, ...} so that some even rotary width exists.
  std::uniform_int_distribution<int> head_dim(1, std::max(1, max_d / (2 * c.n_heads)));
  c.d_head = 2 * head_dim(rng);
  c.d_model = c.n_heads * c.d_head;
  c.vocab_size = vocab;
  c.intermediate_size = 2 * c.d_model;
  std::uniform_int_distribution<int> rot(1, c.d_head / 2);
  c.rotary_pct = static_cast<double>(2 * rot(rng)) / c.d_head;
  c.parallel_residual = coin(rng) == 1;
  c.max_positions = 64;
  return c;
}

neox::ModelWeights random_weights(const neox::ModelConfig& config, std::mt19937_64& rng, double scale) {
  std::normal_distribution<float> normal(0.0f, static_cast<float>(scale));
  auto fill = [&](neox::Tensor& t, float center) {
    for (auto& v : t.data) v = center + normal(rng);
  };
  neox::ModelWeights w = neox::ModelWeights::zeros(config);
  fill(w.embedding, 0.0f);
  for (auto& l : w.layers) {
    fill(l.input_ln_weight, 1.0f);
    fill(l.input_ln_bias, 0.0f);
    fill(l.post_attn_ln_weight, 1.0f);
    fill(l.post_attn_ln_bias, 0.0f);
    fill(l.qkv_weight, 0.0f);
    fill(l.qkv_bias, 0.0f);
    fill(l.attn_out_weight, 0.0f);
    fill(l.attn_out_bias, 0.0f);
    fill(l.mlp_up_weight, 0.0f);
    fill(l.mlp_up_bias, 0.0f);
    fill(l.mlp_down_weight, 0.0f);
    fill(l.mlp_down_bias, 0.0f);
  }
  fill(w.final_ln_weight, 1.0f);
  fill(w.final_ln_bias, 0.0f);
  fill(w.unembedding, 0.0f);
  return w;
}

}  // namespace headprobe::oracle
