#pragma once

#include <optional>
#include <span>
#include <vector>

#include "headprobe/neox/config.hpp"
#include "headprobe/neox/tokenizer.hpp"
#include "headprobe/neox/weights.hpp"

namespace headprobe::neox {

// Which activations a forward pass keeps. `layers` restricts capture to the
// listed indices: hidden index l (0 = embedding output, l = output of block l)
// and attention block index l (0-based). An empty optional means all.
struct CaptureSpec {
  bool want_hidden = true;
  bool want_attention = true;
  bool want_logits = false;
  std::optional<std::vector<int>> layers;

  bool captures(int index) const;
};

// Activations of one sentence.
//   hidden:    (n_layers + 1) x T x d_model; index 0 = embeddings, l = residual stream after block l
//   attention: n_layers x n_heads x T x T post-softmax probabilities (query row, key column)
//   logits:    T x vocab
// Uncaptured entries are empty.
struct ForwardTrace {
  int n_layers = 0;
  int n_heads = 0;
  int seq_len = 0;
  int d_model = 0;
  int vocab_size = 0;
  std::vector<std::vector<float>> hidden;
  std::vector<std::vector<float>> attention;
  std::vector<float> logits;

  bool has_hidden(int layer) const;
  bool has_attention(int layer) const;

  std::span<const float> hidden_state(int layer, int position) const;
  float attention_weight(int layer, int head, int query, int key) const;
  std::span<const float> attention_row(int layer, int head, int query) const;
  std::span<const float> logits_at(int position) const;

  friend bool operator==(const ForwardTrace&, const ForwardTrace&) = default;
};

// GPT-NeoX forward pass in float32: LN -> rotary multi-head attention
// (rotation on the first rotary_dims of each head's q/k, rotate-half layout)
// -> LN -> MLP, with parallel or sequential residuals per the config. No BOS,
// no dropout, no KV cache. Throws ArgumentError if the sequence is empty or
// longer than max_positions, NumericError naming the block on non-finite
// activations.
ForwardTrace forward(const ModelConfig& config, const ModelWeights& weights, std::span<const int> tokens,
                     const CaptureSpec& capture = {});

inline ForwardTrace forward(const ModelConfig& config, const ModelWeights& weights, const EncodedSentence& sentence,
                            const CaptureSpec& capture = {}) {
  return forward(config, weights, std::span<const int>(sentence.token_ids), capture);
}

// Sum over t = 1..T-1 of log p(token_t | tokens_<t); the first token is
// unconditioned and excluded. Throws ArgumentError for fewer than 2 tokens.
double sentence_log_prob(const ModelConfig& config, const ModelWeights& weights, std::span<const int> tokens);

inline double sentence_log_prob(const ModelConfig& config, const ModelWeights& weights,
                                const EncodedSentence& sentence) {
  return sentence_log_prob(config, weights, std::span<const int>(sentence.token_ids));
}

}  // namespace headprobe::neox
