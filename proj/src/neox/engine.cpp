#include "headprobe/neox/engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "headprobe/error.hpp"

namespace headprobe::neox {

namespace {

// Eight independent partial sums keep the reduction order fixed (so results
// are reproducible) while letting the compiler vectorize.
float dot(const float* a, const float* b, std::size_t n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  }
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// out[t, o] = W[o, :] . in[t, :] + b[o]; W is [rows, cols] row-major.
void linear(const std::vector<float>& in, int seq, const Tensor& w, const Tensor* b, std::vector<float>& out) {
  const auto rows = static_cast<std::size_t>(w.dim(0));
  const auto cols = static_cast<std::size_t>(w.dim(1));
  out.assign(static_cast<std::size_t>(seq) * rows, 0.0f);
  for (std::size_t o = 0; o < rows; ++o) {
    const float* wr = w.data.data() + o * cols;
    const float bias = b ? b->data[o] : 0.0f;
    for (int t = 0; t < seq; ++t) {
      out[static_cast<std::size_t>(t) * rows + o] = dot(wr, in.data() + static_cast<std::size_t>(t) * cols, cols) + bias;
    }
  }
}

void layer_norm(const std::vector<float>& in, int seq, int d, const Tensor& gamma, const Tensor& beta, float eps,
                std::vector<float>& out) {
  out.resize(in.size());
  for (int t = 0; t < seq; ++t) {
    const float* x = in.data() + static_cast<std::size_t>(t) * d;
    float* y = out.data() + static_cast<std::size_t>(t) * d;
    float mean = 0.0f;
    for (int i = 0; i < d; ++i) mean += x[i];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (int i = 0; i < d; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (int i = 0; i < d; ++i) y[i] = (x[i] - mean) * inv * gamma.data[i] + beta.data[i];
  }
}

float activate(float x, Activation a) {
  switch (a) {
    case Activation::kGelu:
      return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f));
    case Activation::kGeluTanh:
      return 0.5f * x * (1.0f + std::tanh(0.79788456080286536f * (x + 0.044715f * x * x * x)));
    case Activation::kRelu:
      return x > 0.0f ? x : 0.0f;
  }
  return x;
}

// cos/sin tables [T][rotary_dims / 2].
struct Rotary {
  int half = 0;
  std::vector<float> cos, sin;

  Rotary(const ModelConfig& c, int seq) : half(c.rotary_dims() / 2) {
    cos.resize(static_cast<std::size_t>(seq) * half);
    sin.resize(cos.size());
    const int dims = c.rotary_dims();
    for (int i = 0; i < half; ++i) {
      const auto inv_freq =
          static_cast<float>(1.0 / std::pow(c.rotary_base, static_cast<double>(2 * i) / static_cast<double>(dims)));
      for (int t = 0; t < seq; ++t) {
        const float angle = static_cast<float>(t) * inv_freq;
        cos[static_cast<std::size_t>(t) * half + i] = std::cos(angle);
        sin[static_cast<std::size_t>(t) * half + i] = std::sin(angle);
      }
    }
  }

  // Rotate-half convention: pairs (i, i + half) within the rotary slice.
  void apply(float* v, int t) const {
    for (int i = 0; i < half; ++i) {
      const float c = cos[static_cast<std::size_t>(t) * half + i];
      const float s = sin[static_cast<std::size_t>(t) * half + i];
      const float a = v[i], b = v[i + half];
      v[i] = a * c - b * s;
      v[i + half] = b * c + a * s;
    }
  }
};

void check_finite(const std::vector<float>& v, const std::string& where) {
  for (float x : v) {
    if (!std::isfinite(x)) throw NumericError("non-finite activation in " + where);
  }
}

}  // namespace

bool CaptureSpec::captures(int index) const {
  if (!layers) return true;
  return std::find(layers->begin(), layers->end(), index) != layers->end();
}

bool ForwardTrace::has_hidden(int layer) const {
  return layer >= 0 && layer < static_cast<int>(hidden.size()) && !hidden[static_cast<std::size_t>(layer)].empty();
}

bool ForwardTrace::has_attention(int layer) const {
  return layer >= 0 && layer < static_cast<int>(attention.size()) &&
         !attention[static_cast<std::size_t>(layer)].empty();
}

std::span<const float> ForwardTrace::hidden_state(int layer, int position) const {
  if (!has_hidden(layer)) throw ArgumentError("hidden state for layer " + std::to_string(layer) + " not captured");
  if (position < 0 || position >= seq_len) throw ArgumentError("position out of range");
  return std::span<const float>(hidden[static_cast<std::size_t>(layer)])
      .subspan(static_cast<std::size_t>(position) * d_model, static_cast<std::size_t>(d_model));
}

std::span<const float> ForwardTrace::attention_row(int layer, int head, int query) const {
  if (!has_attention(layer)) throw ArgumentError("attention for layer " + std::to_string(layer) + " not captured");
  if (head < 0 || head >= n_heads) throw ArgumentError("head out of range");
  if (query < 0 || query >= seq_len) throw ArgumentError("query position out of range");
  const auto t = static_cast<std::size_t>(seq_len);
  return std::span<const float>(attention[static_cast<std::size_t>(layer)])
      .subspan((static_cast<std::size_t>(head) * t + static_cast<std::size_t>(query)) * t, t);
}

float ForwardTrace::attention_weight(int layer, int head, int query, int key) const {
  if (key < 0 || key >= seq_len) throw ArgumentError("key position out of range");
  return attention_row(layer, head, query)[static_cast<std::size_t>(key)];
}

std::span<const float> ForwardTrace::logits_at(int position) const {
  if (logits.empty()) throw ArgumentError("logits not captured");
  if (position < 0 || position >= seq_len) throw ArgumentError("position out of range");
  return std::span<const float>(logits).subspan(static_cast<std::size_t>(position) * vocab_size,
                                                static_cast<std::size_t>(vocab_size));
}

ForwardTrace forward(const ModelConfig& config, const ModelWeights& weights, std::span<const int> tokens,
                     const CaptureSpec& capture) {
  if (!capture.want_hidden && !capture.want_attention && !capture.want_logits) {
    throw ArgumentError("capture requests nothing");
  }
  const int seq = static_cast<int>(tokens.size());
  if (seq == 0) throw ArgumentError("forward: empty token sequence");
  if (seq > config.max_positions) {
    throw ArgumentError("forward: sequence length " + std::to_string(seq) + " exceeds max_positions " +
                        std::to_string(config.max_positions));
  }
  const int d = config.d_model, heads = config.n_heads, dh = config.d_head;
  const auto T = static_cast<std::size_t>(seq);

  ForwardTrace trace;
  trace.n_layers = config.n_layers;
  trace.n_heads = heads;
  trace.seq_len = seq;
  trace.d_model = d;
  trace.vocab_size = config.vocab_size;
  trace.hidden.resize(static_cast<std::size_t>(config.n_layers) + 1);
  trace.attention.resize(static_cast<std::size_t>(config.n_layers));

  std::vector<float> x(T * d);
  for (int t = 0; t < seq; ++t) {
    const int id = tokens[static_cast<std::size_t>(t)];
    if (id < 0 || id >= config.vocab_size) throw ArgumentError("token id " + std::to_string(id) + " out of range");
    const auto row = weights.embedding.row(id);
    std::copy(row.begin(), row.end(), x.begin() + static_cast<std::ptrdiff_t>(t) * d);
  }
  if (capture.want_hidden && capture.captures(0)) trace.hidden[0] = x;

  const Rotary rotary(config, seq);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const auto eps = static_cast<float>(config.layer_norm_eps);

  std::vector<float> normed, qkv, ctx(T * d), attn_out, mlp_hidden, mlp_out, scores(T);
  std::vector<float> q(T * dh), k(T * dh);
  for (int b = 0; b < config.n_layers; ++b) {
    const auto& L = weights.layers[static_cast<std::size_t>(b)];
    const bool keep_attn = capture.want_attention && capture.captures(b);
    std::vector<float> probs;
    if (keep_attn) probs.assign(static_cast<std::size_t>(heads) * T * T, 0.0f);

    layer_norm(x, seq, d, L.input_ln_weight, L.input_ln_bias, eps, normed);
    linear(normed, seq, L.qkv_weight, &L.qkv_bias, qkv);

    std::fill(ctx.begin(), ctx.end(), 0.0f);
    for (int h = 0; h < heads; ++h) {
      const std::size_t base = static_cast<std::size_t>(h) * 3 * dh;
      for (std::size_t t = 0; t < T; ++t) {
        const float* row = qkv.data() + t * 3 * d;
        std::copy_n(row + base, dh, q.data() + t * dh);
        std::copy_n(row + base + dh, dh, k.data() + t * dh);
        rotary.apply(q.data() + t * dh, static_cast<int>(t));
        rotary.apply(k.data() + t * dh, static_cast<int>(t));
      }
      for (std::size_t t = 0; t < T; ++t) {
        float max_score = -INFINITY;
        for (std::size_t j = 0; j <= t; ++j) {
          scores[j] = dot(q.data() + t * dh, k.data() + j * dh, static_cast<std::size_t>(dh)) * scale;
          max_score = std::max(max_score, scores[j]);
        }
        float total = 0.0f;
        for (std::size_t j = 0; j <= t; ++j) {
          scores[j] = std::exp(scores[j] - max_score);
          total += scores[j];
        }
        for (std::size_t j = 0; j <= t; ++j) scores[j] = scores[j] / total;
        if (keep_attn) {
          std::copy_n(scores.data(), t + 1, probs.data() + (static_cast<std::size_t>(h) * T + t) * T);
        }
        float* out = ctx.data() + t * d + static_cast<std::size_t>(h) * dh;
        for (std::size_t j = 0; j <= t; ++j) {
          const float* v = qkv.data() + j * 3 * d + base + 2 * dh;
          for (int i = 0; i < dh; ++i) out[i] += scores[j] * v[i];
        }
      }
    }
    linear(ctx, seq, L.attn_out_weight, &L.attn_out_bias, attn_out);

    if (config.parallel_residual) {
      layer_norm(x, seq, d, L.post_attn_ln_weight, L.post_attn_ln_bias, eps, normed);
    } else {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += attn_out[i];
      layer_norm(x, seq, d, L.post_attn_ln_weight, L.post_attn_ln_bias, eps, normed);
    }
    linear(normed, seq, L.mlp_up_weight, &L.mlp_up_bias, mlp_hidden);
    for (auto& v : mlp_hidden) v = activate(v, config.activation);
    linear(mlp_hidden, seq, L.mlp_down_weight, &L.mlp_down_bias, mlp_out);
    if (config.parallel_residual) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += attn_out[i] + mlp_out[i];
    } else {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += mlp_out[i];
    }
    check_finite(x, "block " + std::to_string(b));

    if (keep_attn) trace.attention[static_cast<std::size_t>(b)] = std::move(probs);
    if (capture.want_hidden && capture.captures(b + 1)) trace.hidden[static_cast<std::size_t>(b) + 1] = x;
  }

  if (capture.want_logits) {
    layer_norm(x, seq, d, weights.final_ln_weight, weights.final_ln_bias, eps, normed);
    linear(normed, seq, weights.unembedding, nullptr, trace.logits);
    check_finite(trace.logits, "logits");
  }
  return trace;
}

double sentence_log_prob(const ModelConfig& config, const ModelWeights& weights, std::span<const int> tokens) {
  if (tokens.size() < 2) throw ArgumentError("sentence_log_prob: need at least 2 tokens");
  CaptureSpec capture;
  capture.want_hidden = false;
  capture.want_attention = false;
  capture.want_logits = true;
  const ForwardTrace trace = forward(config, weights, tokens, capture);
  double total = 0.0;
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    const auto row = trace.logits_at(static_cast<int>(t) - 1);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (float v : row) sum += std::exp(static_cast<double>(v) - mx);
    total += static_cast<double>(row[static_cast<std::size_t>(tokens[t])]) - mx - std::log(sum);
  }
  return total;
}

}  // namespace headprobe::neox
