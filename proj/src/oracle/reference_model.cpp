#include "headprobe/oracle/reference_model.hpp"

#include <cmath>

namespace headprobe::oracle {

namespace {

double w2(const neox::Tensor& t, std::size_t r, std::size_t c) {
  return t.data[r * static_cast<std::size_t>(t.dim(1)) + c];
}

Matrix affine(const Matrix& x, const neox::Tensor& w, const neox::Tensor* b) {
  const std::size_t out = static_cast<std::size_t>(w.dim(0)), in = static_cast<std::size_t>(w.dim(1));
  Matrix y(x.size(), std::vector<double>(out, 0.0));
  for (std::size_t t = 0; t < x.size(); ++t) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = b ? b->data[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) s += w2(w, o, i) * x[t][i];
      y[t][o] = s;
    }
  }
  return y;
}

Matrix norm(const Matrix& x, const neox::Tensor& g, const neox::Tensor& b, double eps) {
  Matrix y = x;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double n = static_cast<double>(x[t].size());
    double mu = 0.0;
    for (double v : x[t]) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : x[t]) var += (v - mu) * (v - mu);
    var /= n;
    for (std::size_t i = 0; i < x[t].size(); ++i) y[t][i] = (x[t][i] - mu) / std::sqrt(var + eps) * g.data[i] + b.data[i];
  }
  return y;
}

double act(double x, neox::Activation a) {
  if (a == neox::Activation::kRelu) return std::max(0.0, x);
  if (a == neox::Activation::kGeluTanh) {
    return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
  }
  return 0.5 * x * std::erfc(-x / std::sqrt(2.0));
}

// Rotates dimension pairs (i, i + r/2) of the first r entries by pos * theta_i.
std::vector<double> rope(const std::vector<double>& v, int pos, int r, double base) {
  std::vector<double> out = v;
  const int half = r / 2;
  for (int i = 0; i < half; ++i) {
    const double theta = std::pow(base, -2.0 * i / r) * pos;
    out[i] = v[i] * std::cos(theta) - v[i + half] * std::sin(theta);
    out[i + half] = v[i + half] * std::cos(theta) + v[i] * std::sin(theta);
  }
  return out;
}

}  // namespace

ReferenceTrace reference_forward(const neox::ModelConfig& c, const neox::ModelWeights& w,
                                 const std::vector<int>& tokens) {
  const std::size_t T = tokens.size();
  const int d = c.d_model, H = c.n_heads, dh = c.d_head;
  ReferenceTrace out;
  Matrix x(T, std::vector<double>(d));
  for (std::size_t t = 0; t < T; ++t) {
    for (int i = 0; i < d; ++i) x[t][i] = w2(w.embedding, tokens[t], i);
  }
  out.hidden.push_back(x);

  for (int l = 0; l < c.n_layers; ++l) {
    const auto& L = w.layers[l];
    const Matrix qkv = affine(norm(x, L.input_ln_weight, L.input_ln_bias, c.layer_norm_eps), L.qkv_weight, &L.qkv_bias);
    Matrix mixed(T, std::vector<double>(d, 0.0));
    std::vector<Matrix> probs(H, Matrix(T, std::vector<double>(T, 0.0)));
    for (int h = 0; h < H; ++h) {
      Matrix q(T), k(T), v(T);
      for (std::size_t t = 0; t < T; ++t) {
        for (int part = 0; part < 3; ++part) {
          std::vector<double> slice(qkv[t].begin() + (3 * h + part) * dh, qkv[t].begin() + (3 * h + part + 1) * dh);
          if (part == 0) q[t] = rope(slice, static_cast<int>(t), c.rotary_dims(), c.rotary_base);
          if (part == 1) k[t] = rope(slice, static_cast<int>(t), c.rotary_dims(), c.rotary_base);
          if (part == 2) v[t] = slice;
        }
      }
      for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> s(t + 1);
        double mx = -INFINITY;
        for (std::size_t j = 0; j <= t; ++j) {
          double dotp = 0.0;
          for (int i = 0; i < dh; ++i) dotp += q[t][i] * k[j][i];
          s[j] = dotp / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j <= t; ++j) z += std::exp(s[j] - mx);
        for (std::size_t j = 0; j <= t; ++j) {
          probs[h][t][j] = std::exp(s[j] - mx) / z;
          for (int i = 0; i < dh; ++i) mixed[t][h * dh + i] += probs[h][t][j] * v[j][i];
        }
      }
    }
    out.attention.push_back(probs);
    const Matrix attn = affine(mixed, L.attn_out_weight, &L.attn_out_bias);

    auto mlp = [&](const Matrix& in) {
      Matrix up = affine(norm(in, L.post_attn_ln_weight, L.post_attn_ln_bias, c.layer_norm_eps), L.mlp_up_weight,
                         &L.mlp_up_bias);
      for (auto& row : up) {
        for (auto& e : row) e = act(e, c.activation);
      }
      return affine(up, L.mlp_down_weight, &L.mlp_down_bias);
    };
    if (c.parallel_residual) {
      const Matrix m = mlp(x);
      for (std::size_t t = 0; t < T; ++t) {
        for (int i = 0; i < d; ++i) x[t][i] += attn[t][i] + m[t][i];
      }
    } else {
      for (std::size_t t = 0; t < T; ++t) {
        for (int i = 0; i < d; ++i) x[t][i] += attn[t][i];
      }
      const Matrix m = mlp(x);
      for (std::size_t t = 0; t < T; ++t) {
        for (int i = 0; i < d; ++i) x[t][i] += m[t][i];
      }
    }
    out.hidden.push_back(x);
  }
  out.logits = affine(norm(x, w.final_ln_weight, w.final_ln_bias, c.layer_norm_eps), w.unembedding, nullptr);
  return out;
}

double reference_log_prob(const neox::ModelConfig& c, const neox::ModelWeights& w, const std::vector<int>& tokens) {
  const ReferenceTrace tr = reference_forward(c, w, tokens);
  double total = 0.0;
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    double z = 0.0;
    for (double v : tr.logits[t - 1]) z += std::exp(v);
    total += tr.logits[t - 1][tokens[t]] - std::log(z);
  }
  return total;
}

}  // namespace headprobe::oracle
