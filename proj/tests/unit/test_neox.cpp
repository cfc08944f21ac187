#include <cstring>
#include <fstream>
#include <random>

#include "catch_amalgamated.hpp"
#include "headprobe/error.hpp"
#include "headprobe/neox/checkpoint.hpp"
#include "headprobe/neox/engine.hpp"
#include "headprobe/neox/safetensors.hpp"
#include "headprobe/oracle/random_model.hpp"
#include "headprobe/oracle/reference_model.hpp"
#include "helpers.hpp"

using namespace headprobe;
using namespace headprobe::neox;
using testing::close;

namespace {

ModelConfig tiny_config(int layers = 2, int heads = 2, int d = 8) {
  ModelConfig c;
  c.n_layers = layers;
  c.n_heads = heads;
  c.d_model = d;
  c.d_head = d / heads;
  c.vocab_size = 12;
  c.intermediate_size = 2 * d;
  c.rotary_pct = 0.5;
  c.max_positions = 32;
  return c;
}

void check_causal(const ForwardTrace& tr) {
  for (int l = 0; l < tr.n_layers; ++l) {
    for (int h = 0; h < tr.n_heads; ++h) {
      for (int q = 0; q < tr.seq_len; ++q) {
        const auto row = tr.attention_row(l, h, q);
        double sum = 0.0;
        for (int k = 0; k < tr.seq_len; ++k) {
          REQUIRE(row[k] >= 0.0f);
          REQUIRE(row[k] <= 1.0f);
          if (k > q) REQUIRE(row[k] == 0.0f);
          sum += row[k];
        }
        REQUIRE(std::abs(sum - 1.0) <= 1e-5);
      }
    }
  }
}

}  // namespace

TEST_CASE("config reads the released key names", "[neox]") {
  const auto doc = testing::read_json(testing::data_dir() / "neox_serial_f16" / "config.json");
  const ModelConfig c = ModelConfig::from_json(doc);
  CHECK(c.n_layers == 3);
  CHECK(c.n_heads == 2);
  CHECK(c.d_model == 16);
  CHECK(c.d_head == 8);
  CHECK_FALSE(c.parallel_residual);
  CHECK(c.rotary_dims() == 2);
  CHECK(ModelConfig::from_json(c.to_json()) == c);
}

TEST_CASE("config rejects odd rotary width and head mismatch", "[neox]") {
  ModelConfig c = tiny_config();
  c.rotary_pct = 0.25;  // floor(0.25 * 4) = 1
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = tiny_config();
  c.d_model = 10;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("half precision conversion", "[neox][safetensors]") {
  CHECK(half_to_float(0x3C00) == 1.0f);
  CHECK(half_to_float(0xC000) == -2.0f);
  CHECK(half_to_float(0x0001) == std::ldexp(1.0f, -24));
  CHECK(std::isinf(half_to_float(0x7C00)));
  CHECK(bfloat16_to_float(0x3F80) == 1.0f);
  for (std::uint32_t h = 0; h < 0x7C00; ++h) {
    REQUIRE(float_to_half(half_to_float(static_cast<std::uint16_t>(h))) == h);
  }
}

TEST_CASE("safetensors round trip in every dtype", "[neox][safetensors]") {
  const auto dir = testing::scratch_dir("st");
  std::map<std::string, Tensor> tensors;
  Tensor a({2, 3});
  a.data = {0.5f, -1.0f, 2.0f, 0.25f, 3.0f, -0.125f};
  tensors["a"] = a;
  Tensor b({4});
  b.data = {1, 2, 3, 4};
  tensors["b.bias"] = b;
  for (DType dt : {DType::kF32, DType::kF16}) {
    write_safetensors(dir / "x.safetensors", tensors, dt);
    CHECK(read_safetensors(dir / "x.safetensors") == tensors);
  }
}

TEST_CASE("truncated safetensors names the file", "[neox][safetensors]") {
  const auto dir = testing::scratch_dir("trunc");
  std::map<std::string, Tensor> tensors;
  Tensor a({64});
  tensors["w"] = a;
  write_safetensors(dir / "model.safetensors", tensors);
  std::filesystem::resize_file(dir / "model.safetensors", std::filesystem::file_size(dir / "model.safetensors") - 40);
  try {
    read_safetensors(dir / "model.safetensors");
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("model.safetensors") != std::string::npos);
  }
}

TEST_CASE("fused QKV slicing follows [head][q,k,v] blocks", "[neox]") {
  const ModelConfig c = tiny_config(1, 2, 8);
  ModelWeights w = ModelWeights::zeros(c);
  // Tag every output row of the fused projection with its row index.
  for (std::int64_t r = 0; r < 3 * c.d_model; ++r) {
    for (int col = 0; col < c.d_model; ++col) w.layers[0].qkv_weight.row(r)[col] = static_cast<float>(r);
    w.layers[0].qkv_bias.data[r] = static_cast<float>(r);
  }
  // head 1, key -> rows (1*3 + 1) * 4 = 16..19
  const auto rows = head_weight_rows(c, w.layers[0], 1, Projection::kKey);
  REQUIRE(rows.size() == 4u * 8u);
  CHECK(rows.front() == 16.0f);
  CHECK(rows.back() == 19.0f);
  CHECK(head_bias(c, w.layers[0], 0, Projection::kValue)[0] == 8.0f);
  CHECK_THROWS_AS(qkv_row_offset(c, 2, Projection::kQuery), ArgumentError);

  // Round trip through a hand-written file keeps the layout.
  const auto dir = testing::scratch_dir("qkv");
  write_safetensors(dir / "m.safetensors", w.to_named());
  const auto back = ModelWeights::from_named(c, read_safetensors(dir / "m.safetensors"));
  CHECK(head_bias(c, back.layers[0], 1, Projection::kQuery)[3] == 15.0f);
}

TEST_CASE("shape mismatch names the tensor", "[neox]") {
  const ModelConfig c = tiny_config(1, 2, 8);
  auto named = ModelWeights::zeros(c).to_named();
  named["gpt_neox.layers.0.attention.dense.weight"] = Tensor({8, 7});
  try {
    ModelWeights::from_named(c, named);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("attention.dense.weight") != std::string::npos);
    CHECK(msg.find("[8, 8]") != std::string::npos);
  }
}

TEST_CASE("all-zero weights give uniform causal attention", "[neox]") {
  const ModelConfig c = tiny_config(2, 2, 8);
  const ModelWeights w = ModelWeights::zeros(c);
  const std::vector<int> tokens{1, 5, 3, 3, 7};
  const auto tr = forward(c, w, tokens);
  check_causal(tr);
  for (int l = 0; l < 2; ++l) {
    for (int h = 0; h < 2; ++h) {
      for (int q = 0; q < 5; ++q) {
        for (int k = 0; k <= q; ++k) REQUIRE(tr.attention_weight(l, h, q, k) == 1.0f / static_cast<float>(q + 1));
      }
    }
  }
}

TEST_CASE("zero-QK head is exactly uniform inside a random model", "[neox]") {
  std::mt19937_64 rng(11);
  const ModelConfig c = tiny_config(2, 2, 8);
  ModelWeights w = oracle::random_weights(c, rng, 0.7);
  for (auto which : {Projection::kQuery, Projection::kKey}) {
    for (auto& v : head_weight_rows(c, w.layers[1], 0, which)) v = 0.0f;
    for (auto& v : head_bias(c, w.layers[1], 0, which)) v = 0.0f;
  }
  const auto tr = forward(c, w, std::vector<int>{3, 1, 4, 1, 5, 9});
  for (int q = 0; q < 6; ++q) {
    for (int k = 0; k <= q; ++k) REQUIRE(tr.attention_weight(1, 0, q, k) == 1.0f / static_cast<float>(q + 1));
  }
  CHECK(tr.attention_weight(1, 1, 5, 0) != tr.attention_weight(1, 1, 5, 1));
}

TEST_CASE("rotary scores depend only on relative position", "[neox]") {
  // One head, d_head 4, full rotary; embeddings identical for every token so
  // q and k are the same vector at every position before rotation.
  ModelConfig c = tiny_config(1, 1, 4);
  c.rotary_pct = 1.0;
  c.vocab_size = 2;
  ModelWeights w = ModelWeights::zeros(c);
  for (int i = 0; i < 4; ++i) {
    w.layers[0].input_ln_weight.data[i] = 1.0f;
    w.embedding.row(0)[i] = static_cast<float>(i) - 1.3f;
  }
  for (int i = 0; i < 4; ++i) {
    w.layers[0].qkv_weight.row(i)[i] = 1.0f;      // W_Q = I
    w.layers[0].qkv_weight.row(4 + i)[i] = 1.0f;  // W_K = I
  }
  const int T = 6;
  const auto tr = forward(c, w, std::vector<int>(T, 0));
  // p[t][j] / p[t][0] = exp(s(t-j) - s(t)); compare logs across rows with
  // the same offset.
  auto log_ratio = [&](int t, int j) { return std::log(tr.attention_weight(0, 0, t, j) / tr.attention_weight(0, 0, t, t)); };
  for (int delta = 1; delta < T - 1; ++delta) {
    const double ref = log_ratio(delta, 0);
    for (int t = delta + 1; t < T; ++t) REQUIRE(std::abs(log_ratio(t, t - delta) - ref) < 1e-4);
  }
}

TEST_CASE("forward matches the naive reference on random tiny models", "[neox][oracle]") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelConfig c = oracle::random_tiny_config(rng);
    const ModelWeights w = oracle::random_weights(c, rng, 0.6);
    std::uniform_int_distribution<int> len(1, 8), tok(0, c.vocab_size - 1);
    std::vector<int> tokens(len(rng));
    for (auto& t : tokens) t = tok(rng);
    CaptureSpec all;
    all.want_logits = true;
    const auto tr = forward(c, w, tokens, all);
    const auto ref = oracle::reference_forward(c, w, tokens);
    check_causal(tr);
    for (int l = 0; l <= c.n_layers; ++l) {
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        for (int i = 0; i < c.d_model; ++i) REQUIRE(close(tr.hidden_state(l, t)[i], ref.hidden[l][t][i], 1e-5));
      }
    }
    for (int l = 0; l < c.n_layers; ++l) {
      for (int h = 0; h < c.n_heads; ++h) {
        for (std::size_t q = 0; q < tokens.size(); ++q) {
          for (std::size_t k = 0; k < tokens.size(); ++k) {
            REQUIRE(close(tr.attention_weight(l, h, q, k), ref.attention[l][h][q][k], 1e-5));
          }
        }
      }
    }
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      for (int v = 0; v < c.vocab_size; ++v) REQUIRE(close(tr.logits_at(t)[v], ref.logits[t][v], 1e-5));
    }
    if (tokens.size() >= 2) {
      REQUIRE(close(sentence_log_prob(c, w, tokens), oracle::reference_log_prob(c, w, tokens), 1e-6));
    }
  }
}

TEST_CASE("uniform logits give (T-1) log(1/V)", "[neox]") {
  const ModelConfig c = tiny_config(1, 2, 8);
  const ModelWeights w = ModelWeights::zeros(c);
  const std::vector<int> tokens{0, 4, 2, 9};
  CHECK(close(sentence_log_prob(c, w, tokens), 3.0 * std::log(1.0 / c.vocab_size), 1e-12));
  CHECK_THROWS_AS(sentence_log_prob(c, w, std::vector<int>{1}), ArgumentError);
}

TEST_CASE("forward argument errors", "[neox]") {
  const ModelConfig c = tiny_config(1, 2, 8);
  const ModelWeights w = ModelWeights::zeros(c);
  CHECK_THROWS_AS(forward(c, w, std::vector<int>{}), ArgumentError);
  CHECK_THROWS_AS(forward(c, w, std::vector<int>(33, 1)), ArgumentError);
  CaptureSpec none;
  none.want_hidden = none.want_attention = false;
  CHECK_THROWS_AS(forward(c, w, std::vector<int>{1}, none), ArgumentError);
}

TEST_CASE("non-finite activations name the block", "[neox]") {
  const ModelConfig c = tiny_config(2, 2, 8);
  ModelWeights w = ModelWeights::zeros(c);
  w.layers[1].mlp_down_bias.data[0] = std::numeric_limits<float>::infinity();
  try {
    forward(c, w, std::vector<int>{1, 2});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("block 1") != std::string::npos);
  }
}

TEST_CASE("layer subset capture", "[neox]") {
  const ModelConfig c = tiny_config(2, 2, 8);
  const ModelWeights w = ModelWeights::zeros(c);
  CaptureSpec capture;
  capture.layers = std::vector<int>{1};
  const auto tr = forward(c, w, std::vector<int>{1, 2}, capture);
  CHECK(tr.has_hidden(1));
  CHECK_FALSE(tr.has_hidden(0));
  CHECK(tr.has_attention(1));
  CHECK_FALSE(tr.has_attention(0));
  CHECK_THROWS_AS(tr.hidden_state(0, 0), ArgumentError);
}

TEST_CASE("forward is bitwise deterministic", "[neox]") {
  std::mt19937_64 rng(5);
  const ModelConfig c = tiny_config(2, 2, 8);
  const ModelWeights w = oracle::random_weights(c, rng);
  CaptureSpec all;
  all.want_logits = true;
  const std::vector<int> tokens{1, 2, 3, 4, 5};
  CHECK(forward(c, w, tokens, all) == forward(c, w, tokens, all));
}

TEST_CASE("checkpoint fixtures match the reference implementation", "[neox][fixture]") {
  for (const char* name : {"neox_parallel_f32", "neox_serial_f16"}) {
    INFO(name);
    const auto ckpt = load_checkpoint(testing::data_dir() / name);
    const auto ref = testing::read_json(testing::data_dir() / name / "reference.json");
    for (const auto& s : ref) {
      const auto enc = ckpt.tokenizer.encode(s["text"].get<std::string>());
      REQUIRE(enc.token_ids == s["ids"].get<std::vector<int>>());
      CaptureSpec all;
      all.want_logits = true;
      const auto tr = forward(ckpt.config, ckpt.weights, enc, all);
      for (int l = 0; l <= ckpt.config.n_layers; ++l) {
        for (int t = 0; t < tr.seq_len; ++t) {
          for (int i = 0; i < tr.d_model; ++i) {
            REQUIRE(close(tr.hidden_state(l, t)[i], s["hidden"][l][t][i].get<double>(), 1e-4));
          }
        }
      }
      for (int l = 0; l < ckpt.config.n_layers; ++l) {
        for (int h = 0; h < tr.n_heads; ++h) {
          for (int q = 0; q < tr.seq_len; ++q) {
            for (int k = 0; k < tr.seq_len; ++k) {
              REQUIRE(std::abs(tr.attention_weight(l, h, q, k) - s["attention"][l][h][q][k].get<double>()) < 1e-5);
            }
          }
        }
      }
      for (int t = 0; t < tr.seq_len; ++t) {
        for (int v = 0; v < tr.vocab_size; ++v) {
          REQUIRE(close(tr.logits_at(t)[v], s["logits"][t][v].get<double>(), 1e-4));
        }
      }
      if (enc.size() >= 2) {
        CHECK(close(sentence_log_prob(ckpt.config, ckpt.weights, enc), s["sentence_log_prob"].get<double>(), 1e-4));
      }
    }
  }
}

TEST_CASE("checkpoint loader errors", "[neox]") {
  CHECK_THROWS_AS(load_checkpoint(testing::data_dir() / "does-not-exist"), LoadError);
  const auto dir = testing::scratch_dir("ckpt");
  for (const char* f : {"config.json", "tokenizer.json"}) {
    std::filesystem::copy_file(testing::data_dir() / "neox_parallel_f32" / f, dir / f);
  }
  CHECK_THROWS_AS(load_checkpoint(dir), LoadError);
  CHECK(step_from_name("step143000") == 143000);
  CHECK_FALSE(step_from_name("main").has_value());
}
