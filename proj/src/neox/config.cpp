#include "headprobe/neox/config.hpp"

#include <cmath>
#include <string>

#include "headprobe/error.hpp"

namespace headprobe::neox {

namespace {

template <typename T>
T required(const nlohmann::json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) {
    throw ValidationError(std::string("config: missing key '") + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

Activation parse_activation(const std::string& name) {
  if (name == "gelu") return Activation::kGelu;
  if (name == "gelu_new" || name == "gelu_fast" || name == "gelu_pytorch_tanh") return Activation::kGeluTanh;
  if (name == "relu") return Activation::kRelu;
  throw ValidationError("config: unsupported hidden_act '" + name + "'");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kGelu:
      return "gelu";
    case Activation::kGeluTanh:
      return "gelu_new";
    case Activation::kRelu:
      return "relu";
  }
  return "gelu";
}

}  // namespace

int ModelConfig::rotary_dims() const {
  return static_cast<int>(std::floor(rotary_pct * d_head + 1e-9));
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw ValidationError(std::string("config: ") + what + " must be >= 1");
  };
  positive(n_layers, "num_hidden_layers");
  positive(n_heads, "num_attention_heads");
  positive(d_model, "hidden_size");
  positive(d_head, "head size");
  positive(vocab_size, "vocab_size");
  positive(intermediate_size, "intermediate_size");
  positive(max_positions, "max_position_embeddings");
  if (n_heads * d_head != d_model) {
    throw ValidationError("config: num_attention_heads * head size != hidden_size (" + std::to_string(n_heads) +
                          " * " + std::to_string(d_head) + " != " + std::to_string(d_model) + ")");
  }
  if (!(rotary_pct > 0.0 && rotary_pct <= 1.0)) throw ValidationError("config: rotary_pct must lie in (0, 1]");
  if (rotary_dims() % 2 != 0) {
    throw ValidationError("config: rotary dims floor(rotary_pct * head size) = " + std::to_string(rotary_dims()) +
                          " is odd");
  }
  if (!(rotary_base > 0.0)) throw ValidationError("config: rotary_emb_base must be positive");
  if (!(layer_norm_eps > 0.0)) throw ValidationError("config: layer_norm_eps must be positive");
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
  ModelConfig c;
  c.n_layers = required<int>(doc, "num_hidden_layers");
  c.n_heads = required<int>(doc, "num_attention_heads");
  c.d_model = required<int>(doc, "hidden_size");
  c.intermediate_size = required<int>(doc, "intermediate_size");
  c.vocab_size = required<int>(doc, "vocab_size");
  c.d_head = c.n_heads > 0 ? c.d_model / c.n_heads : 0;

  const nlohmann::json* rope = nullptr;
  if (auto it = doc.find("rope_parameters"); it != doc.end() && it->is_object()) rope = &*it;

  if (auto it = doc.find("rotary_pct"); it != doc.end() && !it->is_null()) {
    c.rotary_pct = it->get<double>();
  } else if (rope && rope->contains("partial_rotary_factor")) {
    c.rotary_pct = rope->at("partial_rotary_factor").get<double>();
  }
  if (auto it = doc.find("rotary_emb_base"); it != doc.end() && !it->is_null()) {
    c.rotary_base = it->get<double>();
  } else if (rope && rope->contains("rope_theta")) {
    c.rotary_base = rope->at("rope_theta").get<double>();
  }
  c.layer_norm_eps = doc.value("layer_norm_eps", 1e-5);
  c.max_positions = doc.value("max_position_embeddings", 2048);
  c.parallel_residual = doc.value("use_parallel_residual", true);
  c.activation = parse_activation(doc.value("hidden_act", std::string("gelu")));
  c.validate();
  return c;
}

nlohmann::json ModelConfig::to_json() const {
  return {
      {"architectures", {"GPTNeoXForCausalLM"}},
      {"num_hidden_layers", n_layers},
      {"num_attention_heads", n_heads},
      {"hidden_size", d_model},
      {"intermediate_size", intermediate_size},
      {"vocab_size", vocab_size},
      {"rotary_pct", rotary_pct},
      {"rotary_emb_base", rotary_base},
      {"layer_norm_eps", layer_norm_eps},
      {"max_position_embeddings", max_positions},
      {"use_parallel_residual", parallel_residual},
      {"hidden_act", activation_name(activation)},
  };
}

}  // namespace headprobe::neox
