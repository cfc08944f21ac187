#include "headprobe/neox/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <regex>

#include "headprobe/error.hpp"
#include "headprobe/neox/safetensors.hpp"

namespace headprobe::neox {

namespace fs = std::filesystem;

std::optional<std::int64_t> step_from_name(const std::string& name) {
  static const std::regex pattern(R"(step(\d+)$)");
  std::smatch m;
  if (!std::regex_search(name, m, pattern)) return std::nullopt;
  return std::stoll(m[1].str());
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("checkpoint directory not found: " + dir.string());

  const fs::path config_path = dir / "config.json";
  std::ifstream in(config_path);
  if (!in) throw LoadError("cannot open " + config_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(config_path.string() + ": " + e.what());
  }
  ModelConfig config = ModelConfig::from_json(doc);
  config.validate();

  Tokenizer tokenizer = Tokenizer::from_file(dir / "tokenizer.json");

  std::vector<fs::path> shards;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".safetensors") shards.push_back(entry.path());
  }
  if (shards.empty()) {
    const bool has_bin = fs::exists(dir / "pytorch_model.bin");
    throw LoadError("no .safetensors files in " + dir.string() +
                    (has_bin ? " (only pytorch_model.bin; convert it with tools/convert_checkpoint.py)" : ""));
  }
  std::sort(shards.begin(), shards.end());

  std::map<std::string, Tensor> named;
  for (const auto& shard : shards) {
    for (auto& [name, tensor] : read_safetensors(shard, true)) named.insert_or_assign(name, std::move(tensor));
  }
  ModelWeights weights = ModelWeights::from_named(config, std::move(named));
  weights.step = step_from_name(fs::absolute(dir).lexically_normal().filename().string());
  if (!weights.step) weights.step = step_from_name(fs::absolute(dir).lexically_normal().parent_path().filename().string());
  return Checkpoint{std::move(config), std::move(weights), std::move(tokenizer)};
}

}  // namespace headprobe::neox
