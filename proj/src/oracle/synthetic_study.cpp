#include "headprobe/oracle/synthetic_study.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "headprobe/neox/safetensors.hpp"
#include "headprobe/oracle/random_model.hpp"
#include "headprobe/stimuli/csv.hpp"

namespace headprobe::oracle {

namespace fs = std::filesystem;

namespace {

std::string utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

const std::vector<std::string> kTargets{"lamb", "case", "bank", "bark", "pitch", "seal", "ring", "match",
                                        "plant", "spring", "club", "bat", "note", "fan", "cell", "draft"};
const std::vector<std::string> kCues{"marinated", "friendly", "wooden", "leather", "solid", "tense",
                                     "golden", "burnt", "steel", "quiet", "bright", "muddy"};
const std::vector<std::string> kFrames{"She saw the {} yesterday.", "They liked the {} a lot.",
                                       "He found a {} outside.", "We kept the {} inside."};

std::string fill(const std::string& frame, const std::string& phrase) {
  auto pos = frame.find("{}");
  return frame.substr(0, pos) + phrase + frame.substr(pos + 2);
}

}  // namespace

nlohmann::json byte_level_tokenizer() {
  // GPT-2 byte to printable code point table.
  std::vector<char32_t> table(256);
  std::vector<bool> direct(256, false);
  for (int b = '!'; b <= '~'; ++b) direct[b] = true;
  for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
  for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
  int extra = 0;
  for (int b = 0; b < 256; ++b) table[b] = direct[b] ? static_cast<char32_t>(b) : static_cast<char32_t>(256 + extra++);
  nlohmann::json vocab = nlohmann::json::object();
  for (int b = 0; b < 256; ++b) vocab[utf8(table[b])] = b;
  return {{"version", "1.0"},
          {"added_tokens", nlohmann::json::array()},
          {"normalizer", nullptr},
          {"pre_tokenizer", {{"type", "ByteLevel"}, {"add_prefix_space", false}, {"use_regex", true}}},
          {"model", {{"type", "BPE"}, {"vocab", vocab}, {"merges", nlohmann::json::array()}}}};
}

SyntheticStudy make_synthetic_study(const fs::path& root, const SyntheticOptions& o) {
  SyntheticStudy study;
  study.root = root;
  fs::create_directories(root);
  std::mt19937_64 rng(o.seed);

  neox::ModelConfig config;
  config.n_layers = o.n_layers;
  config.n_heads = o.n_heads;
  config.d_model = o.d_model;
  config.d_head = o.d_model / o.n_heads;
  config.vocab_size = 256;
  config.intermediate_size = 2 * o.d_model;
  config.rotary_pct = 0.5;
  config.max_positions = 128;
  config.parallel_residual = true;
  const std::string tokenizer = byte_level_tokenizer().dump();

  const double last = std::log1p(static_cast<double>(o.steps.back()));
  for (int m = 0; m < o.n_models; ++m) {
    const std::string label = "synth-" + std::string(1, static_cast<char>('a' + m));
    study.models.push_back(label);
    auto start = random_weights(config, rng, 0.4).to_named();
    auto end = random_weights(config, rng, 0.4).to_named();
    for (auto step : o.steps) {
      const float t = last > 0 ? static_cast<float>(std::log1p(static_cast<double>(step)) / last) : 1.0f;
      std::map<std::string, neox::Tensor> named;
      for (const auto& [name, a] : start) {
        neox::Tensor out = a;
        const auto& b = end.at(name);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = (1.0f - t) * a.data[i] + t * b.data[i];
        named.emplace(name, std::move(out));
      }
      const fs::path dir = root / "checkpoints" / label / ("step" + std::to_string(step));
      fs::create_directories(dir);
      write_text(dir / "config.json", config.to_json().dump(1));
      write_text(dir / "tokenizer.json", tokenizer);
      neox::write_safetensors(dir / "model.safetensors", named);
    }
  }

  std::uniform_int_distribution<std::size_t> pick_cue(0, kCues.size() - 1), pick_frame(0, kFrames.size() - 1);
  std::uniform_real_distribution<double> rel(1.0, 5.0);
  std::string rawc = stimuli::csv_row({"pair_id", "word", "class", "same_sense", "sentence_a", "sentence_b", "cue_a",
                                       "cue_b", "relatedness"});
  std::string pos = stimuli::csv_row({"sentence", "target", "cue", "kind"});
  for (int i = 0; i < o.n_pairs; ++i) {
    const std::string& word = kTargets[static_cast<std::size_t>(i) % kTargets.size()];
    const std::string& cue_a = kCues[pick_cue(rng)];
    std::string cue_b = kCues[pick_cue(rng)];
    if (cue_b == cue_a) cue_b = kCues[(pick_cue(rng) + 1) % kCues.size()];
    const std::string frame = kFrames[pick_frame(rng)];
    const double r = std::round(rel(rng) * 100.0) / 100.0;
    rawc += stimuli::csv_row({"p" + std::to_string(i + 1), word, i % 3 == 0 ? "homonymy" : "polysemy",
                              r > 4.0 ? "1" : "0", fill(frame, cue_a + " " + word), fill(frame, cue_b + " " + word),
                              cue_a, cue_b, stimuli::format_double(r)});
    pos += stimuli::csv_row({"He " + cue_a + " the " + word + ".", word, cue_a, "noun"});
    pos += stimuli::csv_row({"The " + word + " was " + cue_b + ".", cue_b, word, "verb"});
  }
  write_text(root / "data" / "rawc.csv", rawc);
  write_text(root / "data" / "pos.csv", pos);

  std::string steps;
  for (auto s : o.steps) steps += (steps.empty() ? "" : ", ") + std::to_string(s);
  std::string toml = "output_dir = \"results\"\nworkers = " + std::to_string(o.workers) +
                     "\nschedule = [" + steps +
                     "]\nanalyses = [\"phase1\", \"stress_1back\", \"stress_positional\", \"stress_pos\", "
                     "\"composite\", \"ablation\", \"modnoun\"]\n\n";
  for (const auto& label : study.models) {
    toml += "[[models]]\nlabel = \"" + label + "\"\npath = \"checkpoints/" + label + "\"\nrun = \"" + label + "\"\n\n";
  }
  toml +=
      "[datasets]\nrawc = \"data/rawc.csv\"\nrawc_schema = \"canonical\"\nnouns_only = false\n"
      "pos = \"data/pos.csv\"\npositional_phrase = \"kind of\"\n\n"
      "[ablation]\nkinds = [\"zero\", \"step1_copy\"]\nsource_step = 1\n"
      "targets = [\"(" + std::to_string(o.n_layers) + ",1)\", \"(" + std::to_string(o.n_layers) + ",1)+(" +
      std::to_string(o.n_layers) + ",2)\"]\nbaselines = [\"(1,1)\", \"(1,2)\"]\n";
  study.config_file = root / "study.toml";
  write_text(study.config_file, toml);
  return study;
}

}  // namespace headprobe::oracle
