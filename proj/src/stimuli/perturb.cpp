#include "headprobe/stimuli/perturb.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "headprobe/error.hpp"
#include "headprobe/stimuli/align.hpp"
#include "headprobe/stimuli/csv.hpp"

namespace headprobe::stimuli {

std::string to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::kPositional:
      return "positional";
    case PerturbationKind::kPosNounTarget:
      return "pos_noun_target";
    case PerturbationKind::kPosVerbTarget:
      return "pos_verb_target";
  }
  return "positional";
}

std::optional<PerturbationKind> parse_kind(const std::string& s) {
  std::string v = s;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "positional") return PerturbationKind::kPositional;
  if (v == "pos_noun_target" || v == "noun" || v == "n") return PerturbationKind::kPosNounTarget;
  if (v == "pos_verb_target" || v == "verb" || v == "v") return PerturbationKind::kPosVerbTarget;
  return std::nullopt;
}

std::optional<Adjacency> find_adjacent(const std::string& sentence, const std::string& cue, const std::string& target) {
  for (const auto& c : find_word(sentence, cue, false)) {
    std::size_t p = c.end;
    if (p >= sentence.size() || !std::isspace(static_cast<unsigned char>(sentence[p]))) continue;
    while (p < sentence.size() && std::isspace(static_cast<unsigned char>(sentence[p]))) ++p;
    for (const auto& t : find_word(sentence, target, false)) {
      if (t.begin == p) return Adjacency{c.begin, c.end, t.begin, t.end};
    }
  }
  return std::nullopt;
}

VariantResult make_positional_variant(const StimulusPair& pair, const std::string& phrase) {
  VariantResult out;
  const std::pair<const std::string*, const std::string*> sides[] = {{&pair.sentence_a, &pair.cue_a},
                                                                      {&pair.sentence_b, &pair.cue_b}};
  for (const auto& [sentence, cue] : sides) {
    const auto adj = find_adjacent(*sentence, *cue, pair.word);
    if (!adj) {
      out.items.clear();
      out.skipped = "pair " + pair.pair_id + ": cue '" + *cue + "' does not directly precede '" + pair.word + "'";
      return out;
    }
    std::string s = *sentence;
    if (!phrase.empty()) s.insert(adj->cue_end, " " + phrase);
    out.items.push_back({pair.pair_id, PerturbationKind::kPositional, s, *cue, pair.word});
  }
  return out;
}

std::optional<std::string> make_reversed_modnoun(const std::string& sentence, const std::string& cue,
                                                 const std::string& target, std::string* reason) {
  if (cue == target) return sentence;
  auto adj = find_adjacent(sentence, cue, target);
  if (!adj) {
    adj = find_adjacent(sentence, target, cue);
    if (!adj) {
      if (reason) *reason = "'" + cue + "' and '" + target + "' are not adjacent in \"" + sentence + "\"";
      return std::nullopt;
    }
  }
  const std::string first = sentence.substr(adj->cue_begin, adj->cue_end - adj->cue_begin);
  const std::string gap = sentence.substr(adj->cue_end, adj->target_begin - adj->cue_end);
  const std::string second = sentence.substr(adj->target_begin, adj->target_end - adj->target_begin);
  return sentence.substr(0, adj->cue_begin) + second + gap + first + sentence.substr(adj->target_end);
}

PerturbedLoad load_pos_stimuli(const std::filesystem::path& file, PerturbationKind default_kind) {
  const auto records = read_csv(file);
  if (records.empty()) throw SchemaError(file.string() + ": missing header row");
  const auto& header = records.front().fields;
  auto column = [&](const std::string& name, bool required) -> std::optional<std::size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (required) throw SchemaError(file.string() + ": column '" + name + "' not found");
      return std::nullopt;
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t sentence_col = *column("sentence", true);
  const std::size_t target_col = *column("target", true);
  const std::size_t cue_col = *column("cue", true);
  const auto kind_col = column("kind", false);
  const auto id_col = column("base_pair_id", false);

  PerturbedLoad out;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    ++out.rows_read;
    auto reject = [&](std::string why) { out.rejects.push_back({r, std::move(why)}); };
    if (rec.error) {
      reject("malformed CSV: " + *rec.error);
      continue;
    }
    if (rec.fields.size() != header.size()) {
      reject("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(rec.fields.size()));
      continue;
    }
    PerturbedStimulus s;
    s.sentence = rec.fields[sentence_col];
    s.target = rec.fields[target_col];
    s.cue = rec.fields[cue_col];
    s.base_pair_id = id_col ? rec.fields[*id_col] : "row-" + std::to_string(r);
    s.kind = default_kind;
    if (kind_col) {
      const auto k = parse_kind(rec.fields[*kind_col]);
      if (!k) {
        reject("unknown kind '" + rec.fields[*kind_col] + "'");
        continue;
      }
      s.kind = *k;
    }
    if (s.target.empty() || s.cue.empty()) {
      reject("empty target or cue");
      continue;
    }
    if (find_word(s.sentence, s.target, true).empty()) {
      reject("target '" + s.target + "' does not occur in the sentence");
      continue;
    }
    if (find_word(s.sentence, s.cue, true).empty()) {
      reject("cue '" + s.cue + "' does not occur in the sentence");
      continue;
    }
    out.items.push_back(std::move(s));
  }
  return out;
}

void write_perturbed(const std::filesystem::path& file, const std::vector<PerturbedStimulus>& items) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw LoadError("cannot write " + file.string());
  out << csv_row({"base_pair_id", "kind", "sentence", "cue", "target"});
  for (const auto& s : items) out << csv_row({s.base_pair_id, to_string(s.kind), s.sentence, s.cue, s.target});
}

}  // namespace headprobe::stimuli
