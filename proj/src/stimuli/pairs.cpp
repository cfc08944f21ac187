#include "headprobe/stimuli/pairs.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include <nlohmann/json.hpp>

#include "headprobe/error.hpp"
#include "headprobe/stimuli/align.hpp"
#include "headprobe/stimuli/csv.hpp"

namespace headprobe::stimuli {

namespace {

const char* const kFields[] = {"pair_id", "word", "class", "same_sense", "sentence_a",
                               "sentence_b", "cue_a", "cue_b", "relatedness", "pos"};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::optional<bool> parse_bool(const std::string& raw) {
  const std::string v = lower(trim(raw));
  if (v == "true" || v == "1" || v == "yes" || v == "same") return true;
  if (v == "false" || v == "0" || v == "no" || v == "different") return false;
  return std::nullopt;
}

std::optional<AmbiguityClass> parse_class(const std::string& raw) {
  const std::string v = lower(trim(raw));
  if (v == "polysemy" || v == "polysemous" || v == "p") return AmbiguityClass::kPolysemy;
  if (v == "homonymy" || v == "homonymous" || v == "homonym" || v == "h") return AmbiguityClass::kHomonymy;
  return std::nullopt;
}

std::optional<double> parse_number(const std::string& raw) {
  const std::string v = trim(raw);
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) return std::nullopt;
  return out;
}

}  // namespace

std::string to_string(AmbiguityClass c) { return c == AmbiguityClass::kPolysemy ? "polysemy" : "homonymy"; }

Schema Schema::canonical() {
  Schema s;
  for (const char* f : kFields) s.columns[f] = f;
  return s;
}

Schema Schema::rawc() {
  Schema s;
  s.columns = {{"word", "word"},
               {"class", "ambiguity_type"},
               {"same_sense", "same"},
               {"sentence_a", "sentence1"},
               {"sentence_b", "sentence2"},
               {"cue_a", "disambiguating_word1"},
               {"cue_b", "disambiguating_word2"},
               {"relatedness", "mean_relatedness"},
               {"pos", "Class"}};
  return s;
}

Schema Schema::parse(const std::string& text) {
  Schema s = canonical();
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, end - start);
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw SchemaError("schema mapping '" + item + "' is not field=column");
    const std::string field = trim(item.substr(0, eq));
    if (std::find(std::begin(kFields), std::end(kFields), field) == std::end(kFields)) {
      throw SchemaError("unknown stimulus field '" + field + "'");
    }
    s.columns[field] = trim(item.substr(eq + 1));
    start = end + 1;
  }
  return s;
}

std::size_t PairLoad::count(AmbiguityClass c) const {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [&](const StimulusPair& p) { return p.cls == c; }));
}

bool contains_word(const std::string& text, const std::string& word) {
  return !find_word(text, word, false).empty();
}

PairLoad load_pairs(const std::filesystem::path& file, const Schema& schema, bool nouns_only) {
  const auto records = read_csv(file);
  PairLoad out;
  if (records.empty()) throw SchemaError(file.string() + ": missing header row");
  const auto& header = records.front().fields;

  std::map<std::string, std::size_t> index;
  for (const char* f : kFields) {
    const auto it = schema.columns.find(f);
    const bool optional = std::string(f) == "pair_id" || std::string(f) == "pos";
    if (it == schema.columns.end()) {
      if (optional) continue;
      throw SchemaError("schema has no column for field '" + std::string(f) + "'");
    }
    const auto col = std::find(header.begin(), header.end(), it->second);
    if (col == header.end()) {
      if (optional && it->second == f) continue;
      throw SchemaError(file.string() + ": column '" + it->second + "' (field " + f + ") not found");
    }
    index[f] = static_cast<std::size_t>(col - header.begin());
  }
  if (nouns_only && !index.count("pos")) {
    throw SchemaError(file.string() + ": noun filter needs a part-of-speech column");
  }

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
    auto field = [&](const char* name) -> const std::string& { return rec.fields[index.at(name)]; };

    StimulusPair p;
    p.word = field("word");
    p.pair_id = index.count("pair_id") ? field("pair_id") : p.word + "-" + std::to_string(r);
    p.sentence_a = field("sentence_a");
    p.sentence_b = field("sentence_b");
    p.cue_a = field("cue_a");
    p.cue_b = field("cue_b");
    if (index.count("pos")) p.pos = field("pos");

    const auto cls = parse_class(field("class"));
    if (!cls) {
      reject("unknown ambiguity class '" + field("class") + "'");
      continue;
    }
    p.cls = *cls;
    const auto same = parse_bool(field("same_sense"));
    if (!same) {
      reject("same_sense '" + field("same_sense") + "' is not a boolean");
      continue;
    }
    p.same_sense = *same;
    const auto rel = parse_number(field("relatedness"));
    if (!rel) {
      reject("relatedness '" + field("relatedness") + "' is not a number");
      continue;
    }
    if (!(*rel >= 1.0 && *rel <= 5.0)) {
      reject("relatedness " + field("relatedness") + " outside [1, 5]");
      continue;
    }
    p.relatedness = *rel;
    if (p.word.empty() || p.cue_a.empty() || p.cue_b.empty()) {
      reject("empty word or cue");
      continue;
    }
    if (find_word(p.sentence_a, p.word, true).empty() || find_word(p.sentence_b, p.word, true).empty()) {
      reject("word '" + p.word + "' does not occur in both sentences");
      continue;
    }
    if (find_word(p.sentence_a, p.cue_a, true).empty()) {
      reject("cue_a '" + p.cue_a + "' does not occur in sentence_a");
      continue;
    }
    if (find_word(p.sentence_b, p.cue_b, true).empty()) {
      reject("cue_b '" + p.cue_b + "' does not occur in sentence_b");
      continue;
    }
    if (nouns_only) {
      const std::string pos = lower(trim(p.pos));
      if (pos != "n" && pos != "noun") {
        ++out.filtered_out;
        continue;
      }
    }
    out.pairs.push_back(std::move(p));
  }
  return out;
}

void write_pairs(const std::filesystem::path& file, const std::vector<StimulusPair>& pairs) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw LoadError("cannot write " + file.string());
  out << csv_row(std::vector<std::string>(std::begin(kFields), std::end(kFields)));
  for (const auto& p : pairs) {
    out << csv_row({p.pair_id, p.word, to_string(p.cls), p.same_sense ? "true" : "false", p.sentence_a, p.sentence_b,
                    p.cue_a, p.cue_b, format_double(p.relatedness), p.pos});
  }
}

void write_rejects(const std::filesystem::path& file, const std::vector<Reject>& rejects) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw LoadError("cannot write " + file.string());
  for (const auto& r : rejects) out << nlohmann::json{{"row", r.row}, {"reason", r.reason}}.dump() << '\n';
}

}  // namespace headprobe::stimuli
