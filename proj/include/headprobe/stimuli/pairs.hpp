#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace headprobe::stimuli {

enum class AmbiguityClass { kPolysemy, kHomonymy };

struct StimulusPair {
  std::string pair_id;
  std::string word;
  AmbiguityClass cls = AmbiguityClass::kPolysemy;
  bool same_sense = false;
  std::string sentence_a, sentence_b;
  std::string cue_a, cue_b;
  double relatedness = 0.0;  // 1..5
  std::string pos;           // part of speech of the target when the file carries it ("N", "V")

  friend bool operator==(const StimulusPair&, const StimulusPair&) = default;
};

// Maps canonical field names (pair_id, word, class, same_sense, sentence_a,
// sentence_b, cue_a, cue_b, relatedness, pos) to column headers in a file.
// pair_id and pos are optional; without pair_id, ids become "<word>-<row>".
struct Schema {
  std::map<std::string, std::string> columns;

  static Schema canonical();
  // Column names of the published RAW-C CSV.
  static Schema rawc();
  // "field=column,field=column" overrides on top of canonical().
  static Schema parse(const std::string& text);
};

struct Reject {
  std::size_t row = 0;  // 1-based data row (the header is row 0)
  std::string reason;
};

struct PairLoad {
  std::vector<StimulusPair> pairs;
  std::vector<Reject> rejects;
  std::size_t rows_read = 0;
  std::size_t filtered_out = 0;  // dropped by the noun filter

  std::size_t count(AmbiguityClass c) const;
};

// Throws LoadError if unreadable, SchemaError if a required column is missing.
// Rows that break a StimulusPair invariant end up in `rejects`.
PairLoad load_pairs(const std::filesystem::path& file, const Schema& schema = Schema::canonical(),
                    bool nouns_only = false);

// Writes the canonical schema.
void write_pairs(const std::filesystem::path& file, const std::vector<StimulusPair>& pairs);

// JSON lines {"row": n, "reason": "..."}.
void write_rejects(const std::filesystem::path& file, const std::vector<Reject>& rejects);

// Whole-word, case-sensitive occurrence test used by the loaders.
bool contains_word(const std::string& text, const std::string& word);

std::string to_string(AmbiguityClass c);

}  // namespace headprobe::stimuli
