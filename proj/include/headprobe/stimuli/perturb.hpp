#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "headprobe/stimuli/pairs.hpp"

namespace headprobe::stimuli {

enum class PerturbationKind { kPositional, kPosNounTarget, kPosVerbTarget };

struct PerturbedStimulus {
  std::string base_pair_id;
  PerturbationKind kind = PerturbationKind::kPositional;
  std::string sentence;
  std::string cue;
  std::string target;

  friend bool operator==(const PerturbedStimulus&, const PerturbedStimulus&) = default;
};

std::string to_string(PerturbationKind k);
// Accepts the to_string names plus "noun"/"verb" shorthands (naming the target).
std::optional<PerturbationKind> parse_kind(const std::string& s);

// Byte offset of `cue` when it is directly followed (after whitespace only) by
// `target` as whole words; the first such occurrence.
struct Adjacency {
  std::size_t cue_begin, cue_end, target_begin, target_end;
};
std::optional<Adjacency> find_adjacent(const std::string& sentence, const std::string& cue, const std::string& target);

struct VariantResult {
  std::vector<PerturbedStimulus> items;  // one per sentence of the pair, or empty
  std::optional<std::string> skipped;
};

// Inserts `phrase` between cue and target in both sentences of the pair
// ("tense atmosphere" -> "tense kind of atmosphere"). Pairs where the cue does
// not directly precede the target are skipped with a reason.
VariantResult make_positional_variant(const StimulusPair& pair, const std::string& phrase = "kind of");

// Swaps adjacent cue and target ("wooden beam" -> "beam wooden"). If the pair
// already appears as "target cue" it is swapped back, so applying the function
// twice restores the sentence. Returns nullopt, with `reason` filled, when
// neither order occurs.
std::optional<std::string> make_reversed_modnoun(const std::string& sentence, const std::string& cue,
                                                 const std::string& target, std::string* reason = nullptr);

struct PerturbedLoad {
  std::vector<PerturbedStimulus> items;
  std::vector<Reject> rejects;
  std::size_t rows_read = 0;
};

// Columns sentence, target, cue and (optionally) kind and base_pair_id.
// Rows without a kind column get `default_kind`.
PerturbedLoad load_pos_stimuli(const std::filesystem::path& file,
                               PerturbationKind default_kind = PerturbationKind::kPosNounTarget);

void write_perturbed(const std::filesystem::path& file, const std::vector<PerturbedStimulus>& items);

}  // namespace headprobe::stimuli
