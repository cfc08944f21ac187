#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "headprobe/neox/tokenizer.hpp"

namespace headprobe::stimuli {

// Half-open token index range.
struct TokenSpan {
  int begin = 0;
  int end = 0;

  int size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct AlignedSentence {
  neox::EncodedSentence encoded;
  TokenSpan target_span;
  TokenSpan cue_span;
  std::vector<std::string> warnings;
};

struct WordMatch {
  std::size_t begin = 0;  // byte offsets into the searched text
  std::size_t end = 0;
  bool case_folded = false;
};

// Whole-word occurrences of `word` in `text` (neighbours must not be ASCII
// letters, digits, or non-ASCII bytes). Falls back to ASCII case-insensitive
// matching, flagged in the result, when there is no exact match and
// `case_fallback` is set.
std::vector<WordMatch> find_word(std::string_view text, std::string_view word, bool case_fallback);

// Tokens whose byte ranges overlap [byte_begin, byte_end).
TokenSpan token_span(const neox::EncodedSentence& encoded, std::size_t byte_begin, std::size_t byte_end);

// Encodes `sentence` and locates the target and cue. Occurrences preceded by a
// space or at the start of the sentence are preferred; among those the last
// one is taken for the target and the first for the cue. Throws AlignmentError
// naming the word when it does not occur or when the spans overlap.
AlignedSentence align_spans(const neox::Tokenizer& tokenizer, const std::string& sentence, const std::string& target,
                            const std::string& cue);

}  // namespace headprobe::stimuli
