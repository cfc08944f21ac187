#include "headprobe/stimuli/align.hpp"

#include <algorithm>
#include <cctype>

#include "headprobe/error.hpp"

namespace headprobe::stimuli {

namespace {

bool word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

bool ieq(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i]))) return false;
  }
  return true;
}

std::vector<WordMatch> scan(std::string_view text, std::string_view word, bool folded) {
  std::vector<WordMatch> out;
  if (word.empty() || word.size() > text.size()) return out;
  for (std::size_t p = 0; p + word.size() <= text.size(); ++p) {
    const std::string_view candidate = text.substr(p, word.size());
    if (folded ? !ieq(candidate, word) : candidate != word) continue;
    if (p > 0 && word_byte(static_cast<unsigned char>(text[p - 1]))) continue;
    const std::size_t e = p + word.size();
    if (e < text.size() && word_byte(static_cast<unsigned char>(text[e]))) continue;
    out.push_back({p, e, folded});
  }
  return out;
}

bool preferred(std::string_view text, const WordMatch& m) {
  return m.begin == 0 || std::isspace(static_cast<unsigned char>(text[m.begin - 1]));
}

WordMatch choose(std::string_view text, const std::vector<WordMatch>& matches, bool last) {
  std::vector<WordMatch> pool;
  for (const auto& m : matches) {
    if (preferred(text, m)) pool.push_back(m);
  }
  if (pool.empty()) pool = matches;
  return last ? pool.back() : pool.front();
}

}  // namespace

std::vector<WordMatch> find_word(std::string_view text, std::string_view word, bool case_fallback) {
  auto exact = scan(text, word, false);
  if (!exact.empty() || !case_fallback) return exact;
  return scan(text, word, true);
}

TokenSpan token_span(const neox::EncodedSentence& encoded, std::size_t byte_begin, std::size_t byte_end) {
  TokenSpan span{-1, -1};
  for (std::size_t i = 0; i < encoded.offsets.size(); ++i) {
    const auto& r = encoded.offsets[i];
    if (r.begin < byte_end && r.end > byte_begin) {
      if (span.begin < 0) span.begin = static_cast<int>(i);
      span.end = static_cast<int>(i) + 1;
    }
  }
  if (span.begin < 0) return TokenSpan{};
  return span;
}

AlignedSentence align_spans(const neox::Tokenizer& tokenizer, const std::string& sentence, const std::string& target,
                            const std::string& cue) {
  AlignedSentence out;
  out.encoded = tokenizer.encode(sentence);
  const std::string& text = out.encoded.source_text;
  const std::string t = tokenizer.normalize(target);
  const std::string c = tokenizer.normalize(cue);

  const auto target_matches = find_word(text, t, true);
  if (target_matches.empty()) throw AlignmentError("target '" + target + "' not found in \"" + sentence + "\"");
  const auto cue_matches = find_word(text, c, true);
  if (cue_matches.empty()) throw AlignmentError("cue '" + cue + "' not found in \"" + sentence + "\"");

  const WordMatch tm = choose(text, target_matches, true);
  WordMatch cm = choose(text, cue_matches, false);
  if (cm.begin == tm.begin && cue_matches.size() > 1) {
    // Same word as cue and target: take a different occurrence for the cue.
    for (const auto& m : cue_matches) {
      if (m.begin != tm.begin) {
        cm = m;
        break;
      }
    }
  }
  if (tm.case_folded) out.warnings.push_back("target '" + target + "' matched case-insensitively");
  if (cm.case_folded) out.warnings.push_back("cue '" + cue + "' matched case-insensitively");

  out.target_span = token_span(out.encoded, tm.begin, tm.end);
  out.cue_span = token_span(out.encoded, cm.begin, cm.end);
  if (out.target_span.begin < out.cue_span.end && out.cue_span.begin < out.target_span.end) {
    throw AlignmentError("cue '" + cue + "' and target '" + target + "' share tokens in \"" + sentence + "\"");
  }
  return out;
}

}  // namespace headprobe::stimuli
