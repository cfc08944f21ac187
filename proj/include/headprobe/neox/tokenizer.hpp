#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace headprobe::neox {

// Half-open byte range [begin, end) into EncodedSentence::source_text.
struct ByteRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const ByteRange&, const ByteRange&) = default;
};

struct EncodedSentence {
  std::vector<int> token_ids;
  std::vector<ByteRange> offsets;  // one per token; tiles source_text
  std::string source_text;         // input after the tokenizer's normalizer

  std::size_t size() const { return token_ids.size(); }
};

// Byte-level BPE tokenizer read from a tokenizer.json document (vocabulary
// map + ordered merges + added tokens), matching the GPT-2 / GPT-NeoX
// pre-tokenization regex. Stateless after construction, so one instance can
// be shared across threads.
class Tokenizer {
 public:
  static Tokenizer from_file(const std::filesystem::path& file);
  static Tokenizer from_json(const nlohmann::json& doc);

  // Throws ArgumentError on empty text. Never prepends a BOS token.
  EncodedSentence encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  // Applies the document's normalizer (NFC or none).
  std::string normalize(std::string_view text) const;

  int vocab_size() const { return static_cast<int>(id_to_token_.size()); }
  std::optional<int> token_to_id(std::string_view token) const;

  // Splits `text` into pre-tokens (byte offsets) with the GPT-2 regex.
  static std::vector<ByteRange> pre_tokenize(std::string_view text);

 private:
  struct AddedToken {
    std::string content;
    int id = 0;
  };

  void bpe_word(std::string_view bytes, std::vector<int>& out) const;

  std::unordered_map<std::string, int> vocab_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> merge_ranks_;  // "left right" -> rank
  std::vector<AddedToken> added_;
  std::unordered_map<int, std::size_t> added_by_id_;
  bool nfc_ = false;
};

}  // namespace headprobe::neox
