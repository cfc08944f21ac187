#include "headprobe/neox/tokenizer.hpp"

#include <array>
#include <fstream>
#include <limits>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "headprobe/error.hpp"

namespace headprobe::neox {

namespace {

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

struct CodePoint {
  char32_t value;
  std::size_t offset;  // byte offset of the first byte
};

// Invalid sequences decode byte-by-byte to U+FFFD so that offsets stay exact.
std::vector<CodePoint> decode_utf8(std::string_view s) {
  std::vector<CodePoint> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xe ? 3 : (b0 >> 3) == 0x1e ? 4 : 0;
    bool ok = len != 0 && i + len <= s.size();
    char32_t cp = 0;
    if (ok) {
      cp = len == 1 ? b0 : len == 2 ? (b0 & 0x1f) : len == 3 ? (b0 & 0x0f) : (b0 & 0x07);
      for (std::size_t k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xc0) != 0x80) {
          ok = false;
          break;
        }
        cp = (cp << 6) | (b & 0x3f);
      }
    }
    if (!ok) {
      out.push_back({0xfffd, i});
      ++i;
      continue;
    }
    out.push_back({cp, i});
    i += len;
  }
  return out;
}

// GPT-2 byte <-> printable code point table.
struct ByteTable {
  std::array<std::string, 256> encoded;
  std::unordered_map<char32_t, unsigned char> decoded;

  ByteTable() {
    std::array<char32_t, 256> cp{};
    std::array<bool, 256> direct{};
    for (int b = '!'; b <= '~'; ++b) direct[b] = true;
    for (int b = 0xa1; b <= 0xac; ++b) direct[b] = true;
    for (int b = 0xae; b <= 0xff; ++b) direct[b] = true;
    char32_t next = 256;
    for (int b = 0; b < 256; ++b) cp[b] = direct[b] ? static_cast<char32_t>(b) : next++;
    for (int b = 0; b < 256; ++b) {
      append_utf8(encoded[b], cp[b]);
      decoded[cp[b]] = static_cast<unsigned char>(b);
    }
  }
};

const ByteTable& byte_table() {
  static const ByteTable table;
  return table;
}

enum class CharClass { kSpace, kLetter, kNumber, kOther };

CharClass classify(char32_t c) {
  const auto cp = static_cast<UChar32>(c);
  if (u_isUWhiteSpace(cp)) return CharClass::kSpace;
  const auto mask = U_GET_GC_MASK(cp);
  if (mask & U_GC_L_MASK) return CharClass::kLetter;
  if (mask & U_GC_N_MASK) return CharClass::kNumber;
  return CharClass::kOther;
}

std::string merge_key(std::string_view a, std::string_view b) {
  std::string k;
  k.reserve(a.size() + b.size() + 1);
  k.append(a).push_back(' ');
  k.append(b);
  return k;
}

}  // namespace

std::vector<ByteRange> Tokenizer::pre_tokenize(std::string_view text) {
  const auto cps = decode_utf8(text);
  const std::size_t n = cps.size();
  std::vector<CharClass> cls(n);
  for (std::size_t i = 0; i < n; ++i) cls[i] = classify(cps[i].value);
  auto byte_at = [&](std::size_t i) { return i < n ? cps[i].offset : text.size(); };

  static constexpr std::array<std::u32string_view, 7> kContractions = {U"s", U"t", U"re", U"ve", U"m", U"ll", U"d"};

  std::vector<ByteRange> out;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    // 's|'t|'re|'ve|'m|'ll|'d
    if (cps[i].value == U'\'') {
      for (auto c : kContractions) {
        if (i + 1 + c.size() <= n) {
          bool match = true;
          for (std::size_t k = 0; k < c.size(); ++k) {
            if (cps[i + 1 + k].value != c[k]) {
              match = false;
              break;
            }
          }
          if (match) {
            j = i + 1 + c.size();
            break;
          }
        }
      }
    }
    if (j == i) {
      // ' ?' prefix applies only to a literal space.
      const bool lead = cps[i].value == U' ' && i + 1 < n;
      const std::size_t body = lead ? i + 1 : i;
      const CharClass c = cls[body];
      if (c != CharClass::kSpace) {
        j = body;
        while (j < n && cls[j] == c) ++j;
      } else if (cls[i] == CharClass::kSpace) {
        // \s+(?!\S) then \s+
        std::size_t k = i;
        while (k < n && cls[k] == CharClass::kSpace) ++k;
        const std::size_t run = k - i;
        j = (k == n || run == 1) ? k : k - 1;
      }
    }
    out.push_back({byte_at(i), byte_at(j)});
    i = j;
  }
  return out;
}

Tokenizer Tokenizer::from_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw LoadError(file.string() + ": cannot open tokenizer document");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(file.string() + ": malformed tokenizer JSON: " + e.what());
  }
  try {
    return from_json(doc);
  } catch (const Error& e) {
    throw LoadError(file.string() + ": " + e.what());
  }
}

Tokenizer Tokenizer::from_json(const nlohmann::json& doc) {
  Tokenizer t;
  try {
    const auto& model = doc.at("model");
    if (model.contains("type") && model.at("type") != "BPE") {
      throw LoadError("unsupported tokenizer model type " + model.at("type").dump());
    }
    int max_id = -1;
    for (const auto& [token, id] : model.at("vocab").items()) {
      t.vocab_.emplace(token, id.get<int>());
      max_id = std::max(max_id, id.get<int>());
    }
    if (doc.contains("added_tokens")) {
      for (const auto& a : doc.at("added_tokens")) {
        AddedToken tok{a.at("content").get<std::string>(), a.at("id").get<int>()};
        if (tok.content.empty()) continue;
        t.added_by_id_.emplace(tok.id, t.added_.size());
        t.added_.push_back(std::move(tok));
        max_id = std::max(max_id, t.added_.back().id);
      }
    }
    t.id_to_token_.assign(static_cast<std::size_t>(max_id + 1), std::string());
    for (const auto& [token, id] : t.vocab_) t.id_to_token_[static_cast<std::size_t>(id)] = token;
    for (const auto& a : t.added_) t.id_to_token_[static_cast<std::size_t>(a.id)] = a.content;

    int rank = 0;
    for (const auto& m : model.at("merges")) {
      std::string key;
      if (m.is_string()) {
        const auto s = m.get<std::string>();
        const auto sp = s.find(' ');
        if (sp == std::string::npos) throw LoadError("malformed merge entry '" + s + "'");
        key = merge_key(std::string_view(s).substr(0, sp), std::string_view(s).substr(sp + 1));
      } else {
        key = merge_key(m.at(0).get<std::string>(), m.at(1).get<std::string>());
      }
      t.merge_ranks_.emplace(std::move(key), rank++);
    }

    if (doc.contains("normalizer") && !doc.at("normalizer").is_null()) {
      const auto type = doc.at("normalizer").value("type", std::string());
      if (type == "NFC") {
        t.nfc_ = true;
      } else {
        throw LoadError("unsupported normalizer type '" + type + "'");
      }
    }
    if (doc.contains("pre_tokenizer") && !doc.at("pre_tokenizer").is_null()) {
      const auto& pre = doc.at("pre_tokenizer");
      if (pre.value("type", std::string()) != "ByteLevel") {
        throw LoadError("unsupported pre_tokenizer " + pre.value("type", std::string("?")));
      }
      if (pre.value("add_prefix_space", false)) throw LoadError("add_prefix_space=true is not supported");
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed tokenizer document: ") + e.what());
  }
  return t;
}

std::optional<int> Tokenizer::token_to_id(std::string_view token) const {
  auto it = vocab_.find(std::string(token));
  if (it != vocab_.end()) return it->second;
  for (const auto& a : added_) {
    if (a.content == token) return a.id;
  }
  return std::nullopt;
}

std::string Tokenizer::normalize(std::string_view text) const {
  if (!nfc_) return std::string(text);
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  const auto src = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  if (nfc->isNormalized(src, status) && U_SUCCESS(status)) return std::string(text);
  status = U_ZERO_ERROR;
  const icu::UnicodeString dst = nfc->normalize(src, status);
  if (U_FAILURE(status)) throw ArgumentError("text could not be NFC-normalized");
  std::string out;
  dst.toUTF8String(out);
  return out;
}

void Tokenizer::bpe_word(std::string_view bytes, std::vector<int>& out) const {
  const auto& table = byte_table();
  std::vector<std::string> symbols;
  symbols.reserve(bytes.size());
  for (char c : bytes) symbols.push_back(table.encoded[static_cast<unsigned char>(c)]);

  while (symbols.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    std::size_t best = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_ranks_.find(merge_key(symbols[i], symbols[i + 1]));
      if (it != merge_ranks_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = i;
      }
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    const std::string left = symbols[best], right = symbols[best + 1];
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size();) {
      if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
        merged.push_back(left + right);
        i += 2;
      } else {
        merged.push_back(std::move(symbols[i]));
        ++i;
      }
    }
    symbols = std::move(merged);
  }
  for (const auto& s : symbols) {
    auto it = vocab_.find(s);
    if (it == vocab_.end()) throw Error("BPE symbol missing from vocabulary: '" + s + "'");
    out.push_back(it->second);
  }
}

EncodedSentence Tokenizer::encode(std::string_view text) const {
  if (text.empty()) throw ArgumentError("encode: empty text");
  EncodedSentence enc;
  enc.source_text = normalize(text);
  const std::string& s = enc.source_text;

  auto encode_plain = [&](std::size_t begin, std::size_t end) {
    for (const auto& piece : pre_tokenize(std::string_view(s).substr(begin, end - begin))) {
      const std::size_t before = enc.token_ids.size();
      bpe_word(std::string_view(s).substr(begin + piece.begin, piece.end - piece.begin), enc.token_ids);
      // Byte-level symbols map 1:1 to bytes, so token lengths are symbol counts.
      std::size_t cursor = begin + piece.begin;
      for (std::size_t k = before; k < enc.token_ids.size(); ++k) {
        std::size_t len = 0;
        for (unsigned char b : id_to_token_[static_cast<std::size_t>(enc.token_ids[k])]) {
          if ((b & 0xc0) != 0x80) ++len;
        }
        enc.offsets.push_back({cursor, cursor + len});
        cursor += len;
      }
    }
  };

  // Split around added tokens: leftmost occurrence, longest content wins.
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t best_at = std::string::npos, best_len = 0;
    int best_id = -1;
    for (const auto& a : added_) {
      const auto at = s.find(a.content, pos);
      if (at == std::string::npos) continue;
      if (at < best_at || (at == best_at && a.content.size() > best_len)) {
        best_at = at;
        best_len = a.content.size();
        best_id = a.id;
      }
    }
    if (best_id < 0) {
      encode_plain(pos, s.size());
      break;
    }
    if (best_at > pos) encode_plain(pos, best_at);
    enc.token_ids.push_back(best_id);
    enc.offsets.push_back({best_at, best_at + best_len});
    pos = best_at + best_len;
  }
  return enc;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  const auto& table = byte_table();
  std::string out;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
      throw ArgumentError("decode: token id " + std::to_string(id) + " out of range");
    }
    if (added_by_id_.count(id)) {
      out += added_[added_by_id_.at(id)].content;
      continue;
    }
    for (const auto& cp : decode_utf8(id_to_token_[static_cast<std::size_t>(id)])) {
      auto it = table.decoded.find(cp.value);
      if (it != table.decoded.end()) {
        out.push_back(static_cast<char>(it->second));
      } else {
        append_utf8(out, cp.value);
      }
    }
  }
  return out;
}

}  // namespace headprobe::neox
