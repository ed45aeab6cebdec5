#include "ckprobe/tokenizer.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/locid.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <array>
#include <fstream>

#include "ckprobe/errors.hpp"

namespace ckprobe {

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty()) throw ConfigError("vocabulary is empty");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) {
      throw ConfigError("empty vocabulary entry at line " +
                        std::to_string(i + 1));
    }
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) {
      throw ConfigError("duplicate vocabulary token '" + tokens_[i] +
                        "' at lines " + std::to_string(it->second + 1) +
                        " and " + std::to_string(i + 1));
    }
  }
  auto special = [this](std::string_view name) {
    auto id = find(name);
    if (!id) {
      throw ConfigError("vocabulary lacks special token " + std::string(name));
    }
    return *id;
  };
  cls_id_ = special(kClsToken);
  sep_id_ = special(kSepToken);
  mask_id_ = special(kMaskToken);
  unk_id_ = special(kUnkToken);
}

Vocab Vocab::load(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(std::move(line));
  }
  return Vocab(std::move(tokens));
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open vocabulary " + path.string());
  return load(in);
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool Vocab::is_special(TokenId id) const noexcept {
  return id == cls_id_ || id == sep_id_ || id == mask_id_ || id == unk_id_;
}

void TokenSeq::append(const TokenSeq& other) {
  ids.insert(ids.end(), other.ids.begin(), other.ids.end());
  strings.insert(strings.end(), other.strings.begin(), other.strings.end());
}

namespace {

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const auto length = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    out.push_back(c < 0 ? U'\uFFFD' : static_cast<char32_t>(c));
  }
  return out;
}

void append_utf8(std::string& out, char32_t c) {
  std::array<uint8_t, U8_MAX_LENGTH> buf{};
  int32_t n = 0;
  U8_APPEND_UNSAFE(buf.data(), n, static_cast<UChar32>(c));
  out.append(reinterpret_cast<const char*>(buf.data()), n);
}

std::string encode_utf8(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : s) append_utf8(out, c);
  return out;
}

icu::UnicodeString to_icu(std::u32string_view s) {
  return icu::UnicodeString::fromUTF32(
      reinterpret_cast<const UChar32*>(s.data()),
      static_cast<int32_t>(s.size()));
}

std::u32string from_icu(const icu::UnicodeString& s) {
  std::u32string out;
  for (int32_t i = 0; i < s.length(); i = s.moveIndex32(i, 1)) {
    out.push_back(static_cast<char32_t>(s.char32At(i)));
  }
  return out;
}

bool is_whitespace(char32_t c) {
  if (c == U' ' || c == U'\t' || c == U'\n' || c == U'\r') return true;
  return u_charType(static_cast<UChar32>(c)) == U_SPACE_SEPARATOR;
}

// Separators for the final split. Broader than is_whitespace so that line and
// paragraph separators surviving the cleaning pass still break words.
bool is_split_space(char32_t c) {
  return is_whitespace(c) || u_isUWhiteSpace(static_cast<UChar32>(c));
}

bool is_control(char32_t c) {
  if (c == U'\t' || c == U'\n' || c == U'\r') return false;
  switch (u_charType(static_cast<UChar32>(c))) {
    case U_CONTROL_CHAR:
    case U_FORMAT_CHAR:
    case U_SURROGATE:
    case U_PRIVATE_USE_CHAR:
    case U_UNASSIGNED:
      return true;
    default:
      return false;
  }
}

bool is_punctuation(char32_t c) {
  if ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
      (c >= 123 && c <= 126)) {
    return true;
  }
  switch (u_charType(static_cast<UChar32>(c))) {
    case U_DASH_PUNCTUATION:
    case U_START_PUNCTUATION:
    case U_END_PUNCTUATION:
    case U_CONNECTOR_PUNCTUATION:
    case U_OTHER_PUNCTUATION:
    case U_INITIAL_PUNCTUATION:
    case U_FINAL_PUNCTUATION:
      return true;
    default:
      return false;
  }
}

// CJK Unified Ideographs blocks. Hiragana, Katakana and Hangul are not
// included; they are space-separated like any other script.
bool is_chinese_char(char32_t c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) ||
         (c >= 0x20000 && c <= 0x2A6DF) || (c >= 0x2A700 && c <= 0x2B73F) ||
         (c >= 0x2B740 && c <= 0x2B81F) || (c >= 0x2B820 && c <= 0x2CEAF) ||
         (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x2F800 && c <= 0x2FA1F);
}

std::u32string lower_and_strip_accents(std::u32string_view word) {
  icu::UnicodeString us = to_icu(word);
  us.toLower(icu::Locale::getRoot());
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfd = icu::Normalizer2::getNFDInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFD normalizer unavailable");
  icu::UnicodeString decomposed = nfd->normalize(us, status);
  if (U_FAILURE(status)) throw Error("ICU NFD normalization failed");
  std::u32string out;
  for (char32_t c : from_icu(decomposed)) {
    if (u_charType(static_cast<UChar32>(c)) != U_NON_SPACING_MARK) {
      out.push_back(c);
    }
  }
  return out;
}

std::vector<std::u32string> split_whitespace(std::u32string_view text) {
  std::vector<std::u32string> words;
  std::u32string current;
  for (char32_t c : text) {
    if (is_split_space(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

}  // namespace

std::vector<std::string> basic_tokenize(std::string_view text,
                                        const BasicTokenizerOptions& opts) {
  std::u32string cleaned;
  for (char32_t c : decode_utf8(text)) {
    if (c == 0 || c == 0xFFFD || is_control(c)) continue;
    if (is_whitespace(c)) {
      cleaned.push_back(U' ');
    } else if (opts.split_chinese_chars && is_chinese_char(c)) {
      cleaned.push_back(U' ');
      cleaned.push_back(c);
      cleaned.push_back(U' ');
    } else {
      cleaned.push_back(c);
    }
  }

  std::vector<std::string> out;
  for (const auto& word : split_whitespace(cleaned)) {
    std::u32string normalized = lower_and_strip_accents(word);
    std::u32string current;
    for (char32_t c : normalized) {
      if (is_punctuation(c)) {
        if (!current.empty()) out.push_back(encode_utf8(current));
        current.clear();
        out.push_back(encode_utf8(std::u32string(1, c)));
      } else if (is_split_space(c)) {
        if (!current.empty()) out.push_back(encode_utf8(current));
        current.clear();
      } else {
        current.push_back(c);
      }
    }
    if (!current.empty()) out.push_back(encode_utf8(current));
  }
  return out;
}

TokenSeq wordpiece_tokenize(std::string_view word, const Vocab& vocab) {
  TokenSeq unk;
  unk.push_back(vocab.unk_id(), std::string(kUnkToken));

  // Byte offsets of every code point boundary.
  std::vector<std::size_t> bounds;
  const auto* bytes = reinterpret_cast<const uint8_t*>(word.data());
  const auto length = static_cast<int32_t>(word.size());
  for (int32_t i = 0; i < length;) {
    bounds.push_back(static_cast<std::size_t>(i));
    U8_FWD_1(bytes, i, length);
  }
  const std::size_t n_chars = bounds.size();
  bounds.push_back(word.size());
  if (n_chars == 0 || n_chars > kMaxWordChars) return unk;

  TokenSeq out;
  std::string candidate;
  std::size_t start = 0;
  while (start < n_chars) {
    std::size_t end = n_chars;
    std::optional<TokenId> match;
    while (start < end) {
      candidate.clear();
      if (start > 0) candidate = "##";
      candidate.append(word.substr(bounds[start], bounds[end] - bounds[start]));
      match = vocab.find(candidate);
      if (match) break;
      --end;
    }
    if (!match) return unk;
    out.push_back(*match, candidate);
    start = end;
  }
  return out;
}

TokenSeq tokenize(std::string_view text, const Vocab& vocab,
                  const BasicTokenizerOptions& opts) {
  TokenSeq out;
  for (const auto& word : basic_tokenize(text, opts)) {
    out.append(wordpiece_tokenize(word, vocab));
  }
  return out;
}

std::optional<TokenId> single_token_id(std::string_view word,
                                       const Vocab& vocab) {
  auto words = basic_tokenize(word);
  if (words.size() != 1) return std::nullopt;
  auto pieces = wordpiece_tokenize(words.front(), vocab);
  if (pieces.size() != 1 || pieces.ids.front() == vocab.unk_id()) {
    return std::nullopt;
  }
  return pieces.ids.front();
}

}  // namespace ckprobe
