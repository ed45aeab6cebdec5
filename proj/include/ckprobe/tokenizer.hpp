#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ckprobe {

using TokenId = std::int32_t;

inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kUnkToken = "[UNK]";

// Words longer than this many code points map to the unknown token.
inline constexpr std::size_t kMaxWordChars = 100;

/// WordPiece vocabulary. Token id is the 0-based line number of the
/// vocabulary file. Immutable after construction.
class Vocab {
 public:
  /// Throws ConfigError on duplicate tokens, an empty list, or a missing
  /// special token.
  explicit Vocab(std::vector<std::string> tokens);

  static Vocab load(std::istream& in);
  static Vocab load(const std::filesystem::path& path);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::optional<TokenId> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }

  TokenId cls_id() const noexcept { return cls_id_; }
  TokenId sep_id() const noexcept { return sep_id_; }
  TokenId mask_id() const noexcept { return mask_id_; }
  TokenId unk_id() const noexcept { return unk_id_; }
  bool is_special(TokenId id) const noexcept;

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId, Hash, std::equal_to<>> index_;
  TokenId cls_id_ = -1;
  TokenId sep_id_ = -1;
  TokenId mask_id_ = -1;
  TokenId unk_id_ = -1;
};

// Parallel id / string lists. Continuation pieces keep their "##" prefix.
struct TokenSeq {
  std::vector<TokenId> ids;
  std::vector<std::string> strings;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
  void push_back(TokenId id, std::string s) {
    ids.push_back(id);
    strings.push_back(std::move(s));
  }
  void append(const TokenSeq& other);
  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

struct BasicTokenizerOptions {
  bool split_chinese_chars = true;
};

/// Uncased BERT pre-tokenization: drops control characters, lowercases,
/// strips accents (NFD then removal of non-spacing marks), isolates
/// punctuation and CJK ideographs, and splits on whitespace.
std::vector<std::string> basic_tokenize(std::string_view text,
                                        const BasicTokenizerOptions& opts = {});

/// Greedy longest-match-first WordPiece. Any unmatched position, or a word
/// longer than kMaxWordChars code points, yields the single unknown token.
TokenSeq wordpiece_tokenize(std::string_view word, const Vocab& vocab);

/// basic_tokenize followed by wordpiece_tokenize on every word.
TokenSeq tokenize(std::string_view text, const Vocab& vocab,
                  const BasicTokenizerOptions& opts = {});

/// True when `word` survives pre-tokenization as one word and that word is
/// one real (non-unknown) vocabulary token. Returns the token id in that
/// case.
std::optional<TokenId> single_token_id(std::string_view word,
                                       const Vocab& vocab);

}  // namespace ckprobe
