#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ckprobe/tokenizer.hpp"

namespace ckprobe {

inline constexpr std::size_t kDefaultMaxLen = 512;

// Full-vocabulary natural-log probabilities; index = token id.
struct Distribution {
  std::vector<double> logprobs;

  std::size_t size() const noexcept { return logprobs.size(); }
  friend bool operator==(const Distribution&, const Distribution&) = default;
};

/// Sum of exp(logprobs), accumulated with compensation.
double probability_mass(const Distribution& d);

/// True when every entry is finite or -inf and the mass is 1 within `tol`.
bool is_normalized(const Distribution& d, double tol = 1e-3);

/// Log-softmax of unnormalized log scores.
Distribution log_normalize(std::vector<double> log_scores);

struct ScorerInfo {
  std::string model;
  std::size_t vocab_size = 0;
  std::size_t max_len = kDefaultMaxLen;
};

/// Masked-token scoring backend. Implementations are safe to call from many
/// threads at once.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual const ScorerInfo& info() const = 0;

  /// Distribution over the vocabulary at `mask_index`. Throws LengthError if
  /// the sequence exceeds info().max_len.
  virtual Distribution score_masked(const TokenSeq& tokens,
                                    std::size_t mask_index) const = 0;
};

/// Checks the common preconditions of score_masked.
void validate_masked_query(const TokenSeq& tokens, std::size_t mask_index,
                           TokenId mask_id, std::size_t max_len);

/// Bag-of-context co-occurrence model. For a query whose non-special tokens
/// form the multiset B, P(t) is proportional to
///   smoothing + sum over w in B of cooc(t, w)
/// where cooc(t, w) counts corpus sentences containing both t and w (t != w).
class CooccurrenceScorer final : public Scorer {
 public:
  CooccurrenceScorer(const std::vector<std::string>& corpus, const Vocab& vocab,
                     double smoothing = 1.0, std::string model = "cooccurrence");

  const ScorerInfo& info() const override { return info_; }
  Distribution score_masked(const TokenSeq& tokens,
                            std::size_t mask_index) const override;

  /// Number of sentences containing both tokens.
  std::uint32_t cooccurrence(TokenId a, TokenId b) const;

  double smoothing() const noexcept { return smoothing_; }

 private:
  struct Entry {
    TokenId token;
    std::uint32_t count;
  };

  ScorerInfo info_;
  double smoothing_;
  TokenId mask_id_;
  std::vector<bool> special_;
  // rows_[w] lists every t co-occurring with w, sorted by t.
  std::vector<std::vector<Entry>> rows_;
};

std::unique_ptr<Scorer> build_cooccurrence_scorer(
    const std::vector<std::string>& corpus, const Vocab& vocab,
    double smoothing = 1.0);

}  // namespace ckprobe
