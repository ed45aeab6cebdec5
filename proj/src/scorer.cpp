#include "ckprobe/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "ckprobe/errors.hpp"
#include "ckprobe/numeric.hpp"

namespace ckprobe {

double probability_mass(const Distribution& d) {
  CompensatedSum s;
  for (double lp : d.logprobs) s.add(std::exp(lp));
  return s.value();
}

bool is_normalized(const Distribution& d, double tol) {
  if (d.logprobs.empty()) return false;
  for (double lp : d.logprobs) {
    if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity()) {
      return false;
    }
  }
  return std::abs(probability_mass(d) - 1.0) <= tol;
}

Distribution log_normalize(std::vector<double> log_scores) {
  if (log_scores.empty()) throw NumericError("cannot normalize an empty score vector");
  const double max = *std::max_element(log_scores.begin(), log_scores.end());
  if (!std::isfinite(max)) throw NumericError("score vector has no finite maximum");
  CompensatedSum s;
  for (double x : log_scores) s.add(std::exp(x - max));
  const double log_z = max + std::log(s.value());
  for (double& x : log_scores) x -= log_z;
  return Distribution{std::move(log_scores)};
}

void validate_masked_query(const TokenSeq& tokens, std::size_t mask_index,
                           TokenId mask_id, std::size_t max_len) {
  if (tokens.size() > max_len) throw LengthError(tokens.size(), max_len);
  if (mask_index >= tokens.size() || tokens.ids[mask_index] != mask_id) {
    throw ConfigError("mask_index " + std::to_string(mask_index) +
                      " does not point at the mask token");
  }
}

CooccurrenceScorer::CooccurrenceScorer(const std::vector<std::string>& corpus,
                                       const Vocab& vocab, double smoothing,
                                       std::string model)
    : info_{std::move(model), vocab.size(), kDefaultMaxLen},
      smoothing_(smoothing),
      mask_id_(vocab.mask_id()),
      special_(vocab.size(), false),
      rows_(vocab.size()) {
  if (corpus.empty()) throw ConfigError("co-occurrence corpus is empty");
  if (!(smoothing > 0.0) || !std::isfinite(smoothing)) {
    throw ConfigError("smoothing must be a positive finite number");
  }
  for (TokenId id : {vocab.cls_id(), vocab.sep_id(), vocab.mask_id(), vocab.unk_id()}) {
    special_[static_cast<std::size_t>(id)] = true;
  }

  std::vector<std::unordered_map<TokenId, std::uint32_t>> counts(vocab.size());
  std::vector<TokenId> present;
  for (const auto& sentence : corpus) {
    present = tokenize(sentence, vocab).ids;
    std::erase_if(present, [this](TokenId t) {
      return special_[static_cast<std::size_t>(t)];
    });
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    for (TokenId a : present) {
      for (TokenId b : present) {
        if (a != b) ++counts[static_cast<std::size_t>(a)][b];
      }
    }
  }
  for (std::size_t w = 0; w < counts.size(); ++w) {
    auto& row = rows_[w];
    row.reserve(counts[w].size());
    for (auto [t, c] : counts[w]) row.push_back({t, c});
    std::sort(row.begin(), row.end(),
              [](const Entry& x, const Entry& y) { return x.token < y.token; });
  }
}

std::uint32_t CooccurrenceScorer::cooccurrence(TokenId a, TokenId b) const {
  const auto& row = rows_.at(static_cast<std::size_t>(a));
  auto it = std::lower_bound(
      row.begin(), row.end(), b,
      [](const Entry& e, TokenId t) { return e.token < t; });
  return (it != row.end() && it->token == b) ? it->count : 0;
}

Distribution CooccurrenceScorer::score_masked(const TokenSeq& tokens,
                                              std::size_t mask_index) const {
  validate_masked_query(tokens, mask_index, mask_id_, info_.max_len);
  // Scores stay integral plus the smoothing constant, so accumulation order
  // cannot change them.
  std::vector<double> score(info_.vocab_size, smoothing_);
  for (TokenId w : tokens.ids) {
    if (w < 0 || static_cast<std::size_t>(w) >= rows_.size()) {
      throw ConfigError("token id " + std::to_string(w) + " outside vocabulary");
    }
    if (special_[static_cast<std::size_t>(w)]) continue;
    for (const Entry& e : rows_[static_cast<std::size_t>(w)]) {
      score[static_cast<std::size_t>(e.token)] += e.count;
    }
  }
  for (double& s : score) s = std::log(s);
  return log_normalize(std::move(score));
}

std::unique_ptr<Scorer> build_cooccurrence_scorer(
    const std::vector<std::string>& corpus, const Vocab& vocab,
    double smoothing) {
  return std::make_unique<CooccurrenceScorer>(corpus, vocab, smoothing);
}

}  // namespace ckprobe
