#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ckprobe/scorer.hpp"

namespace ckprobe {

// Ranking order used everywhere: descending log-probability, ties broken by
// ascending token id.
inline bool ranks_before(const Distribution& d, TokenId a, TokenId b) {
  const double la = d.logprobs[static_cast<std::size_t>(a)];
  const double lb = d.logprobs[static_cast<std::size_t>(b)];
  return la > lb || (la == lb && a < b);
}

/// 1-based rank of the best-ranked id in `answer_ids`.
std::size_t answer_rank(const Distribution& d, std::span<const TokenId> answer_ids);

/// The first min(k, |V|) ids in ranking order.
std::vector<TokenId> top_k(const Distribution& d, std::size_t k);

}  // namespace ckprobe
