#include "ckprobe/ranking.hpp"

#include <algorithm>
#include <numeric>

#include "ckprobe/errors.hpp"

namespace ckprobe {

std::size_t answer_rank(const Distribution& d, std::span<const TokenId> answer_ids) {
  if (answer_ids.empty()) throw ConfigError("answer_rank needs at least one answer");
  for (TokenId a : answer_ids) {
    if (a < 0 || static_cast<std::size_t>(a) >= d.size()) {
      throw ConfigError("answer id " + std::to_string(a) + " outside vocabulary");
    }
  }
  TokenId best = answer_ids.front();
  for (TokenId a : answer_ids) {
    if (ranks_before(d, a, best)) best = a;
  }
  std::size_t ahead = 0;
  for (std::size_t t = 0; t < d.size(); ++t) {
    if (ranks_before(d, static_cast<TokenId>(t), best)) ++ahead;
  }
  return ahead + 1;
}

std::vector<TokenId> top_k(const Distribution& d, std::size_t k) {
  std::vector<TokenId> ids(d.size());
  std::iota(ids.begin(), ids.end(), TokenId{0});
  k = std::min(k, ids.size());
  auto cmp = [&d](TokenId a, TokenId b) { return ranks_before(d, a, b); };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k),
                    ids.end(), cmp);
  ids.resize(k);
  return ids;
}

}  // namespace ckprobe
