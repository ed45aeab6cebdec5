#include "ckprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "ckprobe/errors.hpp"
#include "ckprobe/numeric.hpp"

namespace ckprobe {

HitsReport hits_report(std::span<const ProbeResult> results,
                       const std::vector<std::size_t>& ks) {
  HitsReport report;
  report.ks = ks;
  std::array<std::vector<std::size_t>, kNumRelations> ranks;
  for (const auto& r : results) {
    if (!r.ok()) {
      ++report.failed_excluded;
      continue;
    }
    ranks[relation_index(r.query.group.relation)].push_back(r.best_rank);
  }

  std::vector<std::size_t> total_hits(ks.size(), 0);
  std::vector<std::vector<double>> per_relation(ks.size());
  for (const auto& info : all_relations()) {
    const auto& rel_ranks = ranks[relation_index(info.relation)];
    if (rel_ranks.empty()) continue;
    RelationReport row{info.relation, rel_ranks.size(), {}};
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const auto hits = static_cast<std::size_t>(std::count_if(
          rel_ranks.begin(), rel_ranks.end(),
          [k = ks[i]](std::size_t rank) { return rank <= k; }));
      total_hits[i] += hits;
      row.hits.push_back(100.0 * static_cast<double>(hits) /
                         static_cast<double>(rel_ranks.size()));
      per_relation[i].push_back(row.hits.back());
    }
    report.total += rel_ranks.size();
    report.relations.push_back(std::move(row));
  }

  for (std::size_t i = 0; i < ks.size(); ++i) {
    report.micro.push_back(report.total == 0
                               ? 0.0
                               : 100.0 * static_cast<double>(total_hits[i]) /
                                     static_cast<double>(report.total));
    report.macro.push_back(compensated_mean(per_relation[i]));
  }
  return report;
}

namespace {

std::map<std::string, const ProbeResult*> index_by_subject(
    std::span<const ProbeResult> results) {
  std::map<std::string, const ProbeResult*> index;
  for (const auto& r : results) {
    if (r.ok()) index.emplace(r.query.group.subject, &r);
  }
  return index;
}

}  // namespace

OverlapResult overlap_at_k(std::span<const ProbeResult> a,
                           std::span<const ProbeResult> b, std::size_t k) {
  if (k == 0) throw ConfigError("overlap K must be positive");
  const auto index_a = index_by_subject(a);
  const auto index_b = index_by_subject(b);
  std::vector<double> per_subject;
  for (const auto& [subject, ra] : index_a) {
    auto it = index_b.find(subject);
    if (it == index_b.end()) continue;
    const ProbeResult* rb = it->second;
    const std::size_t kk = std::min({k, ra->topk_ids.size(), rb->topk_ids.size()});
    if (kk == 0) continue;
    std::unordered_set<TokenId> top_a(ra->topk_ids.begin(), ra->topk_ids.begin() + kk);
    std::size_t shared = 0;
    for (std::size_t i = 0; i < kk; ++i) shared += top_a.count(rb->topk_ids[i]);
    per_subject.push_back(static_cast<double>(shared) / static_cast<double>(kk));
  }
  if (per_subject.empty()) throw EmptyError("the two result sets share no subject");
  return {100.0 * compensated_mean(per_subject), per_subject.size()};
}

AnswerIndex answers_by_subject(std::span<const ProbeResult> results) {
  AnswerIndex index;
  for (const auto& r : results) {
    if (!r.ok()) continue;
    auto& ids = index[r.query.group.subject];
    ids.insert(ids.end(), r.query.answer_ids.begin(), r.query.answer_ids.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  }
  return index;
}

std::size_t rank_within(const ProbeResult& r, std::span<const TokenId> ids) {
  if (r.distribution) return answer_rank(*r.distribution, ids);
  for (std::size_t i = 0; i < r.topk_ids.size(); ++i) {
    if (std::find(ids.begin(), ids.end(), r.topk_ids[i]) != ids.end()) return i + 1;
  }
  return r.topk_ids.size() + 1;
}

CrossGradeReport cross_grade(std::span<const ProbeResult> results,
                             const AnswerIndex& opposite_answers,
                             const std::vector<std::size_t>& ks) {
  CrossGradeReport report;
  report.ks = ks;
  std::vector<std::size_t> hits(ks.size(), 0);
  for (const auto& r : results) {
    if (!r.ok()) continue;
    auto it = opposite_answers.find(r.query.group.subject);
    if (it == opposite_answers.end() || it->second.empty()) {
      ++report.excluded;
      continue;
    }
    if (!r.distribution) {
      for (std::size_t k : ks) {
        if (k > r.topk_ids.size()) {
          throw ConfigError("hits@" + std::to_string(k) +
                            " needs distributions or a longer top list");
        }
      }
    }
    const std::size_t rank = rank_within(r, it->second);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (rank <= ks[i]) ++hits[i];
    }
    ++report.graded;
  }
  if (report.graded == 0) throw EmptyError("no subject has opposite-relation answers");
  for (std::size_t h : hits) {
    report.incorrect_rate.push_back(100.0 * static_cast<double>(h) /
                                    static_cast<double>(report.graded));
  }
  return report;
}

std::string_view shape_name(ShapeLabel s) {
  switch (s) {
    case ShapeLabel::L:
      return "L";
    case ShapeLabel::U:
      return "U";
    case ShapeLabel::Flat:
      return "Flat";
  }
  return "?";
}

ShapeStats classify_shape(const Distribution& d, const ShapeThresholds& t) {
  if (d.size() == 0) throw ConfigError("cannot classify an empty distribution");
  const double max = *std::max_element(d.logprobs.begin(), d.logprobs.end());
  if (!std::isfinite(max)) throw NumericError("distribution has no finite entry");
  CompensatedSum z;
  for (double lp : d.logprobs) z.add(std::exp(lp - max));
  const double log_z = max + std::log(z.value());

  CompensatedSum entropy;
  for (double lp : d.logprobs) {
    const double l = lp - log_z;
    if (std::isinf(l)) continue;
    entropy.add(-std::exp(l) * l);
  }
  ShapeStats s;
  s.normalized_entropy =
      d.size() > 1 ? entropy.value() / std::log(static_cast<double>(d.size())) : 1.0;

  const auto top = top_k(d, kShapeWindow);
  for (std::size_t i = 0; i + 1 < top.size(); ++i) {
    const double hi = d.logprobs[static_cast<std::size_t>(top[i])];
    const double lo = d.logprobs[static_cast<std::size_t>(top[i + 1])];
    if (std::isinf(hi)) break;  // both -inf from here on
    const double drop = (hi - lo) / std::numbers::ln10;
    s.max_drop = std::max(s.max_drop, drop);
  }

  if (s.max_drop >= t.drop) {
    s.label = ShapeLabel::L;
  } else if (s.normalized_entropy >= t.entropy) {
    s.label = ShapeLabel::Flat;
  } else {
    s.label = ShapeLabel::U;
  }
  return s;
}

RedundancyReport topk_redundancy(std::span<const ProbeResult> results,
                                 std::size_t k, std::size_t m) {
  if (results.empty()) throw EmptyError("redundancy needs at least one result");
  std::map<TokenId, std::size_t> freq;
  std::vector<std::unordered_set<TokenId>> tops;
  tops.reserve(results.size());
  for (const auto& r : results) {
    const std::size_t kk = std::min(k, r.topk_ids.size());
    std::unordered_set<TokenId> top(r.topk_ids.begin(), r.topk_ids.begin() + kk);
    for (TokenId id : top) ++freq[id];
    tops.push_back(std::move(top));
  }
  std::vector<std::pair<TokenId, std::size_t>> ordered(freq.begin(), freq.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& x, const auto& y) {
    return x.second > y.second;
  });
  ordered.resize(std::min(m, ordered.size()));

  RedundancyReport report;
  for (const auto& [id, f] : ordered) {
    report.tokens.push_back(id);
    report.frequency.push_back(f);
  }
  for (const auto& top : tops) {
    std::vector<bool> row;
    for (TokenId id : report.tokens) row.push_back(top.contains(id));
    report.presence.push_back(std::move(row));
  }
  return report;
}

std::vector<std::pair<std::size_t, double>> rank_curve(const Distribution& d,
                                                       std::size_t max_rank) {
  std::vector<std::pair<std::size_t, double>> out;
  const auto top = top_k(d, max_rank);
  for (std::size_t i = 0; i < top.size(); ++i) {
    out.emplace_back(i + 1,
                     d.logprobs[static_cast<std::size_t>(top[i])] / std::numbers::ln10);
  }
  return out;
}

std::vector<ProbeResult> select_relation(std::span<const ProbeResult> results,
                                         Relation relation) {
  std::vector<ProbeResult> out;
  for (const auto& r : results) {
    if (r.ok() && r.query.group.relation == relation) out.push_back(r);
  }
  return out;
}

}  // namespace ckprobe
