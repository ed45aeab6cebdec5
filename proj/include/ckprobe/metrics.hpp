#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ckprobe/probe.hpp"
#include "ckprobe/ranking.hpp"
#include "ckprobe/relations.hpp"

namespace ckprobe {

inline const std::vector<std::size_t> kDefaultHitsKs = {1, 5, 10, 100};

struct RelationReport {
  Relation relation{};
  std::size_t samples = 0;
  std::vector<double> hits;  // percentages, one per K
};

struct HitsReport {
  std::vector<std::size_t> ks;
  std::vector<RelationReport> relations;  // relation enumeration order
  std::vector<double> micro;
  std::vector<double> macro;
  std::size_t total = 0;
  std::size_t failed_excluded = 0;
};

/// hits@K per relation plus micro (per-sample) and macro (per-relation)
/// averages. Failed results are excluded and counted.
HitsReport hits_report(std::span<const ProbeResult> results,
                       const std::vector<std::size_t>& ks = kDefaultHitsKs);

struct OverlapResult {
  double percent = 0.0;
  std::size_t shared_subjects = 0;
};

/// Mean over shared subjects of |topK_A ∩ topK_B| / K, as a percentage. K is
/// clipped to the shorter top list. Throws EmptyError when no subject is shared.
OverlapResult overlap_at_k(std::span<const ProbeResult> a,
                           std::span<const ProbeResult> b, std::size_t k);

using AnswerIndex = std::map<std::string, std::vector<TokenId>>;

/// subject -> answer ids for the given results.
AnswerIndex answers_by_subject(std::span<const ProbeResult> results);

struct CrossGradeReport {
  std::vector<std::size_t> ks;
  std::vector<double> incorrect_rate;  // percentages, one per K
  std::size_t graded = 0;
  std::size_t excluded = 0;  // subjects without opposite answers
};

/// Rank of the best id of `ids` in `r`. Uses the stored distribution when
/// present, otherwise the stored top list; returns top-list size + 1 when the
/// ids are not in a distribution-less top list.
std::size_t rank_within(const ProbeResult& r, std::span<const TokenId> ids);

/// hits@K of relation A's predictions graded against the opposite relation's
/// answers for the same subject. Higher is worse.
CrossGradeReport cross_grade(std::span<const ProbeResult> results,
                             const AnswerIndex& opposite_answers,
                             const std::vector<std::size_t>& ks = {10, 100});

enum class ShapeLabel { L, U, Flat };

std::string_view shape_name(ShapeLabel s);

struct ShapeThresholds {
  double drop = 1.0;      // log10 units
  double entropy = 0.95;  // normalized entropy
};

struct ShapeStats {
  ShapeLabel label{};
  double normalized_entropy = 0.0;
  double max_drop = 0.0;  // largest adjacent log10 drop within the top 50
};

inline constexpr std::size_t kShapeWindow = 50;

ShapeStats classify_shape(const Distribution& d, const ShapeThresholds& t = {});

struct RedundancyReport {
  std::vector<TokenId> tokens;        // most frequent first
  std::vector<std::size_t> frequency;  // results whose top K contains the token
  std::vector<std::vector<bool>> presence;  // results x tokens
};

/// Most frequent tokens across the top-K lists of `results` (ties by id).
RedundancyReport topk_redundancy(std::span<const ProbeResult> results,
                                 std::size_t k = 10, std::size_t m = 10);

/// (rank, log10 probability) for the top `max_rank` tokens.
std::vector<std::pair<std::size_t, double>> rank_curve(const Distribution& d,
                                                       std::size_t max_rank);

/// Results of one relation, failures removed.
std::vector<ProbeResult> select_relation(std::span<const ProbeResult> results,
                                         Relation relation);

}  // namespace ckprobe
