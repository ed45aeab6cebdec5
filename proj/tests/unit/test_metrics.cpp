#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "ckprobe/errors.hpp"
#include "ckprobe/metrics.hpp"
#include "oracles.hpp"

namespace ckprobe {
namespace {

ProbeResult with_rank(Relation rel, std::string subject, std::size_t rank) {
  ProbeResult r;
  r.query.group = {std::move(subject), rel, {"x"}};
  r.best_rank = rank;
  return r;
}

ProbeResult with_top(Relation rel, std::string subject, std::vector<TokenId> top) {
  ProbeResult r;
  r.query.group = {std::move(subject), rel, {"x"}};
  r.best_rank = 1;
  r.topk_ids = std::move(top);
  return r;
}

ProbeResult with_distribution(Relation rel, std::string subject, Distribution d,
                              std::vector<TokenId> answers) {
  ProbeResult r;
  r.query.group = {std::move(subject), rel, {}};
  r.query.answer_ids = std::move(answers);
  r.best_rank = oracle::full_sort_rank(d.logprobs, r.query.answer_ids);
  r.topk_ids = top_k(d, kTopK);
  r.distribution = std::make_shared<const Distribution>(std::move(d));
  return r;
}

TEST(HitsReport, SingleRelation) {
  const std::vector<ProbeResult> results{with_rank(Relation::IsA, "a", 1), with_rank(Relation::IsA, "b", 3),
                                         with_rank(Relation::IsA, "c", 12),
                                         with_rank(Relation::IsA, "d", 150)};
  const auto r = hits_report(results);
  ASSERT_EQ(r.relations.size(), 1u);
  EXPECT_EQ(r.relations[0].samples, 4u);
  EXPECT_EQ(r.relations[0].hits, (std::vector<double>{25.0, 50.0, 50.0, 75.0}));
  EXPECT_EQ(r.micro, r.relations[0].hits);
  EXPECT_EQ(r.macro, r.relations[0].hits);
}

TEST(HitsReport, MicroAndMacro) {
  const std::vector<ProbeResult> results{
      with_rank(Relation::IsA, "a", 1), with_rank(Relation::IsA, "b", 200),
      with_rank(Relation::Antonym, "a", 1), with_rank(Relation::Antonym, "b", 1),
      with_rank(Relation::Antonym, "c", 300)};
  const auto r = hits_report(results, {1});
  // Enumeration order: IsA before Antonym.
  ASSERT_EQ(r.relations.size(), 2u);
  EXPECT_EQ(r.relations[0].relation, Relation::IsA);
  EXPECT_DOUBLE_EQ(r.relations[0].hits[0], 50.0);
  EXPECT_DOUBLE_EQ(r.relations[1].hits[0], 200.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.micro[0], 60.0);
  EXPECT_NEAR(r.macro[0], (50.0 + 200.0 / 3.0) / 2.0, 1e-12);
  EXPECT_EQ(r.total, 5u);
}

TEST(HitsReport, ExcludesFailures) {
  auto failed = with_rank(Relation::IsA, "z", 1);
  failed.error = "boom";
  const std::vector<ProbeResult> results{with_rank(Relation::IsA, "a", 1), failed};
  const auto r = hits_report(results, {1});
  EXPECT_EQ(r.failed_excluded, 1u);
  EXPECT_EQ(r.total, 1u);
  EXPECT_EQ(r.micro[0], 100.0);
}

TEST(HitsReport, EmptyInput) {
  const auto r = hits_report({}, {1, 10});
  EXPECT_TRUE(r.relations.empty());
  EXPECT_EQ(r.micro, (std::vector<double>{0.0, 0.0}));
}

TEST(Overlap, HandConstructedTopLists) {
  const std::vector<ProbeResult> a{with_top(Relation::Antonym, "s", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10})};
  const std::vector<ProbeResult> b{with_top(Relation::Synonym, "s", {4, 3, 2, 1, 11, 12, 13, 14, 15, 16})};
  EXPECT_DOUBLE_EQ(overlap_at_k(a, b, 10).percent, 40.0);
  EXPECT_DOUBLE_EQ(overlap_at_k(a, b, 1).percent, 0.0);
  EXPECT_DOUBLE_EQ(overlap_at_k(a, b, 4).percent, 100.0);
  EXPECT_EQ(overlap_at_k(a, b, 10).shared_subjects, 1u);
}

TEST(Overlap, AveragesOverSharedSubjectsOnly) {
  const std::vector<ProbeResult> a{with_top(Relation::Antonym, "s", {1, 2}),
                                   with_top(Relation::Antonym, "t", {1, 2}),
                                   with_top(Relation::Antonym, "only_a", {1, 2})};
  const std::vector<ProbeResult> b{with_top(Relation::Synonym, "s", {1, 2}),
                                   with_top(Relation::Synonym, "t", {3, 4})};
  const auto r = overlap_at_k(a, b, 2);
  EXPECT_DOUBLE_EQ(r.percent, 50.0);
  EXPECT_EQ(r.shared_subjects, 2u);
}

TEST(Overlap, Errors) {
  const std::vector<ProbeResult> a{with_top(Relation::Antonym, "s", {1})};
  const std::vector<ProbeResult> b{with_top(Relation::Synonym, "t", {1})};
  EXPECT_THROW(overlap_at_k(a, b, 1), EmptyError);
  EXPECT_THROW(overlap_at_k(a, a, 0), ConfigError);
}

TEST(OverlapProperty, IdentityAndSymmetry) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ProbeResult> a;
    std::vector<ProbeResult> b;
    for (int s = 0; s < 8; ++s) {
      a.push_back(with_distribution(Relation::Antonym, "s" + std::to_string(s),
                                    oracle::random_distribution(rng, 150), {0}));
      if (s % 3 != 2) {
        b.push_back(with_distribution(Relation::Synonym, "s" + std::to_string(s),
                                      oracle::random_distribution(rng, 150), {0}));
      }
    }
    for (std::size_t k : {1, 5, 10, 100}) {
      EXPECT_EQ(overlap_at_k(a, a, k).percent, 100.0);
      const double ab = overlap_at_k(a, b, k).percent;
      EXPECT_EQ(ab, overlap_at_k(b, a, k).percent);
      EXPECT_GE(ab, 0.0);
      EXPECT_LE(ab, 100.0);
    }
  }
}

TEST(CrossGrade, GradesAgainstOppositeAnswers) {
  // Antonym predictions for "hot" put "warm" (id 2) first; the synonym gold is {2}.
  const Distribution d{{-3.0, -2.0, -0.1, -5.0}};
  const std::vector<ProbeResult> antonyms{with_distribution(Relation::Antonym, "hot", d, {0}),
                                          with_distribution(Relation::Antonym, "spring", d, {0})};
  AnswerIndex gold;
  gold["hot"] = {2};
  const auto r = cross_grade(antonyms, gold, {1, 2});
  EXPECT_EQ(r.graded, 1u);
  EXPECT_EQ(r.excluded, 1u);
  EXPECT_EQ(r.incorrect_rate, (std::vector<double>{100.0, 100.0}));
  gold["hot"] = {1};
  EXPECT_EQ(cross_grade(antonyms, gold, {1, 2}).incorrect_rate, (std::vector<double>{0.0, 100.0}));
}

TEST(CrossGrade, Errors) {
  const Distribution d{{-1.0, -2.0}};
  const std::vector<ProbeResult> results{with_distribution(Relation::Antonym, "hot", d, {0})};
  EXPECT_THROW(cross_grade(results, AnswerIndex{}, {10}), EmptyError);
  auto from_file = results;
  from_file[0].distribution.reset();
  AnswerIndex gold{{"hot", {1}}};
  EXPECT_NO_THROW(cross_grade(from_file, gold, {2}));
  EXPECT_THROW(cross_grade(from_file, gold, {3}), ConfigError);
}

TEST(CrossGradeProperty, EqualsHitsWithSwappedGold) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ProbeResult> antonyms;
    AnswerIndex gold;
    for (int s = 0; s < 10; ++s) {
      const std::string subject = "s" + std::to_string(s);
      antonyms.push_back(with_distribution(Relation::Antonym, subject,
                                           oracle::random_distribution(rng, 120),
                                           oracle::random_answer_set(rng, 120, 3)));
      if (rng() % 4 != 0) gold[subject] = oracle::random_answer_set(rng, 120, 3);
    }
    std::vector<ProbeResult> swapped;
    for (const auto& r : antonyms) {
      auto it = gold.find(r.query.group.subject);
      if (it == gold.end()) continue;
      swapped.push_back(with_distribution(Relation::Antonym, r.query.group.subject,
                                          *r.distribution, it->second));
    }
    if (swapped.empty()) continue;
    const std::vector<std::size_t> ks{1, 5, 10, 100};
    const auto cg = cross_grade(antonyms, gold, ks);
    const auto hr = hits_report(swapped, ks);
    EXPECT_EQ(cg.incorrect_rate, hr.relations.at(0).hits);
    EXPECT_EQ(cg.graded, hr.total);
  }
}

Distribution from_probs(const std::vector<double>& p) {
  Distribution d;
  for (double x : p) d.logprobs.push_back(std::log(x));
  return d;
}

TEST(Shape, SharpDropIsL) {
  std::vector<double> p(200, 0.01 / 199);
  p[7] = 0.99;
  const auto s = classify_shape(from_probs(p));
  EXPECT_EQ(s.label, ShapeLabel::L);
  EXPECT_NEAR(s.max_drop, std::log10(0.99 / (0.01 / 199)), 1e-9);
}

TEST(Shape, GeometricDecayIsU) {
  std::vector<long double> w(200);
  long double z = 0;
  for (std::size_t i = 0; i < w.size(); ++i) z += (w[i] = std::pow(0.9L, static_cast<long double>(i)));
  long double h = 0;
  std::vector<double> p;
  for (long double x : w) {
    p.push_back(static_cast<double>(x / z));
    h -= (x / z) * std::log(x / z);
  }
  const auto s = classify_shape(from_probs(p));
  EXPECT_EQ(s.label, ShapeLabel::U);
  EXPECT_NEAR(s.normalized_entropy, static_cast<double>(h / std::log(200.0L)), 1e-9);
  EXPECT_NEAR(s.normalized_entropy, 0.6136, 1e-3);
  EXPECT_NEAR(s.max_drop, -std::log10(0.9), 1e-9);
}

TEST(Shape, UniformIsFlat) {
  const auto s = classify_shape(from_probs(std::vector<double>(500, 1.0 / 500)));
  EXPECT_EQ(s.label, ShapeLabel::Flat);
  EXPECT_NEAR(s.normalized_entropy, 1.0, 1e-12);
  EXPECT_NEAR(s.max_drop, 0.0, 1e-12);
}

TEST(Shape, DropOutsideWindowIgnored) {
  std::vector<double> p(200, 1.0);
  for (std::size_t i = 60; i < 200; ++i) p[i] = 1e-6;
  double z = 0;
  for (double x : p) z += x;
  for (double& x : p) x /= z;
  EXPECT_NE(classify_shape(from_probs(p)).label, ShapeLabel::L);
}

TEST(Redundancy, CountsAndTieBreaks) {
  const std::vector<ProbeResult> results{with_top(Relation::MadeOf, "a", {5, 1, 2}),
                                         with_top(Relation::MadeOf, "b", {5, 3, 1}),
                                         with_top(Relation::MadeOf, "c", {5, 4, 9})};
  const auto r = topk_redundancy(results, 3, 3);
  EXPECT_EQ(r.tokens, (std::vector<TokenId>{5, 1, 2}));
  EXPECT_EQ(r.frequency, (std::vector<std::size_t>{3, 2, 1}));
  EXPECT_EQ(r.presence[2], (std::vector<bool>{true, false, false}));
  EXPECT_THROW(topk_redundancy({}, 3, 3), EmptyError);
}

TEST(Redundancy, WoodDominatesToyMadeOf) {
  const Vocab vocab = Vocab::load(oracle::toy("vocab.txt"));
  std::vector<std::string> corpus;
  std::ifstream in(oracle::toy("corpus.txt"));
  for (std::string line; std::getline(in, line);) corpus.push_back(line);
  const CooccurrenceScorer scorer(corpus, vocab);
  const auto groups = build_probe_set(parse_assertions(oracle::toy("conceptnet_toy.csv")).triples, vocab);
  const auto queries = render_queries(groups, default_templates(), vocab).queries;
  const auto made_of = select_relation(run_probe(queries, scorer).results, Relation::MadeOf);
  ASSERT_EQ(made_of.size(), 15u);
  const auto r = topk_redundancy(made_of, 10, 10);
  const TokenId wood = *vocab.find("wood");
  const auto it = std::find(r.tokens.begin(), r.tokens.end(), wood);
  ASSERT_NE(it, r.tokens.end());
  EXPECT_EQ(r.frequency[static_cast<std::size_t>(it - r.tokens.begin())], r.frequency.front());
  EXPECT_EQ(r.frequency.front(), 15u);
}

TEST(RankCurve, Log10OfTopProbabilities) {
  const Distribution d = from_probs({0.1, 0.6, 0.3});
  const auto c = rank_curve(d, 2);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].first, 1u);
  EXPECT_NEAR(c[0].second, std::log10(0.6), 1e-12);
  EXPECT_NEAR(c[1].second, std::log10(0.3), 1e-12);
}

}  // namespace
}  // namespace ckprobe
