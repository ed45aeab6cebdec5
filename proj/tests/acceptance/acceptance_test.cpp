// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ckprobe/cli.hpp"
#include "ckprobe/fusion.hpp"
#include "ckprobe/kb_ingest.hpp"
#include "ckprobe/metrics.hpp"
#include "ckprobe/probe.hpp"
#include "ckprobe/ranking.hpp"
#include "ckprobe/rc_difficulty.hpp"
#include "ckprobe/scorer.hpp"
#include "ckprobe/tokenizer.hpp"
#include "oracles.hpp"
#include "planted.hpp"

namespace fs = std::filesystem;
using namespace ckprobe;

namespace {

// Collects the first few failure messages of a criterion.
struct Check {
  std::vector<std::string> failures;
  std::size_t total = 0;

  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok) ++total;
  }
  bool ok() const { return total == 0; }
};

struct Criterion {
  std::string name;
  double time_limit_s;  // 0 = no limit
  std::function<void(Check&)> body;
};

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

std::vector<std::string> toy_corpus() {
  std::vector<std::string> corpus;
  std::ifstream in(oracle::toy("corpus.txt"));
  for (std::string line; std::getline(in, line);) corpus.push_back(line);
  return corpus;
}

std::vector<ProbeResult> toy_results() {
  const Vocab vocab = Vocab::load(oracle::toy("vocab.txt"));
  const CooccurrenceScorer scorer(toy_corpus(), vocab);
  const auto groups =
      build_probe_set(parse_assertions(oracle::toy("conceptnet_toy.csv")).triples, vocab);
  const auto queries = render_queries(groups, default_templates(), vocab).queries;
  return run_probe(queries, scorer).results;
}

ProbeResult synthetic(Relation rel, const std::string& subject, Distribution d,
                      std::vector<TokenId> answers) {
  ProbeResult r;
  r.query.group = {subject, rel, {}};
  r.query.answer_ids = std::move(answers);
  r.best_rank = oracle::full_sort_rank(d.logprobs, r.query.answer_ids);
  r.topk_ids = top_k(d, kTopK);
  r.distribution = std::make_shared<const Distribution>(std::move(d));
  return r;
}

void rank_oracle(Check& c) {
  std::mt19937_64 rng(20240101);
  for (int i = 0; i < 1000; ++i) {
    const Distribution d = oracle::random_distribution(rng, 200);
    const auto answers = oracle::random_answer_set(rng, 200, 8);
    const std::size_t got = answer_rank(d, answers);
    const std::size_t want = oracle::full_sort_rank(d.logprobs, answers);
    c.expect(got == want, "instance " + std::to_string(i) + ": rank " + std::to_string(got) +
                              " vs oracle " + std::to_string(want));
  }
}

void hits_consistency(Check& c) {
  const auto results = toy_results();
  c.expect(results.size() == 60, "expected 60 toy queries, got " + std::to_string(results.size()));
  std::vector<std::size_t> ks;
  for (std::size_t k = 1; k <= 200; ++k) ks.push_back(k);
  const HitsReport report = hits_report(results, ks);
  c.expect(report.relations.size() == 4, "expected 4 relations");

  // Independent recount from the stored distributions.
  std::map<Relation, std::pair<std::size_t, std::vector<std::size_t>>> recount;
  for (const auto& r : results) {
    const std::size_t rank = oracle::full_sort_rank(r.distribution->logprobs, r.query.answer_ids);
    auto& [n, hits] = recount[r.query.group.relation];
    hits.resize(ks.size());
    ++n;
    for (std::size_t i = 0; i < ks.size(); ++i) hits[i] += rank <= ks[i];
  }
  for (const auto& rel : report.relations) {
    const auto& [n, hits] = recount.at(rel.relation);
    c.expect(rel.samples == n, std::string(relation_name(rel.relation)) + " sample count");
    c.expect(n == 15, std::string(relation_name(rel.relation)) + " expected 15 groups");
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const double want = 100.0 * static_cast<double>(hits[i]) / static_cast<double>(n);
      c.expect(rel.hits[i] == want, std::string(relation_name(rel.relation)) + " hits@" +
                                        std::to_string(ks[i]) + " " + fmt(rel.hits[i]) +
                                        " vs recount " + fmt(want));
      if (i > 0) c.expect(rel.hits[i] >= rel.hits[i - 1], "per-relation hits not monotone");
    }
  }
  for (std::size_t i = 0; i < ks.size(); ++i) {
    double weighted = 0;
    std::size_t total = 0;
    for (const auto& rel : report.relations) {
      weighted += rel.hits[i] * static_cast<double>(rel.samples);
      total += rel.samples;
    }
    weighted /= static_cast<double>(total);
    c.expect(std::abs(report.micro[i] - weighted) <= 1e-12,
             "micro@" + std::to_string(ks[i]) + " " + fmt(report.micro[i]) +
                 " vs weighted macro " + fmt(weighted));
    if (i > 0) {
      c.expect(report.micro[i] >= report.micro[i - 1], "micro not monotone");
      c.expect(report.macro[i] >= report.macro[i - 1], "macro not monotone");
    }
  }
}

void overlap_properties(Check& c) {
  const auto toy = toy_results();
  const auto antonyms = select_relation(toy, Relation::Antonym);
  const auto synonyms = select_relation(toy, Relation::Synonym);
  for (std::size_t k : {1, 5, 10, 100}) {
    for (const auto* set : {&antonyms, &synonyms}) {
      const double v = overlap_at_k(*set, *set, k).percent;
      c.expect(v == 100.0, "self overlap at K=" + std::to_string(k) + " is " + fmt(v));
    }
  }
  std::mt19937_64 rng(77);
  for (int pair = 0; pair < 100; ++pair) {
    std::vector<ProbeResult> a;
    std::vector<ProbeResult> b;
    const std::size_t subjects = 1 + rng() % 12;
    for (std::size_t s = 0; s < subjects; ++s) {
      const std::string name = "s" + std::to_string(s);
      a.push_back(synthetic(Relation::Antonym, name, oracle::random_distribution(rng, 150), {0}));
      // Every pair shares subject s0; others are shared at random.
      if (s == 0 || rng() % 3 != 0) {
        b.push_back(synthetic(Relation::Synonym, name, oracle::random_distribution(rng, 150), {0}));
      }
    }
    for (std::size_t k : {1, 5, 10, 100}) {
      const double ab = overlap_at_k(a, b, k).percent;
      const double ba = overlap_at_k(b, a, k).percent;
      c.expect(ab == ba, "pair " + std::to_string(pair) + " asymmetric at K=" + std::to_string(k));
      c.expect(ab >= 0.0 && ab <= 100.0, "overlap out of range: " + fmt(ab));
      c.expect(overlap_at_k(a, a, k).percent == 100.0, "random self overlap");
    }
  }
}

void cross_grade_equivalence(Check& c) {
  std::mt19937_64 rng(4242);
  const std::vector<std::size_t> ks{1, 5, 10, 50, 100};
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<ProbeResult> a;
    AnswerIndex gold_b;
    const std::size_t subjects = 1 + rng() % 15;
    for (std::size_t s = 0; s < subjects; ++s) {
      const std::string name = "s" + std::to_string(s);
      a.push_back(synthetic(Relation::Antonym, name, oracle::random_distribution(rng, 180),
                            oracle::random_answer_set(rng, 180, 4)));
      if (s == 0 || rng() % 4 != 0) gold_b[name] = oracle::random_answer_set(rng, 180, 4);
    }
    std::vector<ProbeResult> swapped;
    for (const auto& r : a) {
      const auto it = gold_b.find(r.query.group.subject);
      if (it != gold_b.end()) {
        swapped.push_back(synthetic(Relation::Antonym, r.query.group.subject, *r.distribution,
                                    it->second));
      }
    }
    const auto cg = cross_grade(a, gold_b, ks);
    const auto hr = hits_report(swapped, ks);
    c.expect(hr.relations.size() == 1 && cg.incorrect_rate == hr.relations[0].hits,
             "instance " + std::to_string(inst) + " differs from swapped-gold hits");
    c.expect(cg.graded == swapped.size(), "graded count");
  }
}

void wordpiece_oracle(Check& c) {
  std::mt19937_64 rng(5150);
  const std::string alphabet = "abcdef";
  std::set<std::string> pieces;
  for (char ch : alphabet) pieces.insert(std::string(1, ch));
  for (char ch : std::string("abcde")) pieces.insert("##" + std::string(1, ch));
  std::uniform_int_distribution<std::size_t> len(2, 4);
  std::uniform_int_distribution<std::size_t> letter(0, alphabet.size() - 1);
  while (pieces.size() < 50) {
    std::string p;
    for (std::size_t i = len(rng); i > 0; --i) p += alphabet[letter(rng)];
    pieces.insert(rng() % 2 ? p : "##" + p);
  }
  std::vector<std::string> tokens{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  tokens.insert(tokens.end(), pieces.begin(), pieces.end());
  const Vocab vocab(tokens);
  const std::set<std::string> all(tokens.begin(), tokens.end());
  std::uniform_int_distribution<std::size_t> word_len(1, 16);
  std::size_t unk = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string w;
    for (std::size_t n = word_len(rng); n > 0; --n) w += alphabet[letter(rng)];
    const auto got = wordpiece_tokenize(w, vocab).strings;
    const auto want = oracle::longest_prefix_pieces(w, all);
    unk += want == std::vector<std::string>{"[UNK]"};
    c.expect(got == want, "word '" + w + "' differs from oracle");
  }
  c.expect(unk > 0 && unk < 10000, "fixture should exercise both matched and [UNK] words");
}

void text_metrics(Check& c) {
  const std::vector<std::string> texts{"The cat sat on the mat.", "A quick brown fox!",
                                       "Spring, summer, autumn and winter.", "x"};
  const IdfTable idf(texts);
  for (const auto& t : texts) {
    const double v = tfidf_cosine(t, t, idf);
    c.expect(std::abs(v - 1.0) <= 1e-12, "identical-text cosine " + fmt(v));
  }
  // Hand computation: idf(df=2) = ln(4/3) + 1, idf(df=1) = ln 2 + 1.
  const std::vector<std::string> docs{"the cat sat", "the dog sat", "a cat ran"};
  const IdfTable hand(docs);
  const double c12 = tfidf_cosine(docs[0], docs[1], hand);
  const double c13 = tfidf_cosine(docs[0], docs[2], hand);
  const double c23 = tfidf_cosine(docs[1], docs[2], hand);
  c.expect(std::abs(c12 - 0.5979687361418285) <= 1e-9, "cos(d1,d2) = " + fmt(c12));
  c.expect(std::abs(c13 - 0.27345017765273255) <= 1e-9, "cos(d1,d3) = " + fmt(c13));
  c.expect(std::abs(c23) <= 1e-9, "cos(d2,d3) = " + fmt(c23));

  std::mt19937_64 rng(99);
  const std::vector<std::string> words{"the", "A", "an", "cat", "Cat", "dog", "sat", "ran",
                                       ",",   ".", "!", "Paris", "paris", "1", "two"};
  auto phrase = [&] {
    std::string s;
    for (std::size_t n = rng() % 5; n > 0; --n) s += words[rng() % words.size()] + " ";
    return s;
  };
  std::size_t matched = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::string p = phrase();
    std::vector<std::string> gold{phrase()};
    if (rng() % 2) gold.push_back(rng() % 2 ? p : phrase());
    if (rng() % 10 == 0) gold.clear();
    if (squad_em(p, gold) == 1) {
      ++matched;
      const double f1 = squad_f1(p, gold);
      c.expect(f1 == 1.0, "EM=1 but F1=" + fmt(f1) + " for '" + p + "'");
    }
  }
  c.expect(matched > 100, "too few exact matches generated: " + std::to_string(matched));
}

void domain_partition(Check& c) {
  const auto f = planted::make();
  c.expect(f.examples.size() == 200, "fixture size");
  PartitionOptions opts;
  opts.seed = 2024;
  opts.sample_cap = 8;
  const auto part = partition_domains(f.examples, f.similarities, f.models, opts);
  std::array<std::vector<std::string>, 5> want;
  for (std::size_t i = 0; i < f.examples.size(); ++i) {
    if (f.expected[i] >= 0) want[static_cast<std::size_t>(f.expected[i])].push_back(f.examples[i].id);
  }
  const char* names[] = {"A", "B", "C", "D", "unclassified"};
  std::size_t covered = 0;
  for (std::size_t d = 0; d < 5; ++d) {
    c.expect(part.members[d] == want[d], std::string("domain ") + names[d] + " has " +
                                             std::to_string(part.members[d].size()) +
                                             " members, hand labels " +
                                             std::to_string(want[d].size()));
    c.expect(!want[d].empty(), std::string("fixture plants no ") + names[d]);
    covered += part.members[d].size();
  }
  c.expect(covered == part.eligible, "domains do not partition the eligible set");
  const auto again = partition_domains(f.examples, f.similarities, f.models, opts);
  c.expect(again.samples == part.samples && again.members == part.members,
           "not reproducible under a fixed seed");
  for (std::size_t d = 0; d < 5; ++d) {
    c.expect(part.samples[d].size() == std::min<std::size_t>(8, want[d].size()),
             std::string("sample size of ") + names[d]);
    for (const auto& id : part.samples[d]) {
      c.expect(std::binary_search(want[d].begin(), want[d].end(), id), "sample outside domain");
    }
  }
}

void fusion_math(Check& c) {
  std::mt19937_64 rng(31337);
  double worst_pool = 0;
  double worst_fuse = 0;
  for (int i = 0; i < 20; ++i) {
    const std::size_t m = 2 + rng() % 4;
    const std::size_t de = 2 + rng() % 6;
    const std::size_t da = 2 + rng() % 5;
    const auto pool = random_pool_instance(rng, m, de, da);
    const auto gp = grad_check_pool(pool.elements, pool.params, 1e-5);
    worst_pool = std::max(worst_pool, gp.max_rel_error);
    c.expect(gp.max_rel_error < 1e-4, "attention_pool instance " + std::to_string(i) +
                                          " rel error " + fmt(gp.max_rel_error) + " at " + gp.worst);

    const std::size_t n = 2 + rng() % 5;
    const std::size_t d = 2 + rng() % 6;
    const std::size_t triples = 1 + rng() % 4;
    const std::size_t dc = 2 + rng() % 5;
    const std::size_t dk = 2 + rng() % 5;
    auto fuse = random_fuse_instance(rng, n, d, triples, dc, dk);
    const auto gf = grad_check_fuse(fuse.h, fuse.c, fuse.params, {}, 1e-5);
    worst_fuse = std::max(worst_fuse, gf.max_rel_error);
    c.expect(gf.max_rel_error < 1e-4, "c2t_fuse instance " + std::to_string(i) + " rel error " +
                                          fmt(gf.max_rel_error) + " at " + gf.worst);

    const auto trace = c2t_fuse_trace(fuse.h, fuse.c, fuse.params);
    for (std::size_t r = 0; r < trace.attention.rows(); ++r) {
      double s = 0;
      for (double x : trace.attention.row(r)) s += x;
      c.expect(std::abs(s - 1.0) <= 1e-12, "attention row sums to " + fmt(s));
    }
    fuse.params.wv = Matrix(dc, d);
    c.expect(c2t_fuse(fuse.h, fuse.c, fuse.params) == fuse.h, "Wv = 0 does not return H exactly");
  }
  std::cout << "  max relative error: attention_pool " << worst_pool << ", c2t_fuse "
            << worst_fuse << "\n";
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::ifstream in(entry.path(), std::ios::binary);
    files[entry.path().filename().string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return files;
}

void end_to_end_determinism(Check& c) {
  const fs::path dir = fs::temp_directory_path() / "ckprobe_acceptance_e2e";
  std::vector<std::map<std::string, std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(dir);
    std::ostringstream out;
    std::ostringstream err;
    const int probe = execute_command({"probe", "--kb", oracle::toy("conceptnet_toy.csv").string(),
                                       "--vocab", oracle::toy("vocab.txt").string(), "--corpus",
                                       oracle::toy("corpus.txt").string(), "--threads", "4",
                                       "--out", dir.string()},
                                      out, err);
    c.expect(probe == 0, "probe failed: " + err.str());
    auto artifacts = snapshot(dir);
    const int metrics =
        execute_command({"metrics", "--results", (dir / "results.jsonl").string(), "--vocab",
                         oracle::toy("vocab.txt").string(), "--out", dir.string()},
                        out, err);
    c.expect(metrics == 0, "metrics failed: " + err.str());
    // The manifest is rewritten by metrics; keep both versions.
    artifacts["probe.manifest.json"] = artifacts["manifest.json"];
    for (auto& [name, bytes] : snapshot(dir)) artifacts[name] = bytes;
    runs.push_back(std::move(artifacts));
  }
  fs::remove_all(dir);
  c.expect(runs[0].size() >= 5, "expected at least five artifacts");
  for (const auto& [name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    c.expect(it != runs[1].end() && it->second == bytes, name + " differs between runs");
  }
  c.expect(runs[0].size() == runs[1].size(), "artifact sets differ");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"rank oracle (1000 distributions x 200 tokens)", 10.0, rank_oracle},
      {"hits@K consistency on toy fixture", 0.0, hits_consistency},
      {"overlap properties", 0.0, overlap_properties},
      {"cross-grade equals swapped-gold hits@K", 0.0, cross_grade_equivalence},
      {"WordPiece longest-prefix oracle (10000 strings)", 30.0, wordpiece_oracle},
      {"TF-IDF cosine, EM and F1", 0.0, text_metrics},
      {"domain partition on planted fixture", 0.0, domain_partition},
      {"fusion math and gradients", 60.0, fusion_math},
      {"end-to-end determinism of probe + metrics", 0.0, end_to_end_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& cr = criteria[i];
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.body(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cr.time_limit_s > 0 && secs >= cr.time_limit_s) {
      check.expect(false, "took " + fmt(secs) + " s, limit " + fmt(cr.time_limit_s) + " s");
    }
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.3f s", secs);
    std::cout << (check.ok() ? "PASS" : "FAIL") << "  [" << i + 1 << "] " << cr.name << " ("
              << timing << ")\n";
    for (const auto& f : check.failures) std::cout << "      " << f << "\n";
    if (check.total > check.failures.size()) {
      std::cout << "      ... " << check.total - check.failures.size() << " more\n";
    }
    failed += !check.ok();
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << "\n";
  return failed == 0 ? 0 : 1;
}
