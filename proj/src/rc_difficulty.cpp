#include "ckprobe/rc_difficulty.hpp"

#include <unicode/uchar.h>
#include <unicode/locid.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "ckprobe/errors.hpp"
#include "ckprobe/io.hpp"
#include "ckprobe/numeric.hpp"
#include "ckprobe/tokenizer.hpp"

namespace ckprobe {

using nlohmann::json;

namespace {

const json& require(const json& node, const char* key, json::value_t type,
                    const std::string& path) {
  if (!node.is_object()) throw ParseError(path, "expected an object");
  auto it = node.find(key);
  if (it == node.end()) throw ParseError(path + "." + key, "missing");
  const bool ok = type == json::value_t::number_integer ? it->is_number_integer()
                                                        : it->type() == type;
  if (!ok) throw ParseError(path + "." + key, std::string("expected ") + json(type).type_name());
  return *it;
}

json parse_json(std::string_view text, const std::string& what) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ParseError(what, "not valid JSON");
  return doc;
}

}  // namespace

std::vector<RCExample> parse_squad(std::string_view json_text) {
  const json doc = parse_json(json_text, "$");
  const auto& data = require(doc, "data", json::value_t::array, "$");
  std::vector<RCExample> out;
  for (std::size_t a = 0; a < data.size(); ++a) {
    const std::string apath = "data[" + std::to_string(a) + "]";
    const auto& paragraphs = require(data[a], "paragraphs", json::value_t::array, apath);
    for (std::size_t p = 0; p < paragraphs.size(); ++p) {
      const std::string ppath = apath + ".paragraphs[" + std::to_string(p) + "]";
      const auto& context = require(paragraphs[p], "context", json::value_t::string, ppath);
      const auto& qas = require(paragraphs[p], "qas", json::value_t::array, ppath);
      for (std::size_t q = 0; q < qas.size(); ++q) {
        const std::string qpath = ppath + ".qas[" + std::to_string(q) + "]";
        RCExample ex;
        ex.id = require(qas[q], "id", json::value_t::string, qpath).get<std::string>();
        ex.question =
            require(qas[q], "question", json::value_t::string, qpath).get<std::string>();
        ex.context = context.get<std::string>();
        if (qas[q].contains("is_impossible")) {
          ex.is_impossible =
              require(qas[q], "is_impossible", json::value_t::boolean, qpath).get<bool>();
        }
        const auto& answers = require(qas[q], "answers", json::value_t::array, qpath);
        if (!ex.is_impossible) {
          for (std::size_t i = 0; i < answers.size(); ++i) {
            const std::string anpath = qpath + ".answers[" + std::to_string(i) + "]";
            ex.gold_answers.push_back(
                require(answers[i], "text", json::value_t::string, anpath).get<std::string>());
          }
          if (ex.gold_answers.empty()) {
            throw ParseError(qpath + ".answers", "answerable question without answers");
          }
        }
        out.push_back(std::move(ex));
      }
    }
  }
  return out;
}

std::vector<RCExample> parse_squad(const std::filesystem::path& path) {
  return parse_squad(std::string_view(read_file(path)));
}

Predictions parse_predictions(std::string_view json_text) {
  const json doc = parse_json(json_text, "$");
  if (!doc.is_object()) throw ParseError("$", "predictions must be an object of id -> text");
  Predictions out;
  for (const auto& [id, value] : doc.items()) {
    if (!value.is_string()) throw ParseError("$." + id, "expected string");
    out.emplace(id, value.get<std::string>());
  }
  return out;
}

Predictions parse_predictions(const std::filesystem::path& path) {
  return parse_predictions(std::string_view(read_file(path)));
}

namespace {

std::u32string lower_u32(std::string_view s) {
  icu::UnicodeString us = icu::UnicodeString::fromUTF8(
      icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  us.toLower(icu::Locale::getRoot());
  std::u32string out;
  for (int32_t i = 0; i < us.length(); i = us.moveIndex32(i, 1)) {
    out.push_back(static_cast<char32_t>(us.char32At(i)));
  }
  return out;
}

std::string to_utf8(std::u32string_view s) {
  icu::UnicodeString us = icu::UnicodeString::fromUTF32(
      reinterpret_cast<const UChar32*>(s.data()), static_cast<int32_t>(s.size()));
  std::string out;
  us.toUTF8String(out);
  return out;
}

bool is_ascii_punct(char32_t c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
         (c >= 123 && c <= 126);
}

bool is_word_char(char32_t c) {
  if (c == U'_') return true;
  return (U_GET_GC_MASK(static_cast<UChar32>(c)) & (U_GC_L_MASK | U_GC_N_MASK)) != 0;
}

bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }

std::vector<std::string> answer_tokens(std::string_view s) {
  std::vector<std::string> toks;
  std::istringstream ss(normalize_answer(s));
  for (std::string t; ss >> t;) toks.push_back(t);
  return toks;
}

std::vector<std::string> effective_golds(std::span<const std::string> gold_answers) {
  std::vector<std::string> golds;
  for (const auto& g : gold_answers) {
    if (!normalize_answer(g).empty()) golds.push_back(g);
  }
  if (golds.empty()) golds.emplace_back();
  return golds;
}

double f1_single(std::string_view prediction, std::string_view gold) {
  const auto pred = answer_tokens(prediction);
  const auto ref = answer_tokens(gold);
  if (pred.empty() || ref.empty()) return pred == ref ? 1.0 : 0.0;
  std::map<std::string, long> counts;
  for (const auto& t : ref) ++counts[t];
  long same = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++same;
    }
  }
  if (same == 0) return 0.0;
  const double precision = static_cast<double>(same) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(same) / static_cast<double>(ref.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

std::string normalize_answer(std::string_view s) {
  std::u32string text;
  for (char32_t c : lower_u32(s)) {
    if (!is_ascii_punct(c)) text.push_back(c);
  }
  // Replace standalone a/an/the word runs with a space.
  std::u32string no_articles;
  for (std::size_t i = 0; i < text.size();) {
    if (!is_word_char(text[i])) {
      no_articles.push_back(text[i++]);
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_char(text[j])) ++j;
    std::u32string_view word(text.data() + i, j - i);
    if (word == U"a" || word == U"an" || word == U"the") {
      no_articles.push_back(U' ');
    } else {
      no_articles.append(word);
    }
    i = j;
  }
  std::u32string out;
  bool pending_space = false;
  for (char32_t c : no_articles) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(c);
  }
  return to_utf8(out);
}

int squad_em(std::string_view prediction, std::span<const std::string> gold_answers) {
  const std::string pred = normalize_answer(prediction);
  for (const auto& g : effective_golds(gold_answers)) {
    if (normalize_answer(g) == pred) return 1;
  }
  return 0;
}

double squad_f1(std::string_view prediction, std::span<const std::string> gold_answers) {
  double best = 0.0;
  for (const auto& g : effective_golds(gold_answers)) {
    best = std::max(best, f1_single(prediction, g));
  }
  return best;
}

IdfTable::IdfTable(const std::vector<std::string>& documents) : n_(documents.size()) {
  for (const auto& doc : documents) {
    auto toks = basic_tokenize(doc);
    std::unordered_set<std::string> uniq(toks.begin(), toks.end());
    for (const auto& t : uniq) ++df_[t];
  }
}

IdfTable::IdfTable(std::size_t num_documents,
                   std::unordered_map<std::string, std::size_t> document_frequency)
    : n_(num_documents), df_(std::move(document_frequency)) {}

double IdfTable::idf(const std::string& term) const {
  auto it = df_.find(term);
  const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
  return scale_ * (std::log((1.0 + static_cast<double>(n_)) / (1.0 + df)) + 1.0);
}

IdfTable IdfTable::scaled(double factor) const {
  IdfTable out = *this;
  out.scale_ *= factor;
  return out;
}

IdfTable build_idf(std::span<const RCExample> examples) {
  std::vector<std::string> docs;
  std::unordered_set<std::string> seen_contexts;
  for (const auto& ex : examples) {
    if (seen_contexts.insert(ex.context).second) docs.push_back(ex.context);
  }
  for (const auto& ex : examples) docs.push_back(ex.question);
  return IdfTable(docs);
}

double tfidf_cosine(std::string_view context, std::string_view question,
                    const IdfTable& idf) {
  auto weights = [&idf](std::string_view text) {
    std::map<std::string, double> w;
    for (auto& t : basic_tokenize(text)) w[std::move(t)] += 1.0;
    for (auto& [term, tf] : w) tf *= idf.idf(term);
    return w;
  };
  const auto a = weights(context);
  const auto b = weights(question);
  CompensatedSum dot;
  CompensatedSum norm_a;
  CompensatedSum norm_b;
  for (const auto& [t, w] : a) norm_a.add(w * w);
  for (const auto& [t, w] : b) norm_b.add(w * w);
  // Walk both sorted maps together so the summation order is the same
  // whichever text comes first.
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot.add(ia->second * ib->second);
      ++ia;
      ++ib;
    }
  }
  if (norm_a.value() <= 0.0 || norm_b.value() <= 0.0) return 0.0;
  const double cos = dot.value() / (std::sqrt(norm_a.value()) * std::sqrt(norm_b.value()));
  return std::clamp(cos, 0.0, 1.0);
}

std::vector<double> example_similarities(std::span<const RCExample> examples,
                                         const IdfTable& idf) {
  std::vector<double> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(tfidf_cosine(ex.context, ex.question, idf));
  return out;
}

std::size_t num_bins_for(double bin_width) {
  if (!(bin_width > 0.0) || bin_width > 1.0) {
    throw ConfigError("bin width must lie in (0, 1]");
  }
  const double n = std::round(1.0 / bin_width);
  if (std::abs(n * bin_width - 1.0) > 1e-9) {
    throw ConfigError("bin width must divide 1 evenly");
  }
  return static_cast<std::size_t>(n);
}

std::size_t bin_index(double sim, std::size_t num_bins) {
  if (!(sim > 0.0)) return 0;
  if (sim >= 1.0) return num_bins - 1;
  const auto n = static_cast<double>(num_bins);
  auto k = static_cast<std::size_t>(std::floor(sim * n));
  k = std::min(k, num_bins - 1);
  // Edges are k / n, the correctly rounded decimal boundary.
  while (k + 1 < num_bins && static_cast<double>(k + 1) / n <= sim) ++k;
  while (k > 0 && static_cast<double>(k) / n > sim) --k;
  return k;
}

namespace {

const std::string& prediction_for(const NamedPredictions& m, const std::string& id) {
  auto it = m.predictions.find(id);
  if (it == m.predictions.end()) {
    throw ConfigError("model '" + m.model + "' has no prediction for id " + id);
  }
  return it->second;
}

void check_lengths(std::span<const RCExample> examples, std::span<const double> sims) {
  if (examples.size() != sims.size()) {
    throw ConfigError("one similarity per example is required");
  }
}

}  // namespace

std::vector<BucketCurve> bucket_curve(std::span<const RCExample> examples,
                                      std::span<const double> similarities,
                                      std::span<const NamedPredictions> models,
                                      double bin_width) {
  check_lengths(examples, similarities);
  const std::size_t n_bins = num_bins_for(bin_width);
  for (const auto& m : models) {
    for (const auto& ex : examples) prediction_for(m, ex.id);
  }

  std::vector<BucketCurve> out;
  for (const auto& m : models) {
    std::vector<std::vector<double>> has(n_bins);
    std::vector<std::vector<double>> none(n_bins);
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto& ex = examples[i];
      const double em = squad_em(prediction_for(m, ex.id), ex.gold_answers);
      auto& target = ex.is_impossible ? none : has;
      target[bin_index(similarities[i], n_bins)].push_back(em);
    }
    BucketCurve curve{m.model, {}, {}, 0};
    auto emit = [&](const std::vector<std::vector<double>>& src, std::vector<Bin>& dst) {
      for (std::size_t k = 0; k < n_bins; ++k) {
        if (src[k].empty()) {
          ++curve.empty_bins;
          continue;
        }
        dst.push_back({static_cast<double>(k) / static_cast<double>(n_bins),
                       static_cast<double>(k + 1) / static_cast<double>(n_bins),
                       src[k].size(), 100.0 * compensated_mean(src[k])});
      }
    };
    emit(has, curve.has_answer);
    emit(none, curve.no_answer);
    out.push_back(std::move(curve));
  }
  return out;
}

std::string_view domain_name(Domain d) {
  switch (d) {
    case Domain::A:
      return "A";
    case Domain::B:
      return "B";
    case Domain::C:
      return "C";
    case Domain::D:
      return "D";
    case Domain::Unclassified:
      return "unclassified";
  }
  return "?";
}

Domain classify_pass_pattern(bool strong, bool middle, bool weak) {
  if (!strong && !middle && !weak) return Domain::A;
  if (strong && !middle && !weak) return Domain::B;
  if (strong && middle && !weak) return Domain::C;
  if (strong && middle && weak) return Domain::D;
  return Domain::Unclassified;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Uniform integer in [0, bound) by rejection; std::uniform_int_distribution is
// implementation-defined, this is not.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % bound;
}

}  // namespace

std::vector<std::string> deterministic_sample(const std::vector<std::string>& ids,
                                              std::size_t cap, std::uint64_t seed) {
  if (ids.size() <= cap) return ids;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(ids.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < cap; ++i) {
    const auto j = i + uniform_below(rng, idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> out;
  out.reserve(cap);
  for (std::size_t i : idx) out.push_back(ids[i]);
  return out;
}

DomainPartition partition_domains(std::span<const RCExample> examples,
                                  std::span<const double> similarities,
                                  std::span<const NamedPredictions> ranked_models,
                                  const PartitionOptions& opts) {
  if (ranked_models.size() != 3) {
    throw ConfigError("domain partitioning needs exactly three ranked prediction sets, got " +
                      std::to_string(ranked_models.size()));
  }
  check_lengths(examples, similarities);
  DomainPartition part;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (ex.is_impossible || !(similarities[i] < opts.threshold)) continue;
    ++part.eligible;
    std::array<bool, 3> pass{};
    for (std::size_t m = 0; m < 3; ++m) {
      pass[m] = squad_em(prediction_for(ranked_models[m], ex.id), ex.gold_answers) == 1;
    }
    const auto d = classify_pass_pattern(pass[0], pass[1], pass[2]);
    part.members[static_cast<std::size_t>(d)].push_back(ex.id);
  }
  for (std::size_t d = 0; d < part.members.size(); ++d) {
    auto& ids = part.members[d];
    std::sort(ids.begin(), ids.end());
    part.samples[d] = deterministic_sample(ids, opts.sample_cap, splitmix64(opts.seed + d));
  }
  return part;
}

std::string_view question_type_name(QuestionType t) {
  switch (t) {
    case QuestionType::Synonymy:
      return "Synonymy";
    case QuestionType::CommonSenseKnowledge:
      return "Common Sense Knowledge";
    case QuestionType::MultipleSentenceReasoning:
      return "Multiple Sentence Reasoning";
    case QuestionType::NoSemanticVariation:
      return "No Semantic Variation";
    case QuestionType::Others:
      return "Others";
    case QuestionType::Typo:
      return "Typo";
  }
  return "?";
}

namespace {

std::string tsv_cell(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

// Cuts at a UTF-8 boundary at or before `max_bytes`.
std::string excerpt(const std::string& s, std::size_t max_bytes) {
  if (s.size() <= max_bytes) return s;
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return s.substr(0, cut) + "...";
}

}  // namespace

void write_annotation_template(std::ostream& out, std::span<const RCExample> examples,
                               const DomainPartition& partition,
                               std::size_t excerpt_chars) {
  std::unordered_map<std::string, const RCExample*> by_id;
  for (const auto& ex : examples) by_id.emplace(ex.id, &ex);
  out << "id\tdomain\tquestion\tcontext_excerpt";
  for (std::size_t t = 0; t < kNumQuestionTypes; ++t) {
    out << '\t' << question_type_name(static_cast<QuestionType>(t));
  }
  out << '\n';
  for (auto d : {Domain::A, Domain::B, Domain::C, Domain::D}) {
    for (const auto& id : partition.sample_of(d)) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ConfigError("sampled id " + id + " not in examples");
      out << tsv_cell(id) << '\t' << domain_name(d) << '\t'
          << tsv_cell(it->second->question) << '\t'
          << tsv_cell(excerpt(it->second->context, excerpt_chars));
      for (std::size_t t = 0; t < kNumQuestionTypes; ++t) out << '\t';
      out << '\n';
    }
  }
}

std::vector<Annotation> read_annotations(std::istream& in) {
  std::vector<Annotation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 || line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      cells.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cells.size() != 4 + kNumQuestionTypes) {
      throw ParseError("annotation line " + std::to_string(lineno),
                       "expected " + std::to_string(4 + kNumQuestionTypes) + " columns");
    }
    Annotation a;
    a.id = cells[0];
    for (std::size_t t = 0; t < kNumQuestionTypes; ++t) {
      const auto& cell = cells[4 + t];
      a.labels[t] = !cell.empty() && cell != "0";
    }
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace ckprobe
