#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ckprobe {

// One SQuAD 2.0 question.
struct RCExample {
  std::string id;
  std::string context;
  std::string question;
  std::vector<std::string> gold_answers;  // empty iff impossible
  bool is_impossible = false;
};

/// Parses the published SQuAD 2.0 data schema. Schema violations raise
/// ParseError whose location is a JSON path such as
/// "data[0].paragraphs[3].qas[1].answers".
std::vector<RCExample> parse_squad(std::string_view json_text);
std::vector<RCExample> parse_squad(const std::filesystem::path& path);

// id -> predicted answer text; "" means the model predicted no answer.
using Predictions = std::unordered_map<std::string, std::string>;

Predictions parse_predictions(std::string_view json_text);
Predictions parse_predictions(const std::filesystem::path& path);

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse
/// whitespace.
std::string normalize_answer(std::string_view s);

/// 1 iff the normalized prediction equals some normalized gold answer. With no
/// gold answers, 1 iff the prediction is empty.
int squad_em(std::string_view prediction, std::span<const std::string> gold_answers);

/// Max over gold answers of bag-of-tokens F1 after normalization.
double squad_f1(std::string_view prediction, std::span<const std::string> gold_answers);

/// Smoothed inverse document frequency: idf(t) = ln((1+N)/(1+df(t))) + 1.
class IdfTable {
 public:
  explicit IdfTable(const std::vector<std::string>& documents);
  IdfTable(std::size_t num_documents,
           std::unordered_map<std::string, std::size_t> document_frequency);

  double idf(const std::string& term) const;
  std::size_t num_documents() const noexcept { return n_; }

  /// A table whose every idf is multiplied by `factor`.
  IdfTable scaled(double factor) const;

 private:
  std::size_t n_ = 0;
  std::unordered_map<std::string, std::size_t> df_;
  double scale_ = 1.0;
};

/// The evaluation-split collection: every distinct context plus every question.
IdfTable build_idf(std::span<const RCExample> examples);

/// Cosine of raw-tf x idf vectors over basic-tokenized unigrams. 0 when either
/// vector is all zero.
double tfidf_cosine(std::string_view context, std::string_view question,
                    const IdfTable& idf);

/// Similarity of every example's context and question, in input order.
std::vector<double> example_similarities(std::span<const RCExample> examples,
                                         const IdfTable& idf);

struct NamedPredictions {
  std::string model;
  Predictions predictions;
};

struct Bin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double score = 0.0;  // percent: EM for has-answer, accuracy for no-answer
};

struct BucketCurve {
  std::string model;
  std::vector<Bin> has_answer;  // populated bins only
  std::vector<Bin> no_answer;
  std::size_t empty_bins = 0;
};

/// Index of the half-open bin [k/n, (k+1)/n) containing `sim`; 1.0 falls in
/// the last bin. n = round(1 / bin_width).
std::size_t bin_index(double sim, std::size_t num_bins);
std::size_t num_bins_for(double bin_width);

/// Per model, per answerability split, EM (or no-answer accuracy) per
/// similarity bin. Throws ConfigError naming the first missing prediction id.
std::vector<BucketCurve> bucket_curve(std::span<const RCExample> examples,
                                      std::span<const double> similarities,
                                      std::span<const NamedPredictions> models,
                                      double bin_width = 0.1);

enum class Domain : std::uint8_t { A, B, C, D, Unclassified };
std::string_view domain_name(Domain d);

struct DomainPartition {
  // Example ids, ascending, per domain.
  std::array<std::vector<std::string>, 5> members;
  // Deterministic uniform samples without replacement, capped.
  std::array<std::vector<std::string>, 5> samples;
  std::size_t eligible = 0;

  const std::vector<std::string>& of(Domain d) const {
    return members[static_cast<std::size_t>(d)];
  }
  const std::vector<std::string>& sample_of(Domain d) const {
    return samples[static_cast<std::size_t>(d)];
  }
};

/// Domain for pass flags of models ranked strong -> weak.
Domain classify_pass_pattern(bool strong, bool middle, bool weak);

struct PartitionOptions {
  double threshold = 0.2;
  std::size_t sample_cap = 100;
  std::uint64_t seed = 0;
};

/// Answerable examples with similarity below the threshold, split by which of
/// the three ranked models (strong -> weak) answer them exactly.
DomainPartition partition_domains(std::span<const RCExample> examples,
                                  std::span<const double> similarities,
                                  std::span<const NamedPredictions> ranked_models,
                                  const PartitionOptions& opts = {});

/// Uniform sample of min(cap, |ids|) items without replacement; deterministic
/// for a given seed on every platform. Output keeps the input order.
std::vector<std::string> deterministic_sample(const std::vector<std::string>& ids,
                                              std::size_t cap, std::uint64_t seed);

// Question-type labels for manual annotation of hard questions.
enum class QuestionType : std::uint8_t {
  Synonymy,
  CommonSenseKnowledge,
  MultipleSentenceReasoning,
  NoSemanticVariation,
  Others,
  Typo,
};
inline constexpr std::size_t kNumQuestionTypes = 6;
std::string_view question_type_name(QuestionType t);

struct Annotation {
  std::string id;
  std::array<bool, kNumQuestionTypes> labels{};
};

/// TSV with columns id, domain, question, context excerpt, one empty column
/// per question type.
void write_annotation_template(std::ostream& out, std::span<const RCExample> examples,
                               const DomainPartition& partition,
                               std::size_t excerpt_chars = 200);

/// Reads a filled template; a label cell counts as set when it is non-empty
/// and not "0".
std::vector<Annotation> read_annotations(std::istream& in);

}  // namespace ckprobe
