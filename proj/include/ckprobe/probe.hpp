#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "ckprobe/kb_ingest.hpp"
#include "ckprobe/relations.hpp"
#include "ckprobe/scorer.hpp"
#include "ckprobe/tokenizer.hpp"

namespace ckprobe {

inline constexpr std::string_view kSubjectSlot = "[[SUBJ]]";
inline constexpr std::string_view kObjectSlot = "[[OBJ]]";
inline constexpr std::size_t kTopK = 100;

// A cloze pattern for one relation.
class Template {
 public:
  /// Throws ConfigError unless both placeholders occur exactly once and the
  /// pattern ends with " .".
  Template(Relation relation, std::string pattern);

  Relation relation() const noexcept { return relation_; }
  const std::string& pattern() const noexcept { return pattern_; }

  /// Pattern with the subject filled in and the object replaced by `object`.
  std::string fill(std::string_view subject, std::string_view object) const;

 private:
  Relation relation_;
  std::string pattern_;
};

using TemplateSet = std::map<Relation, Template>;

/// One template per relation, as shipped.
TemplateSet default_templates();

/// Lines of `relation<TAB>pattern`. Blank lines and lines starting with '#'
/// are ignored.
TemplateSet load_templates(std::istream& in);
TemplateSet load_templates(const std::filesystem::path& path);

struct ProbeQuery {
  ProbeGroup group;
  TokenSeq tokens;  // [CLS] ... [SEP]
  std::size_t mask_index = 0;
  std::vector<TokenId> answer_ids;  // sorted
};

/// Renders `group` through `tmpl`: subject substituted, object masked,
/// tokenized and framed with [CLS]/[SEP].
ProbeQuery render_query(const ProbeGroup& group, const Template& tmpl,
                        const Vocab& vocab);

struct SkippedGroup {
  ProbeGroup group;
  std::string reason;
};

struct RenderedQueries {
  std::vector<ProbeQuery> queries;
  std::vector<SkippedGroup> skipped;
};

/// Renders every group that has a template. Groups without a template, and
/// degenerate groups whose subject is one of its answers, are skipped.
RenderedQueries render_queries(const std::vector<ProbeGroup>& groups,
                               const TemplateSet& templates, const Vocab& vocab);

struct ProbeResult {
  ProbeQuery query;
  // Absent when restored from a results file or when distributions were not
  // retained.
  std::shared_ptr<const Distribution> distribution;
  std::size_t best_rank = 0;
  std::vector<TokenId> topk_ids;
  std::string error;  // non-empty when scoring failed

  bool ok() const noexcept { return error.empty(); }
};

struct ProbeOptions {
  std::size_t threads = 1;
  bool keep_distributions = true;
  std::size_t top_k = kTopK;
};

struct ProbeRun {
  std::vector<ProbeResult> results;  // same order as the queries
  std::size_t failures = 0;
};

/// Scores every query. A scorer exception marks that result as failed and the
/// batch continues. Output does not depend on `opts.threads`.
ProbeRun run_probe(const std::vector<ProbeQuery>& queries, const Scorer& scorer,
                   const ProbeOptions& opts = {});

/// Line-delimited JSON, one record per result: relation, subject, answers,
/// best_rank, top10 (token strings), top_ids, and error for failed queries.
void write_probe_results(std::ostream& out, const std::vector<ProbeResult>& results,
                         const Vocab& vocab);

/// Inverse of write_probe_results. Queries are re-rendered with `templates`.
std::vector<ProbeResult> read_probe_results(std::istream& in, const Vocab& vocab,
                                            const TemplateSet& templates);

}  // namespace ckprobe
