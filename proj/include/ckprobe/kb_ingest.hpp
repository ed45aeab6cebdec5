#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ckprobe/relations.hpp"
#include "ckprobe/tokenizer.hpp"

namespace ckprobe {

// One English (subject, relation, object) assertion.
struct Triple {
  std::string subject;
  Relation relation{};
  std::string object;
  double weight = 0.0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct SkippedLine {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct IngestReport {
  std::vector<Triple> triples;
  std::vector<SkippedLine> malformed;
  std::size_t lines_read = 0;
  std::size_t dropped_non_english = 0;
  std::size_t dropped_relation = 0;
  std::size_t dropped_low_weight = 0;
  std::size_t duplicates_merged = 0;
};

struct IngestOptions {
  // Assertions with a weight strictly below this are dropped.
  std::optional<double> min_weight;
};

/// Parses a ConceptNet 5.6 assertion dump (tab-separated: assertion URI,
/// relation URI, start URI, end URI, JSON metadata with "weight").
/// Never aborts on a bad line; malformed lines are listed in the report.
/// Output is deduplicated on (relation, subject, object), keeping the maximum
/// weight, and sorted by relation, subject, object.
IngestReport parse_assertions(std::istream& in, const IngestOptions& opts = {});

/// Same, reading a plain or gzip-compressed file.
IngestReport parse_assertions(const std::filesystem::path& path,
                              const IngestOptions& opts = {});

/// "/c/en/spring/n" -> "spring"; "/c/en/ice_cream" -> "ice cream".
/// Returns nullopt for non-English or malformed concept URIs.
std::optional<std::string> normalize_concept(std::string_view uri);

/// Renders a triple back into the assertion dump format.
std::string to_assertion_line(const Triple& t);

using RelationCounts = std::array<std::size_t, kNumRelations>;

RelationCounts relation_stats(const std::vector<Triple>& triples);

// Cache format: relation \t subject \t object \t weight, one per line.
void write_triples(std::ostream& out, const std::vector<Triple>& triples);
std::vector<Triple> read_triples(std::istream& in);

// Gold objects of one (subject, relation) pair, each a single vocab token.
struct ProbeGroup {
  std::string subject;
  Relation relation{};
  std::vector<std::string> answers;  // sorted, unique

  friend bool operator==(const ProbeGroup&, const ProbeGroup&) = default;
};

/// Keeps triples whose object is a single vocabulary token and groups them by
/// (subject, relation). Ordered by relation name, then subject.
std::vector<ProbeGroup> build_probe_set(const std::vector<Triple>& triples,
                                        const Vocab& vocab);

}  // namespace ckprobe
