#include "ckprobe/kb_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <tuple>

#include "ckprobe/errors.hpp"
#include "ckprobe/io.hpp"

namespace ckprobe {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

using TripleKey = std::tuple<std::string_view, std::string, std::string>;

TripleKey sort_key(const Triple& t) {
  return {relation_name(t.relation), t.subject, t.object};
}

class Accumulator {
 public:
  explicit Accumulator(const IngestOptions& opts) : opts_(opts) {}

  void feed(std::string_view line) {
    ++report_.lines_read;
    const std::size_t lineno = report_.lines_read;
    if (line.empty()) return;
    auto fields = split(line, '\t');
    if (fields.size() != 5) {
      skip(lineno, "expected 5 tab-separated fields, found " +
                       std::to_string(fields.size()));
      return;
    }
    const std::string_view rel_uri = fields[1];
    if (rel_uri.substr(0, 3) != "/r/") {
      skip(lineno, "relation URI does not start with /r/");
      return;
    }
    auto relation = parse_relation(rel_uri.substr(3));
    if (!relation) {
      ++report_.dropped_relation;
      return;
    }
    if (!fields[2].starts_with("/c/en/") || !fields[3].starts_with("/c/en/")) {
      ++report_.dropped_non_english;
      return;
    }
    auto subject = normalize_concept(fields[2]);
    auto object = normalize_concept(fields[3]);
    if (!subject || !object) {
      skip(lineno, "empty concept after normalization");
      return;
    }

    double weight = 0.0;
    try {
      auto meta = nlohmann::json::parse(fields[4]);
      if (!meta.is_object() || !meta.contains("weight") ||
          !meta["weight"].is_number()) {
        skip(lineno, "metadata has no numeric weight");
        return;
      }
      weight = meta["weight"].get<double>();
    } catch (const nlohmann::json::exception& e) {
      skip(lineno, std::string("unparseable metadata: ") + e.what());
      return;
    }
    if (!(weight >= 0.0)) {
      skip(lineno, "negative or non-finite weight");
      return;
    }
    if (opts_.min_weight && weight < *opts_.min_weight) {
      ++report_.dropped_low_weight;
      return;
    }

    Triple t{std::move(*subject), *relation, std::move(*object), weight};
    auto [it, inserted] = merged_.try_emplace(sort_key(t), t);
    if (!inserted) {
      ++report_.duplicates_merged;
      it->second.weight = std::max(it->second.weight, weight);
    }
  }

  IngestReport finish() && {
    report_.triples.reserve(merged_.size());
    for (auto& [key, t] : merged_) report_.triples.push_back(std::move(t));
    return std::move(report_);
  }

 private:
  void skip(std::size_t line, std::string reason) {
    report_.malformed.push_back({line, std::move(reason)});
  }

  IngestOptions opts_;
  IngestReport report_;
  // Keys view the static relation name table, so they stay valid.
  std::map<TripleKey, Triple> merged_;
};

}  // namespace

std::optional<std::string> normalize_concept(std::string_view uri) {
  constexpr std::string_view kPrefix = "/c/en/";
  if (!uri.starts_with(kPrefix)) return std::nullopt;
  std::string_view rest = uri.substr(kPrefix.size());
  // Drop part-of-speech and sense suffixes: /c/en/spring/n/wn/time
  rest = rest.substr(0, rest.find('/'));
  std::string out;
  out.reserve(rest.size());
  for (char c : rest) {
    if (c == '_') {
      out.push_back(' ');
    } else if (c >= 'A' && c <= 'Z') {
      out.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      out.push_back(c);
    }
  }
  auto first = out.find_first_not_of(' ');
  if (first == std::string::npos) return std::nullopt;
  out.erase(0, first);
  out.erase(out.find_last_not_of(' ') + 1);
  return out;
}

IngestReport parse_assertions(std::istream& in, const IngestOptions& opts) {
  Accumulator acc(opts);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    acc.feed(line);
  }
  return std::move(acc).finish();
}

IngestReport parse_assertions(const std::filesystem::path& path,
                              const IngestOptions& opts) {
  Accumulator acc(opts);
  for_each_line(path, [&](std::string_view line) { acc.feed(line); });
  return std::move(acc).finish();
}

std::string to_assertion_line(const Triple& t) {
  auto concept_uri = [](const std::string& text) {
    std::string uri = "/c/en/";
    for (char c : text) uri.push_back(c == ' ' ? '_' : c);
    return uri;
  };
  const std::string rel = "/r/" + std::string(relation_name(t.relation));
  const std::string start = concept_uri(t.subject);
  const std::string end = concept_uri(t.object);
  nlohmann::json meta = {{"weight", t.weight}};
  return "/a/[" + rel + "/," + start + "/," + end + "/]\t" + rel + "\t" +
         start + "\t" + end + "\t" + meta.dump();
}

RelationCounts relation_stats(const std::vector<Triple>& triples) {
  RelationCounts counts{};
  for (const auto& t : triples) ++counts[relation_index(t.relation)];
  return counts;
}

void write_triples(std::ostream& out, const std::vector<Triple>& triples) {
  for (const auto& t : triples) {
    out << relation_name(t.relation) << '\t' << t.subject << '\t' << t.object
        << '\t' << format_double(t.weight) << '\n';
  }
}

std::vector<Triple> read_triples(std::istream& in) {
  std::vector<Triple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 4) {
      throw ParseError("line " + std::to_string(lineno),
                       "expected relation, subject, object, weight");
    }
    auto relation = parse_relation(fields[0]);
    if (!relation) {
      throw ParseError("line " + std::to_string(lineno),
                       "unknown relation '" + std::string(fields[0]) + "'");
    }
    double weight = 0.0;
    auto [ptr, ec] = std::from_chars(fields[3].data(),
                                     fields[3].data() + fields[3].size(), weight);
    if (ec != std::errc{} || ptr != fields[3].data() + fields[3].size()) {
      throw ParseError("line " + std::to_string(lineno), "bad weight");
    }
    out.push_back({std::string(fields[1]), *relation, std::string(fields[2]),
                   weight});
  }
  return out;
}

std::vector<ProbeGroup> build_probe_set(const std::vector<Triple>& triples,
                                        const Vocab& vocab) {
  std::map<std::pair<std::string_view, std::string>, std::set<std::string>>
      groups;
  std::map<std::string_view, Relation> relation_of;
  for (const auto& t : triples) {
    auto id = single_token_id(t.object, vocab);
    if (!id) continue;
    const auto name = relation_name(t.relation);
    relation_of[name] = t.relation;
    groups[{name, t.subject}].insert(vocab.token(*id));
  }
  std::vector<ProbeGroup> out;
  out.reserve(groups.size());
  for (auto& [key, answers] : groups) {
    out.push_back({key.second, relation_of.at(key.first),
                   std::vector<std::string>(answers.begin(), answers.end())});
  }
  return out;
}

}  // namespace ckprobe
