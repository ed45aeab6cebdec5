#include "ckprobe/probe.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <nlohmann/json.hpp>
#include <thread>

#include "ckprobe/errors.hpp"
#include "ckprobe/ranking.hpp"

namespace ckprobe {

namespace {

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

void replace_once(std::string& text, std::string_view slot, std::string_view value) {
  const auto pos = text.find(slot);
  text.replace(pos, slot.size(), value);
}

}  // namespace

Template::Template(Relation relation, std::string pattern)
    : relation_(relation), pattern_(std::move(pattern)) {
  const auto where = "template for " + std::string(relation_name(relation));
  if (count_occurrences(pattern_, kSubjectSlot) != 1) {
    throw ConfigError(where + " must contain [[SUBJ]] exactly once");
  }
  if (count_occurrences(pattern_, kObjectSlot) != 1) {
    throw ConfigError(where + " must contain [[OBJ]] exactly once");
  }
  if (!pattern_.ends_with(" .")) {
    throw ConfigError(where + " must end with \" .\"");
  }
}

std::string Template::fill(std::string_view subject, std::string_view object) const {
  std::string s = pattern_;
  replace_once(s, kSubjectSlot, subject);
  replace_once(s, kObjectSlot, object);
  return s;
}

TemplateSet default_templates() {
  TemplateSet out;
  for (const auto& info : all_relations()) {
    out.emplace(info.relation, Template(info.relation, std::string(info.pattern)));
  }
  return out;
}

TemplateSet load_templates(std::istream& in) {
  TemplateSet out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    const std::string where = "template line " + std::to_string(lineno);
    if (tab == std::string::npos) throw ParseError(where, "expected relation<TAB>pattern");
    auto relation = parse_relation(std::string_view(line).substr(0, tab));
    if (!relation) {
      throw ParseError(where, "unknown relation '" + line.substr(0, tab) + "'");
    }
    if (out.contains(*relation)) {
      throw ParseError(where, "second template for " + line.substr(0, tab));
    }
    out.emplace(*relation, Template(*relation, line.substr(tab + 1)));
  }
  return out;
}

TemplateSet load_templates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open templates " + path.string());
  return load_templates(in);
}

ProbeQuery render_query(const ProbeGroup& group, const Template& tmpl,
                        const Vocab& vocab) {
  if (tmpl.relation() != group.relation) {
    throw ConfigError("template relation " + std::string(relation_name(tmpl.relation())) +
                      " does not match group relation " +
                      std::string(relation_name(group.relation)));
  }
  if (group.answers.empty()) throw ConfigError("probe group without answers");

  ProbeQuery q;
  q.group = group;
  for (const auto& answer : group.answers) {
    auto id = single_token_id(answer, vocab);
    if (!id) {
      throw ConfigError("answer '" + answer + "' is not a single vocabulary token");
    }
    q.answer_ids.push_back(*id);
  }
  std::sort(q.answer_ids.begin(), q.answer_ids.end());
  q.answer_ids.erase(std::unique(q.answer_ids.begin(), q.answer_ids.end()),
                     q.answer_ids.end());

  const std::string sentence = tmpl.fill(group.subject, kObjectSlot);
  const auto slot = sentence.find(kObjectSlot);
  const std::string_view view(sentence);

  q.tokens.push_back(vocab.cls_id(), std::string(kClsToken));
  q.tokens.append(tokenize(view.substr(0, slot), vocab));
  q.mask_index = q.tokens.size();
  q.tokens.push_back(vocab.mask_id(), std::string(kMaskToken));
  q.tokens.append(tokenize(view.substr(slot + kObjectSlot.size()), vocab));
  q.tokens.push_back(vocab.sep_id(), std::string(kSepToken));
  return q;
}

RenderedQueries render_queries(const std::vector<ProbeGroup>& groups,
                               const TemplateSet& templates, const Vocab& vocab) {
  RenderedQueries out;
  for (const auto& g : groups) {
    auto it = templates.find(g.relation);
    if (it == templates.end()) {
      out.skipped.push_back({g, "no template for relation"});
      continue;
    }
    if (std::find(g.answers.begin(), g.answers.end(), g.subject) != g.answers.end()) {
      out.skipped.push_back({g, "subject is one of its own answers"});
      continue;
    }
    out.queries.push_back(render_query(g, it->second, vocab));
  }
  return out;
}

ProbeRun run_probe(const std::vector<ProbeQuery>& queries, const Scorer& scorer,
                   const ProbeOptions& opts) {
  ProbeRun run;
  run.results.resize(queries.size());

  auto score_one = [&](std::size_t i) {
    ProbeResult& r = run.results[i];
    r.query = queries[i];
    try {
      auto dist = std::make_shared<const Distribution>(
          scorer.score_masked(queries[i].tokens, queries[i].mask_index));
      if (dist->size() != scorer.info().vocab_size) {
        throw ConfigError("scorer returned a distribution of the wrong size");
      }
      r.best_rank = answer_rank(*dist, queries[i].answer_ids);
      r.topk_ids = top_k(*dist, opts.top_k);
      if (opts.keep_distributions) r.distribution = std::move(dist);
    } catch (const std::exception& e) {
      r.error = e.what();
      if (r.error.empty()) r.error = "scorer failure";
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(opts.threads, 1, queries.size() + 1);
  if (workers <= 1) {
    for (std::size_t i = 0; i < queries.size(); ++i) score_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < queries.size(); i = next++) score_one(i);
      });
    }
  }

  for (const auto& r : run.results) {
    if (!r.ok()) ++run.failures;
  }
  return run;
}

void write_probe_results(std::ostream& out, const std::vector<ProbeResult>& results,
                         const Vocab& vocab) {
  for (const auto& r : results) {
    nlohmann::ordered_json rec;
    rec["relation"] = relation_name(r.query.group.relation);
    rec["subject"] = r.query.group.subject;
    rec["answers"] = r.query.group.answers;
    rec["best_rank"] = r.best_rank;
    std::vector<std::string> top10;
    for (std::size_t i = 0; i < std::min<std::size_t>(10, r.topk_ids.size()); ++i) {
      top10.push_back(vocab.token(r.topk_ids[i]));
    }
    rec["top10"] = top10;
    rec["top_ids"] = r.topk_ids;
    if (!r.ok()) rec["error"] = r.error;
    out << rec.dump() << '\n';
  }
}

std::vector<ProbeResult> read_probe_results(std::istream& in, const Vocab& vocab,
                                            const TemplateSet& templates) {
  std::vector<ProbeResult> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = "results line " + std::to_string(lineno);
    try {
      auto rec = nlohmann::json::parse(line);
      auto relation = parse_relation(rec.at("relation").get<std::string>());
      if (!relation) throw ParseError(where, "unknown relation");
      ProbeGroup group{rec.at("subject").get<std::string>(), *relation,
                       rec.at("answers").get<std::vector<std::string>>()};
      auto tmpl = templates.find(*relation);
      if (tmpl == templates.end()) throw ParseError(where, "no template for relation");
      ProbeResult r;
      r.query = render_query(group, tmpl->second, vocab);
      r.best_rank = rec.at("best_rank").get<std::size_t>();
      r.topk_ids = rec.at("top_ids").get<std::vector<TokenId>>();
      for (TokenId id : r.topk_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
          throw ParseError(where, "top id outside vocabulary");
        }
      }
      if (rec.contains("error")) r.error = rec["error"].get<std::string>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where, e.what());
    }
  }
  return out;
}

}  // namespace ckprobe
