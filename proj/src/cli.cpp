#include "ckprobe/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <sstream>

#include "ckprobe/errors.hpp"
#include "ckprobe/fusion.hpp"
#include "ckprobe/io.hpp"
#include "ckprobe/kb_ingest.hpp"
#include "ckprobe/metrics.hpp"
#include "ckprobe/probe.hpp"
#include "ckprobe/rc_difficulty.hpp"
#include "ckprobe/remote_scorer.hpp"
#include "ckprobe/scorer.hpp"

namespace ckprobe {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// Every flag of every subcommand lands here; each subcommand registers the
// subset it uses.
struct Options {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  std::string kb;
  std::string triples;
  std::optional<double> min_weight;
  std::string vocab;
  std::string templates;
  std::vector<std::string> relations;

  std::string scorer = "local";
  std::string corpus;
  double smoothing = 1.0;
  std::string endpoint;
  std::string model = "bert-base-uncased";
  int timeout_ms = 30000;

  std::string results;
  std::vector<std::size_t> ks;
  std::string relation_a = "Antonym";
  std::string relation_b = "Synonym";
  std::string relation;
  std::vector<std::string> subjects;
  std::size_t k = 10;
  std::size_t m = 10;
  std::size_t max_rank = 1000;
  double drop_threshold = 1.0;
  double entropy_threshold = 0.95;

  std::string squad;
  std::vector<std::string> predictions;
  double bin_width = 0.1;
  double sim_threshold = 0.2;
  std::size_t sample_cap = 100;

  std::size_t instances = 20;
  std::string fixture;
  bool scaled = false;
  double tolerance = 1e-4;
};

// Files produced by a command, held in memory until everything succeeded.
class Artifacts {
 public:
  void add(std::string name, std::string contents) {
    files_.emplace_back(std::move(name), std::move(contents));
  }

  void commit(const fs::path& dir, ordered_json manifest) const {
    fs::create_directories(dir);
    ordered_json outputs = ordered_json::object();
    for (const auto& [name, contents] : files_) {
      write_file_atomic(dir / name, contents);
      outputs[name] = sha256_hex(contents);
    }
    manifest["outputs"] = std::move(outputs);
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

void require_file(const std::string& flag, const std::string& path) {
  if (path.empty()) throw UsageError(flag + " is required");
  if (!fs::is_regular_file(path)) throw UsageError(flag + ": no such file: " + path);
}

void optional_file(const std::string& flag, const std::string& path) {
  if (!path.empty()) require_file(flag, path);
}

void require_out(const Options& o) {
  if (o.out.empty()) throw UsageError("--out is required");
  if (fs::exists(o.out) && !fs::is_directory(o.out)) {
    throw UsageError("--out exists and is not a directory: " + o.out);
  }
}

void require_ks(const std::vector<std::size_t>& ks) {
  if (ks.empty()) throw UsageError("--ks must list at least one value");
  for (std::size_t k : ks) {
    if (k == 0) throw UsageError("--ks values must be positive");
  }
}

Relation require_relation(const std::string& flag, const std::string& name) {
  auto r = parse_relation(name);
  if (!r) throw UsageError(flag + ": unknown relation \"" + name + "\"");
  return *r;
}

std::string join(const std::vector<std::string>& xs, std::string_view sep) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += sep;
    s += xs[i];
  }
  return s;
}

std::string pct(double v) { return format_fixed(v, 2); }

// Manifest skeleton: tool, command, every option value of the subcommand
// (except --out, which is where the manifest lives) and input digests.
ordered_json make_manifest(const CLI::App& sub, const std::vector<std::string>& inputs) {
  ordered_json m;
  m["tool"] = kToolName;
  m["version"] = kToolVersion;
  m["command"] = sub.get_name();
  ordered_json config = ordered_json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_name();
    if (name == "--help" || name == "--out") continue;
    std::string value;
    if (opt->count() > 0) {
      value = join(opt->results(), ",");
    } else {
      value = opt->get_default_str();
    }
    config[name.substr(name.find_first_not_of('-'))] = value;
  }
  m["config"] = std::move(config);
  ordered_json digests = ordered_json::object();
  for (const auto& path : inputs) {
    if (!path.empty()) digests[path] = sha256_file(path);
  }
  m["inputs"] = std::move(digests);
  return m;
}

TemplateSet load_template_set(const Options& o) {
  return o.templates.empty() ? default_templates() : load_templates(fs::path(o.templates));
}

std::vector<std::string> read_corpus(const std::string& path) {
  std::vector<std::string> corpus;
  for_each_line(path, [&](std::string_view line) {
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) corpus.emplace_back(line);
  });
  return corpus;
}

void validate_scorer(Options& o) {
  if (o.scorer == "local") {
    require_file("--corpus", o.corpus);
    if (!(o.smoothing > 0.0)) throw UsageError("--smoothing must be positive");
  } else if (o.scorer == "remote") {
    if (o.endpoint.empty()) o.endpoint = default_endpoint().value_or("");
    if (o.endpoint.empty()) {
      throw UsageError(std::string("--endpoint or ") + kEndpointEnvVar +
                       " is required for the remote scorer");
    }
    if (o.timeout_ms <= 0) throw UsageError("--timeout-ms must be positive");
  } else {
    throw UsageError("--scorer must be local or remote");
  }
}

std::unique_ptr<Scorer> make_scorer(const Options& o, const Vocab& vocab) {
  if (o.scorer == "local") {
    return build_cooccurrence_scorer(read_corpus(o.corpus), vocab, o.smoothing);
  }
  RemoteOptions ro;
  ro.model = o.model;
  ro.timeout = std::chrono::milliseconds(o.timeout_ms);
  ro.pool_size = std::max<std::size_t>(o.threads, 1);
  return std::make_unique<RemoteScorer>(o.endpoint, vocab, ro);
}

void validate_kb(const Options& o) {
  if (o.kb.empty() == o.triples.empty()) {
    throw UsageError("exactly one of --kb and --triples is required");
  }
  optional_file("--kb", o.kb);
  optional_file("--triples", o.triples);
}

std::vector<Triple> load_triples(const Options& o) {
  if (!o.kb.empty()) {
    IngestOptions io;
    io.min_weight = o.min_weight;
    return parse_assertions(fs::path(o.kb), io).triples;
  }
  std::ifstream in(o.triples);
  return read_triples(in);
}

std::vector<Relation> relation_filter(const Options& o) {
  std::vector<Relation> out;
  for (const auto& name : o.relations) out.push_back(require_relation("--relations", name));
  return out;
}

RenderedQueries build_queries(const Options& o, const Vocab& vocab,
                              const TemplateSet& templates,
                              const std::vector<Relation>& keep) {
  auto groups = build_probe_set(load_triples(o), vocab);
  if (!keep.empty()) {
    std::erase_if(groups, [&](const ProbeGroup& g) {
      return std::find(keep.begin(), keep.end(), g.relation) == keep.end();
    });
  }
  return render_queries(groups, templates, vocab);
}

std::vector<ProbeResult> load_results(const Options& o, const Vocab& vocab) {
  std::ifstream in(o.results);
  return read_probe_results(in, vocab, load_template_set(o));
}

std::string hits_table(const HitsReport& r) {
  std::ostringstream s;
  s << "relation\tsamples";
  for (std::size_t k : r.ks) s << "\thits@" << k;
  s << '\n';
  for (const auto& row : r.relations) {
    s << relation_name(row.relation) << '\t' << row.samples;
    for (double h : row.hits) s << '\t' << pct(h);
    s << '\n';
  }
  s << "micro\t" << r.total;
  for (double h : r.micro) s << '\t' << pct(h);
  s << "\nmacro\t" << r.relations.size();
  for (double h : r.macro) s << '\t' << pct(h);
  s << '\n';
  return s.str();
}

// ---------------------------------------------------------------- commands

int cmd_ingest(const CLI::App& sub, Options& o, std::ostream& out) {
  require_file("--kb", o.kb);
  require_out(o);
  if (o.min_weight && *o.min_weight < 0.0) throw UsageError("--min-weight must be >= 0");

  IngestOptions io;
  io.min_weight = o.min_weight;
  const IngestReport report = parse_assertions(fs::path(o.kb), io);

  Artifacts art;
  std::ostringstream triples;
  write_triples(triples, report.triples);
  art.add("triples.tsv", triples.str());

  std::ostringstream stats;
  stats << "relation\ttriples\n";
  const auto counts = relation_stats(report.triples);
  for (const auto& info : all_relations()) {
    stats << info.name << '\t' << counts[relation_index(info.relation)] << '\n';
  }
  art.add("relation_stats.tsv", stats.str());

  std::ostringstream skipped;
  skipped << "line\treason\n";
  for (const auto& s : report.malformed) skipped << s.line << '\t' << s.reason << '\n';
  art.add("malformed.tsv", skipped.str());

  ordered_json summary;
  summary["lines_read"] = report.lines_read;
  summary["triples"] = report.triples.size();
  summary["malformed"] = report.malformed.size();
  summary["dropped_non_english"] = report.dropped_non_english;
  summary["dropped_relation"] = report.dropped_relation;
  summary["dropped_low_weight"] = report.dropped_low_weight;
  summary["duplicates_merged"] = report.duplicates_merged;
  art.add("ingest_summary.json", summary.dump(2) + "\n");

  art.commit(o.out, make_manifest(sub, {o.kb}));
  out << "read " << report.lines_read << " lines: " << report.triples.size()
      << " triples, " << report.malformed.size() << " malformed, "
      << report.dropped_non_english << " non-English, " << report.dropped_relation
      << " other relations, " << report.dropped_low_weight << " below weight, "
      << report.duplicates_merged << " duplicates merged\n";
  return kExitOk;
}

int cmd_probe(const CLI::App& sub, Options& o, std::ostream& out) {
  validate_kb(o);
  require_file("--vocab", o.vocab);
  optional_file("--templates", o.templates);
  validate_scorer(o);
  require_out(o);
  if (o.threads == 0) throw UsageError("--threads must be positive");
  const auto keep = relation_filter(o);

  const Vocab vocab = Vocab::load(fs::path(o.vocab));
  const TemplateSet templates = load_template_set(o);
  const RenderedQueries rendered = build_queries(o, vocab, templates, keep);
  const auto scorer = make_scorer(o, vocab);

  ProbeOptions po;
  po.threads = o.threads;
  po.keep_distributions = false;
  const ProbeRun run = run_probe(rendered.queries, *scorer, po);

  Artifacts art;
  std::ostringstream results;
  write_probe_results(results, run.results, vocab);
  art.add("results.jsonl", results.str());

  std::ostringstream skipped;
  skipped << "relation\tsubject\treason\n";
  for (const auto& s : rendered.skipped) {
    skipped << relation_name(s.group.relation) << '\t' << s.group.subject << '\t' << s.reason
            << '\n';
  }
  art.add("skipped.tsv", skipped.str());

  art.commit(o.out, make_manifest(sub, {o.kb, o.triples, o.vocab, o.templates, o.corpus}));
  out << "probed " << run.results.size() << " queries (" << run.failures << " failed, "
      << rendered.skipped.size() << " groups skipped) with " << scorer->info().model << '\n';
  return run.failures == 0 ? kExitOk : kExitFailure;
}

int cmd_metrics(const CLI::App& sub, Options& o, std::ostream& out) {
  require_file("--results", o.results);
  require_file("--vocab", o.vocab);
  optional_file("--templates", o.templates);
  require_ks(o.ks);
  require_out(o);

  const Vocab vocab = Vocab::load(fs::path(o.vocab));
  const auto results = load_results(o, vocab);
  const HitsReport report = hits_report(results, o.ks);

  // Cumulative hits curve for K = 1 .. max K.
  std::vector<std::size_t> all_ks(*std::max_element(o.ks.begin(), o.ks.end()));
  for (std::size_t i = 0; i < all_ks.size(); ++i) all_ks[i] = i + 1;
  const HitsReport curve = hits_report(results, all_ks);

  Artifacts art;
  const std::string table = hits_table(report);
  art.add("hits.tsv", table);
  std::ostringstream plot;
  plot << "k\tmicro\tmacro\n";
  for (std::size_t i = 0; i < all_ks.size(); ++i) {
    plot << all_ks[i] << '\t' << format_double(curve.micro[i]) << '\t'
         << format_double(curve.macro[i]) << '\n';
  }
  art.add("hits_curve.tsv", plot.str());

  art.commit(o.out, make_manifest(sub, {o.results, o.vocab, o.templates}));
  out << table;
  if (report.failed_excluded > 0) {
    out << report.failed_excluded << " failed results excluded\n";
  }
  return kExitOk;
}

int cmd_overlap(const CLI::App& sub, Options& o, std::ostream& out) {
  require_file("--results", o.results);
  require_file("--vocab", o.vocab);
  optional_file("--templates", o.templates);
  require_ks(o.ks);
  require_out(o);
  const Relation ra = require_relation("--relation-a", o.relation_a);
  const Relation rb = require_relation("--relation-b", o.relation_b);

  const Vocab vocab = Vocab::load(fs::path(o.vocab));
  const auto results = load_results(o, vocab);
  const auto a = select_relation(results, ra);
  const auto b = select_relation(results, rb);

  std::ostringstream table;
  table << "k\toverlap\tshared_subjects\n";
  for (std::size_t k : o.ks) {
    const OverlapResult r = overlap_at_k(a, b, k);
    table << k << '\t' << pct(r.percent) << '\t' << r.shared_subjects << '\n';
  }
  Artifacts art;
  art.add("overlap.tsv", table.str());
  art.commit(o.out, make_manifest(sub, {o.results, o.vocab, o.templates}));
  out << o.relation_a << " vs " << o.relation_b << '\n' << table.str();
  return kExitOk;
}

int cmd_cross_grade(const CLI::App& sub, Options& o, std::ostream& out) {
  require_file("--results", o.results);
  require_file("--vocab", o.vocab);
  optional_file("--templates", o.templates);
  require_ks(o.ks);
  require_out(o);
  const Relation ra = require_relation("--relation-a", o.relation_a);
  const Relation rb = require_relation("--relation-b", o.relation_b);

  const Vocab vocab = Vocab::load(fs::path(o.vocab));
  const auto results = load_results(o, vocab);
  const auto predictions = select_relation(results, ra);
  const AnswerIndex gold = answers_by_subject(select_relation(results, rb));
  const CrossGradeReport r = cross_grade(predictions, gold, o.ks);

  std::ostringstream table;
  table << "k\tincorrect_rate\tgraded\texcluded\n";
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    table << r.ks[i] << '\t' << pct(r.incorrect_rate[i]) << '\t' << r.graded << '\t'
          << r.excluded << '\n';
  }
  Artifacts art;
  art.add("cross_grade.tsv", table.str());
  art.commit(o.out, make_manifest(sub, {o.results, o.vocab, o.templates}));
  out << o.relation_a << " predictions graded against " << o.relation_b << " answers\n"
      << table.str();
  return kExitOk;
}

int cmd_shapes(const CLI::App& sub, Options& o, std::ostream& out) {
  validate_kb(o);
  require_file("--vocab", o.vocab);
  optional_file("--templates", o.templates);
  validate_scorer(o);
  require_out(o);
  if (o.max_rank == 0) throw UsageError("--max-rank must be positive");
  const auto keep = relation_filter(o);

  const Vocab vocab = Vocab::load(fs::path(o.vocab));
  const TemplateSet templates = load_template_set(o);
  RenderedQueries rendered = build_queries(o, vocab, templates, keep);
  if (!o.subjects.empty()) {
    std::erase_if(rendered.queries, [&](const ProbeQuery& q) {
      return std::find(o.subjects.begin(), o.subjects.end(), q.group.subject) ==
             o.subjects.end();
    });
  }
  if (rendered.queries.empty()) throw EmptyError("no query matches the selection");
  const auto scorer = make_scorer(o, vocab);
  ProbeOptions po;
  po.threads = o.threads;
  const ProbeRun run = run_probe(rendered.queries, *scorer, po);

  const ShapeThresholds thresholds{o.drop_threshold, o.entropy_threshold};
  std::ostringstream shapes;
  std::ostringstream curves;
  shapes << "relation\tsubject\tshape\tnormalized_entropy\tmax_log10_drop\n";
  curves << "relation\tsubject\trank\tlog10_prob\n";
  std::map<std::string, std::size_t> tally;
  for (const auto& r : run.results) {
    if (!r.ok()) continue;
    const auto rel = relation_name(r.query.group.relation);
    const ShapeStats s = classify_shape(*r.distribution, thresholds);
    ++tally[std::string(shape_name(s.label))];
    shapes << rel << '\t' << r.query.group.subject << '\t' << shape_name(s.label) << '\t'
           << format_double(s.normalized_entropy) << '\t' << format_double(s.max_drop)
           << '\n';
    for (const auto& [rank, lp] : rank_curve(*r.distribution, o.max_rank)) {
      curves << rel << '\t' << r.query.group.subject << '\t' << rank << '\t'
             << format_double(lp) << '\n';
    }
  }
  Artifacts art;
  art.add("shapes.tsv", shapes.str());
  art.add("rank_curves.tsv", curves.str());
  art.commit(o.out, make_manifest(sub, {o.kb, o.triples, o.vocab, o.templates, o.corpus}));
  for (const auto& [label, n] : tally) out << label << '\t' << n << '\n';
  return run.failures == 0 ? kExitOk : kExitFailure;
}

int cmd_redundancy(const CLI::App& sub, Options& o, std::ostream& out) {
  require_file("--results", o.results);
  require_file("--vocab", o.vocab);
  optional_file("--templates", o.templates);
  require_out(o);
  if (o.k == 0 || o.m == 0) throw UsageError("--k and --m must be positive");
  const Relation rel = require_relation("--relation", o.relation);

  const Vocab vocab = Vocab::load(fs::path(o.vocab));
  const auto results = select_relation(load_results(o, vocab), rel);
  const RedundancyReport r = topk_redundancy(results, o.k, o.m);

  std::ostringstream table;
  table << "token\tfrequency\tpercent\n";
  for (std::size_t i = 0; i < r.tokens.size(); ++i) {
    table << vocab.token(r.tokens[i]) << '\t' << r.frequency[i] << '\t'
          << pct(100.0 * static_cast<double>(r.frequency[i]) /
                 static_cast<double>(results.size()))
          << '\n';
  }
  std::ostringstream presence;
  presence << "subject";
  for (TokenId id : r.tokens) presence << '\t' << vocab.token(id);
  presence << '\n';
  for (std::size_t i = 0; i < results.size(); ++i) {
    presence << results[i].query.group.subject;
    for (bool b : r.presence[i]) presence << '\t' << (b ? 1 : 0);
    presence << '\n';
  }
  Artifacts art;
  art.add("redundancy.tsv", table.str());
  art.add("presence.tsv", presence.str());
  art.commit(o.out, make_manifest(sub, {o.results, o.vocab, o.templates}));
  out << table.str();
  return kExitOk;
}

std::vector<NamedPredictions> load_predictions(const std::vector<std::string>& specs) {
  std::vector<NamedPredictions> out;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    const std::string name = spec.substr(0, eq);
    const std::string path = spec.substr(eq + 1);
    out.push_back({name, parse_predictions(fs::path(path))});
  }
  return out;
}

std::vector<std::string> validate_predictions(const std::vector<std::string>& specs) {
  std::vector<std::string> paths;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw UsageError("--predictions expects NAME=PATH, got " + spec);
    }
    paths.push_back(spec.substr(eq + 1));
    require_file("--predictions", paths.back());
  }
  return paths;
}

int cmd_rc_analyze(const CLI::App& sub, Options& o, std::ostream& out) {
  require_file("--squad", o.squad);
  if (o.predictions.empty()) throw UsageError("--predictions is required");
  auto inputs = validate_predictions(o.predictions);
  require_out(o);
  num_bins_for(o.bin_width);

  const auto examples = parse_squad(fs::path(o.squad));
  const auto models = load_predictions(o.predictions);
  const auto sims = example_similarities(examples, build_idf(examples));
  const auto curves = bucket_curve(examples, sims, models, o.bin_width);

  std::ostringstream sim_table;
  sim_table << "id\thas_answer\tsimilarity\n";
  for (std::size_t i = 0; i < examples.size(); ++i) {
    sim_table << examples[i].id << '\t' << (examples[i].is_impossible ? 0 : 1) << '\t'
              << format_double(sims[i]) << '\n';
  }
  std::ostringstream buckets;
  buckets << "model\tsplit\tlower\tupper\tcount\tscore\n";
  for (const auto& c : curves) {
    for (const auto* split : {&c.has_answer, &c.no_answer}) {
      const char* name = split == &c.has_answer ? "has_answer" : "no_answer";
      for (const Bin& b : *split) {
        buckets << c.model << '\t' << name << '\t' << format_fixed(b.lower, 2) << '\t'
                << format_fixed(b.upper, 2) << '\t' << b.count << '\t' << pct(b.score)
                << '\n';
      }
    }
    if (c.empty_bins > 0) {
      out << c.model << ": " << c.empty_bins << " empty bins omitted\n";
    }
  }
  Artifacts art;
  art.add("similarities.tsv", sim_table.str());
  art.add("buckets.tsv", buckets.str());
  inputs.insert(inputs.begin(), o.squad);
  art.commit(o.out, make_manifest(sub, inputs));
  out << buckets.str();
  return kExitOk;
}

int cmd_partition(const CLI::App& sub, Options& o, std::ostream& out) {
  require_file("--squad", o.squad);
  if (o.predictions.size() != 3) {
    throw UsageError("--predictions needs exactly three NAME=PATH entries, strongest first");
  }
  auto inputs = validate_predictions(o.predictions);
  require_out(o);
  if (!(o.sim_threshold >= 0.0 && o.sim_threshold <= 1.0)) {
    throw UsageError("--sim-threshold must lie in [0, 1]");
  }

  const auto examples = parse_squad(fs::path(o.squad));
  const auto models = load_predictions(o.predictions);
  const auto sims = example_similarities(examples, build_idf(examples));
  PartitionOptions po;
  po.threshold = o.sim_threshold;
  po.sample_cap = o.sample_cap;
  po.seed = o.seed;
  const DomainPartition p = partition_domains(examples, sims, models, po);

  std::ostringstream summary;
  summary << "domain\tcount\tsampled\n";
  std::ostringstream members;
  members << "id\tdomain\tsampled\n";
  for (Domain d : {Domain::A, Domain::B, Domain::C, Domain::D, Domain::Unclassified}) {
    summary << domain_name(d) << '\t' << p.of(d).size() << '\t' << p.sample_of(d).size()
            << '\n';
    const auto& sample = p.sample_of(d);
    for (const auto& id : p.of(d)) {
      const bool in = std::find(sample.begin(), sample.end(), id) != sample.end();
      members << id << '\t' << domain_name(d) << '\t' << (in ? 1 : 0) << '\n';
    }
  }
  std::ostringstream annotate;
  write_annotation_template(annotate, examples, p);

  Artifacts art;
  art.add("domains.tsv", summary.str());
  art.add("members.tsv", members.str());
  art.add("annotation_template.tsv", annotate.str());
  inputs.insert(inputs.begin(), o.squad);
  art.commit(o.out, make_manifest(sub, inputs));
  out << p.eligible << " eligible questions\n" << summary.str();
  return kExitOk;
}

Matrix read_matrix_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return read_matrix(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.where(), e.what());
  }
}

std::vector<double> read_vector_file(const fs::path& path) {
  Matrix m = read_matrix_file(path);
  if (m.rows() != 1) throw DimensionError(path.string() + ": expected a 1 x n matrix");
  return m.data();
}

int cmd_fusion_check(const CLI::App& sub, Options& o, std::ostream& out) {
  if (!o.fixture.empty() && !fs::is_directory(o.fixture)) {
    throw UsageError("--fixture: no such directory: " + o.fixture);
  }
  if (o.instances == 0 && o.fixture.empty()) throw UsageError("--instances must be positive");
  if (!o.out.empty()) require_out(o);

  const FuseOptions fo{o.scaled};
  std::ostringstream table;
  table << "op\tinstance\tentries\tmax_rel_error\tworst\n";
  double worst_pool = 0.0;
  double worst_fuse = 0.0;
  std::vector<std::string> inputs;
  auto record = [&](const char* op, const std::string& inst, const GradCheckResult& r,
                    double& worst) {
    table << op << '\t' << inst << '\t' << r.entries << '\t' << format_double(r.max_rel_error)
          << '\t' << r.worst << '\n';
    worst = std::max(worst, r.max_rel_error);
  };

  if (!o.fixture.empty()) {
    const fs::path dir(o.fixture);
    bool any = false;
    if (fs::exists(dir / "E.txt")) {
      for (const char* f : {"E.txt", "W.txt", "b.txt", "v.txt"}) inputs.push_back((dir / f).string());
      PoolParams p{read_matrix_file(dir / "W.txt"), read_vector_file(dir / "b.txt"),
                   read_vector_file(dir / "v.txt")};
      record("attention_pool", "fixture", grad_check_pool(read_matrix_file(dir / "E.txt"), p),
             worst_pool);
      any = true;
    }
    if (fs::exists(dir / "H.txt")) {
      for (const char* f : {"H.txt", "C.txt", "Wq.txt", "Wk.txt", "Wv.txt"}) {
        inputs.push_back((dir / f).string());
      }
      FuseParams p{read_matrix_file(dir / "Wq.txt"), read_matrix_file(dir / "Wk.txt"),
                   read_matrix_file(dir / "Wv.txt")};
      record("c2t_fuse", "fixture",
             grad_check_fuse(read_matrix_file(dir / "H.txt"), read_matrix_file(dir / "C.txt"),
                             p, fo),
             worst_fuse);
      any = true;
    }
    if (!any) throw ConfigError("fixture directory holds neither E.txt nor H.txt");
  }

  std::mt19937_64 rng(o.seed);
  std::uniform_int_distribution<std::size_t> small(1, 6);
  for (std::size_t i = 0; i < o.instances; ++i) {
    std::array<std::size_t, 8> dims{};
    for (auto& d : dims) d = small(rng);
    const auto pool = random_pool_instance(rng, dims[0], dims[1] + 1, dims[2] + 1);
    record("attention_pool", std::to_string(i), grad_check_pool(pool.elements, pool.params),
           worst_pool);
    const auto fuse = random_fuse_instance(rng, dims[3], dims[4] + 2, dims[5] - 1,
                                           dims[6] + 2, dims[7] + 1);
    record("c2t_fuse", std::to_string(i), grad_check_fuse(fuse.h, fuse.c, fuse.params, fo),
           worst_fuse);
  }

  if (!o.out.empty()) {
    Artifacts art;
    art.add("grad_check.tsv", table.str());
    art.commit(o.out, make_manifest(sub, inputs));
  }
  out << "attention_pool max relative error: " << format_double(worst_pool) << '\n'
      << "c2t_fuse max relative error: " << format_double(worst_fuse) << '\n';
  const bool ok = worst_pool < o.tolerance && worst_fuse < o.tolerance;
  out << (ok ? "PASS" : "FAIL") << " (tolerance " << format_double(o.tolerance) << ")\n";
  return ok ? kExitOk : kExitFailure;
}

int cmd_report(const CLI::App& sub, Options& o, std::ostream& out) {
  require_file("--results", o.results);
  require_file("--vocab", o.vocab);
  optional_file("--templates", o.templates);
  require_ks(o.ks);
  require_out(o);
  const Relation ra = require_relation("--relation-a", o.relation_a);
  const Relation rb = require_relation("--relation-b", o.relation_b);

  const Vocab vocab = Vocab::load(fs::path(o.vocab));
  const auto results = load_results(o, vocab);
  const HitsReport hits = hits_report(results, o.ks);

  std::ostringstream md;
  md << "# Probe report\n\n## hits@K\n\n| relation | samples |";
  for (std::size_t k : hits.ks) md << " hits@" << k << " |";
  md << "\n|---|---:|";
  for (std::size_t i = 0; i < hits.ks.size(); ++i) md << "---:|";
  md << '\n';
  auto row = [&](std::string_view name, std::size_t n, const std::vector<double>& v) {
    md << "| " << name << " | " << n << " |";
    for (double x : v) md << ' ' << pct(x) << " |";
    md << '\n';
  };
  for (const auto& r : hits.relations) row(relation_name(r.relation), r.samples, r.hits);
  row("micro", hits.total, hits.micro);
  row("macro", hits.relations.size(), hits.macro);

  const auto a = select_relation(results, ra);
  const auto b = select_relation(results, rb);
  md << "\n## " << o.relation_a << " vs " << o.relation_b << "\n\n";
  try {
    md << "| K | overlap | shared subjects |\n|---:|---:|---:|\n";
    for (std::size_t k : o.ks) {
      const auto r = overlap_at_k(a, b, k);
      md << "| " << k << " | " << pct(r.percent) << " | " << r.shared_subjects << " |\n";
    }
    const auto cg = cross_grade(a, answers_by_subject(b), o.ks);
    md << "\n| K | " << o.relation_a << " graded on " << o.relation_b
       << " | graded |\n|---:|---:|---:|\n";
    for (std::size_t i = 0; i < cg.ks.size(); ++i) {
      md << "| " << cg.ks[i] << " | " << pct(cg.incorrect_rate[i]) << " | " << cg.graded
         << " |\n";
    }
  } catch (const EmptyError& e) {
    md << "(" << e.what() << ")\n";
  }

  md << "\n## Most frequent top-10 tokens\n\n";
  for (const auto& r : hits.relations) {
    const auto rel = select_relation(results, r.relation);
    const auto red = topk_redundancy(rel, 10, 5);
    md << "- " << relation_name(r.relation) << ":";
    for (std::size_t i = 0; i < red.tokens.size(); ++i) {
      md << ' ' << vocab.token(red.tokens[i]) << " (" << red.frequency[i] << "/" << rel.size()
         << ")";
    }
    md << '\n';
  }

  Artifacts art;
  art.add("report.md", md.str());
  art.add("hits.tsv", hits_table(hits));
  art.commit(o.out, make_manifest(sub, {o.results, o.vocab, o.templates}));
  out << md.str();
  return kExitOk;
}

// ------------------------------------------------------------ registration

void add_out(CLI::App* sub, Options& o) {
  sub->add_option("--out", o.out, "Output directory");
}
void add_vocab(CLI::App* sub, Options& o) {
  sub->add_option("--vocab", o.vocab, "WordPiece vocabulary, one token per line");
  sub->add_option("--templates", o.templates, "relation<TAB>pattern file (default: built-in)");
}
void add_kb(CLI::App* sub, Options& o) {
  sub->add_option("--kb", o.kb, "Assertion dump (plain or .gz)");
  sub->add_option("--triples", o.triples, "Triple cache written by ingest");
  sub->add_option("--min-weight", o.min_weight, "Drop assertions below this weight");
  sub->add_option("--relations", o.relations, "Only these relations")->delimiter(',');
}
void add_scorer(CLI::App* sub, Options& o) {
  sub->add_option("--scorer", o.scorer, "local or remote");
  sub->add_option("--corpus", o.corpus, "Sentence-per-line corpus for the local scorer");
  sub->add_option("--smoothing", o.smoothing, "Additive smoothing of the local scorer");
  sub->add_option("--endpoint", o.endpoint,
                  std::string("Model server URL (default: $") + kEndpointEnvVar + ")");
  sub->add_option("--model", o.model, "Model name sent to the server");
  sub->add_option("--timeout-ms", o.timeout_ms, "Per-request timeout");
  sub->add_option("--threads", o.threads, "Concurrent scoring requests");
}
void add_results(CLI::App* sub, Options& o) {
  sub->add_option("--results", o.results, "results.jsonl written by probe");
  add_vocab(sub, o);
}
void add_ks(CLI::App* sub, std::vector<std::size_t>& ks, std::vector<std::size_t> defaults) {
  ks = std::move(defaults);
  sub->add_option("--ks", ks, "Comma-separated K values")->delimiter(',');
}
void add_pair(CLI::App* sub, Options& o) {
  sub->add_option("--relation-a", o.relation_a, "First relation");
  sub->add_option("--relation-b", o.relation_b, "Second relation");
}

}  // namespace

int execute_command(const std::vector<std::string>& args, std::ostream& out,
                    std::ostream& err) {
  CLI::App app{"Common sense knowledge probing and reading-comprehension analysis",
               std::string(kToolName)};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.set_config("--config", "", "TOML/INI file of option values; flags take precedence");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Options o;
  std::map<std::string, int (*)(const CLI::App&, Options&, std::ostream&)> handlers;
  auto add = [&](const char* name, const char* help, auto handler) {
    handlers[name] = handler;
    return app.add_subcommand(name, help);
  };

  auto* ingest = add("ingest", "Parse an assertion dump into a triple cache", cmd_ingest);
  ingest->add_option("--kb", o.kb, "Assertion dump (plain or .gz)");
  ingest->add_option("--min-weight", o.min_weight, "Drop assertions below this weight");
  add_out(ingest, o);

  auto* probe = add("probe", "Run cloze queries against a scorer", cmd_probe);
  add_kb(probe, o);
  add_vocab(probe, o);
  add_scorer(probe, o);
  add_out(probe, o);

  auto* metrics = add("metrics", "hits@K per relation with micro/macro averages", cmd_metrics);
  add_results(metrics, o);
  add_ks(metrics, o.ks, kDefaultHitsKs);
  add_out(metrics, o);

  auto* overlap = add("overlap", "Top-K overlap between two relations", cmd_overlap);
  add_results(overlap, o);
  add_pair(overlap, o);
  add_ks(overlap, o.ks, kDefaultHitsKs);
  add_out(overlap, o);

  auto* cross = add("cross-grade", "Grade relation A against relation B's answers",
                    cmd_cross_grade);
  add_results(cross, o);
  add_pair(cross, o);
  add_ks(cross, o.ks, {10, 100});
  add_out(cross, o);

  auto* shapes = add("shapes", "Classify output distributions as L, U or Flat", cmd_shapes);
  add_kb(shapes, o);
  add_vocab(shapes, o);
  add_scorer(shapes, o);
  shapes->add_option("--subjects", o.subjects, "Only these subjects")->delimiter(',');
  shapes->add_option("--max-rank", o.max_rank, "Length of the rank curves");
  shapes->add_option("--drop-threshold", o.drop_threshold, "L-shape log10 drop");
  shapes->add_option("--entropy-threshold", o.entropy_threshold, "Flat normalized entropy");
  add_out(shapes, o);

  auto* redundancy = add("redundancy", "Most frequent tokens across top-K lists",
                         cmd_redundancy);
  add_results(redundancy, o);
  redundancy->add_option("--relation", o.relation, "Relation to analyze");
  redundancy->add_option("--k", o.k, "Top-K list length");
  redundancy->add_option("--m", o.m, "Number of tokens to report");
  add_out(redundancy, o);

  auto* rc = add("rc-analyze", "EM by context/question similarity bins", cmd_rc_analyze);
  rc->add_option("--squad", o.squad, "SQuAD 2.0 evaluation file");
  rc->add_option("--predictions", o.predictions, "NAME=PATH, repeatable");
  rc->add_option("--bin-width", o.bin_width, "Similarity bin width (must divide 1)");
  add_out(rc, o);

  auto* part = add("partition", "Split hard questions into domains A-D", cmd_partition);
  part->add_option("--squad", o.squad, "SQuAD 2.0 evaluation file");
  part->add_option("--predictions", o.predictions, "NAME=PATH for three models, strongest first");
  part->add_option("--sim-threshold", o.sim_threshold, "Similarity below which a question is hard");
  part->add_option("--sample-cap", o.sample_cap, "Samples per domain");
  part->add_option("--seed", o.seed, "Sampling seed");
  add_out(part, o);

  auto* fusion = add("fusion-check", "Finite-difference check of the fusion layer gradients",
                     cmd_fusion_check);
  fusion->add_option("--instances", o.instances, "Random instances per operation");
  fusion->add_option("--seed", o.seed, "Instance seed");
  fusion->add_option("--fixture", o.fixture,
                     "Directory with E/W/b/v.txt and/or H/C/Wq/Wk/Wv.txt matrices");
  fusion->add_flag("--scaled", o.scaled, "Divide attention logits by sqrt(d_k)");
  fusion->add_option("--tolerance", o.tolerance, "Maximum accepted relative error");
  add_out(fusion, o);

  auto* report = add("report", "Markdown summary of a probe run", cmd_report);
  add_results(report, o);
  add_pair(report, o);
  add_ks(report, o.ks, kDefaultHitsKs);
  add_out(report, o);

  if (args.empty()) {
    out << app.help();
    return kExitUsage;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (CLI::App* sub : app.get_subcommands()) {
    try {
      return handlers.at(sub->get_name())(*sub, o, out);
    } catch (const UsageError& e) {
      err << sub->get_name() << ": " << e.what() << '\n';
      return kExitUsage;
    } catch (const std::exception& e) {
      err << sub->get_name() << ": " << e.what() << '\n';
      return kExitFailure;
    }
  }
  return kExitUsage;
}

}  // namespace ckprobe
