#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ckprobe/cli.hpp"
#include "oracles.hpp"

namespace ckprobe {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = execute_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("ckprobe_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::vector<std::string> probe_args(const fs::path& out) const {
    return {"probe",    "--kb",     oracle::toy("conceptnet_toy.csv").string(),
            "--vocab",  oracle::toy("vocab.txt").string(),
            "--corpus", oracle::toy("corpus.txt").string(),
            "--out",    out.string()};
  }

  fs::path dir;
};

TEST_F(CliTest, NoArgumentsPrintsUsage) {
  const Outcome r = run({});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.out.find("probe"), std::string::npos);
  EXPECT_NE(r.out.find("fusion-check"), std::string::npos);
}

TEST_F(CliTest, UnknownSubcommandIsUsageError) {
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"metrics", "--no-such-flag"}).code, kExitUsage);
}

TEST_F(CliTest, VersionFlag) {
  const Outcome r = run({"--version"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find(kToolVersion), std::string::npos);
}

TEST_F(CliTest, IngestWritesSummary) {
  const Outcome r =
      run({"ingest", "--kb", oracle::toy("conceptnet_toy.csv").string(), "--out", (dir / "kb").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto summary = nlohmann::json::parse(slurp(dir / "kb" / "ingest_summary.json"));
  EXPECT_EQ(summary.at("lines_read"), 77);
  EXPECT_EQ(summary.at("malformed"), 2);
  EXPECT_EQ(count_lines(dir / "kb" / "malformed.tsv"), 3u);  // header + 2
  EXPECT_TRUE(fs::exists(dir / "kb" / "triples.tsv"));
  EXPECT_TRUE(fs::exists(dir / "kb" / "manifest.json"));
}

TEST_F(CliTest, ProbeThenMetrics) {
  const fs::path out = dir / "run";
  const Outcome p = run(probe_args(out));
  ASSERT_EQ(p.code, kExitOk) << p.err;
  EXPECT_EQ(count_lines(out / "results.jsonl"), 60u);

  const Outcome m = run({"metrics", "--results", (out / "results.jsonl").string(), "--vocab",
                     oracle::toy("vocab.txt").string(), "--out", out.string()});
  ASSERT_EQ(m.code, kExitOk) << m.err;
  const std::string hits = slurp(out / "hits.tsv");
  EXPECT_NE(hits.find("micro\t60\t"), std::string::npos) << hits;

  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest.at("command"), "metrics");
  EXPECT_EQ(manifest.at("inputs").size(), 2u);
  EXPECT_EQ(manifest.at("outputs").size(), 2u);
}

TEST_F(CliTest, TriplesCacheGivesSameResults) {
  ASSERT_EQ(run({"ingest", "--kb", oracle::toy("conceptnet_toy.csv").string(), "--out",
                 (dir / "kb").string()})
                .code,
            kExitOk);
  ASSERT_EQ(run(probe_args(dir / "a")).code, kExitOk);
  const Outcome b = run({"probe", "--triples", (dir / "kb" / "triples.tsv").string(), "--vocab",
                     oracle::toy("vocab.txt").string(), "--corpus", oracle::toy("corpus.txt").string(),
                     "--out", (dir / "b").string()});
  ASSERT_EQ(b.code, kExitOk) << b.err;
  EXPECT_EQ(slurp(dir / "a" / "results.jsonl"), slurp(dir / "b" / "results.jsonl"));
}

TEST_F(CliTest, ConfigErrorLeavesNoOutput) {
  const fs::path out = dir / "never";
  const Outcome missing_corpus = run({"probe", "--kb", oracle::toy("conceptnet_toy.csv").string(),
                                  "--vocab", oracle::toy("vocab.txt").string(), "--out", out.string()});
  EXPECT_EQ(missing_corpus.code, kExitUsage);
  EXPECT_FALSE(missing_corpus.err.empty());
  auto both = probe_args(out);
  both.insert(both.end(), {"--triples", "x.tsv"});
  EXPECT_EQ(run(both).code, kExitUsage);
  auto missing_vocab = probe_args(out);
  missing_vocab[4] = (dir / "missing_vocab.txt").string();
  EXPECT_EQ(run(missing_vocab).code, kExitUsage);
  // A vocabulary without the special tokens fails while loading.
  std::ofstream(dir / "bad_vocab.txt") << "hello\nworld\n";
  auto bad_vocab = probe_args(out);
  bad_vocab[4] = (dir / "bad_vocab.txt").string();
  EXPECT_EQ(run(bad_vocab).code, kExitFailure);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, ConfigFileWithFlagPrecedence) {
  const fs::path cfg = dir / "probe.ini";
  std::ofstream(cfg) << "[probe]\nvocab=" << oracle::toy("vocab.txt").string()
                     << "\ncorpus=" << oracle::toy("corpus.txt").string()
                     << "\nsmoothing=5.0\nthreads=2\n";
  const Outcome r = run({"--config", cfg.string(), "probe", "--kb",
                     oracle::toy("conceptnet_toy.csv").string(), "--smoothing", "2.5", "--out",
                     (dir / "cfg").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto manifest = nlohmann::json::parse(slurp(dir / "cfg" / "manifest.json"));
  EXPECT_EQ(manifest.at("config").at("smoothing"), "2.5");
  EXPECT_EQ(manifest.at("config").at("threads"), "2");
}

TEST_F(CliTest, RepeatedRunsAreByteIdentical) {
  for (const char* name : {"a", "b"}) {
    ASSERT_EQ(run(probe_args(dir / name)).code, kExitOk);
  }
  for (const char* file : {"results.jsonl", "skipped.tsv", "manifest.json"}) {
    EXPECT_EQ(slurp(dir / "a" / file), slurp(dir / "b" / file)) << file;
  }
}

TEST_F(CliTest, OverlapAndCrossGrade) {
  const fs::path out = dir / "run";
  ASSERT_EQ(run(probe_args(out)).code, kExitOk);
  const std::string results = (out / "results.jsonl").string();
  const std::string vocab = oracle::toy("vocab.txt").string();
  const Outcome o = run({"overlap", "--results", results, "--vocab", vocab, "--out", (dir / "o").string()});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  EXPECT_EQ(count_lines(dir / "o" / "overlap.tsv"), 5u);
  const Outcome c =
      run({"cross-grade", "--results", results, "--vocab", vocab, "--out", (dir / "c").string()});
  ASSERT_EQ(c.code, kExitOk) << c.err;
  const Outcome bad = run({"overlap", "--results", results, "--vocab", vocab, "--relation-a", "Likes",
                       "--out", (dir / "x").string()});
  EXPECT_EQ(bad.code, kExitUsage);
}

TEST_F(CliTest, FusionCheckPasses) {
  const Outcome r = run({"fusion-check", "--instances", "5", "--out", (dir / "f").string()});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "f" / "grad_check.tsv"));
  EXPECT_EQ(run({"fusion-check", "--instances", "2", "--tolerance", "1e-30"}).code, kExitFailure);
}

}  // namespace
}  // namespace ckprobe
