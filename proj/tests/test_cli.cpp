#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef RSFT_CLI
#error "RSFT_CLI must name the rsft binary"
#endif

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI through the shell; stdout is captured, stderr is discarded
// unless `args` redirects it.
Run rsft(const std::string& args, const std::string& env = "") {
  std::string cmd = env + " '" + std::string(RSFT_CLI) + "' " + args;
  if (cmd.find("2>") == std::string::npos) cmd += " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
  int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("rsft_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string at(const std::string& name) const { return (dir_ / name).string(); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  fs::path dir_;
};

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(rsft("--help").code, 0);
  EXPECT_EQ(rsft("").code, 1);
  EXPECT_EQ(rsft("frobnicate").code, 1);
  EXPECT_EQ(rsft("coverage --paf /nonexistent.paf --out x").code, 1);
}

TEST_F(Cli, SynthIsDeterministic) {
  ASSERT_EQ(rsft("synth --classes 4 --per-class 100 --seed 7 --out " + at("a")).code, 0);
  ASSERT_EQ(rsft("synth --classes 4 --per-class 100 --seed 7 --out " + at("b")).code, 0);
  EXPECT_EQ(slurp(at("a.signals.tsv")), slurp(at("b.signals.tsv")));
  EXPECT_EQ(slurp(at("a.labels.tsv")), slurp(at("b.labels.tsv")));
  EXPECT_FALSE(slurp(at("a.signals.tsv")).empty());
  ASSERT_EQ(rsft("synth --classes 4 --per-class 100 --seed 8 --out " + at("c")).code, 0);
  EXPECT_NE(slurp(at("a.signals.tsv")), slurp(at("c.signals.tsv")));
  EXPECT_EQ(rsft("synth --classes 3 --out " + at("d")).code, 1);
}

TEST_F(Cli, SeedFromEnvironmentAndConfig) {
  ASSERT_EQ(rsft("synth --per-class 5 --length 100 --seed 3 --out " + at("flag")).code, 0);
  ASSERT_EQ(rsft("synth --per-class 5 --length 100 --out " + at("env"), "RSFT_SEED=3").code, 0);
  EXPECT_EQ(slurp(at("flag.signals.tsv")), slurp(at("env.signals.tsv")));

  // Config supplies per-class; the command line overrides its length.
  write("run.cfg", "# test\nper-class=5\nlength=200\nnoise=0.03\n");
  ASSERT_EQ(rsft("--config " + at("run.cfg") + " synth --length 100 --seed 3 --out " + at("cfg")).code, 0);
  EXPECT_EQ(slurp(at("flag.signals.tsv")), slurp(at("cfg.signals.tsv")));

  write("bad.cfg", "no-such-option=1\n");
  EXPECT_EQ(rsft("--config " + at("bad.cfg") + " synth --out " + at("bad")).code, 1);
}

TEST_F(Cli, ResolvedConfigGoesToStderr) {
  auto r = rsft("synth --per-class 2 --length 100 --seed 5 --out " + at("s") + " 2>&1 >/dev/null");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("seed=5"), std::string::npos);
  EXPECT_NE(r.out.find("per-class=2"), std::string::npos);
}

TEST_F(Cli, Stats) {
  write("c.txt", "500\n300\n200\n");
  auto r = rsft("stats --contigs " + at("c.txt") + " --genome-length 1000");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "3\t500\n");
  write("short.txt", "100\n");
  EXPECT_EQ(rsft("stats --contigs " + at("short.txt") + " --genome-length 1000").out, "1\tNA\n");
  write("bad.txt", "oops\n");
  EXPECT_EQ(rsft("stats --contigs " + at("bad.txt") + " --genome-length 1000").code, 2);
}

TEST_F(Cli, EmptyPrCurveCannotBePlotted) {
  write("pr.tsv", "threshold\tprecision\trecall\n");
  EXPECT_EQ(rsft("plot --kind pr --input " + at("pr.tsv") + " --out " + at("pr.svg")).code, 1);
}

TEST_F(Cli, BadDataExitsTwo) {
  write("bad.paf", "r1\t100\t0\n");
  EXPECT_EQ(rsft("coverage --paf " + at("bad.paf") + " --out " + at("cov.tsv")).code, 2);
}

TEST_F(Cli, EvalMetricsMode) {
  write("truth.tsv", "a\tchimeric\nb\tleft_repeat\nc\tright_repeat\nd\tregular\n");
  auto r = rsft("eval --pred " + at("truth.tsv") + " --truth " + at("truth.tsv"));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("metric\tvalue\nmacro_f\t1\n", 0), 0u);
}

TEST_F(Cli, EvalProtocolTableShape) {
  auto r = rsft(
      "eval --models ff,m1m2,semigan --labeled 8,12,16 --seeds 1 --pool-per-class 4 --test-per-class 3 "
      "--unlabeled-per-class 4 --length 100 --gan-length 100 --ff-epochs 1 --m1-epochs 1 --m2-epochs 1 "
      "--gan-epochs 1 --out -");
  ASSERT_EQ(r.code, 0);
  std::stringstream ss(r.out);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "N\tff\tm1m2\tsemigan");
  int rows = 0;
  while (std::getline(ss, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 3);
  }
  EXPECT_EQ(rows, 3);
}

}  // namespace
