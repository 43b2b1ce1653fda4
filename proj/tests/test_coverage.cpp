#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <sstream>

#include "rsft/coverage.hpp"

using namespace rsft;

namespace {

OverlapRecord rec(std::string q, std::int64_t ql, std::int64_t qs, std::int64_t qe, std::string t, std::int64_t tl,
                  std::int64_t ts, std::int64_t te) {
  OverlapRecord r;
  r.qname = std::move(q);
  r.qlen = ql;
  r.qstart = qs;
  r.qend = qe;
  r.tname = std::move(t);
  r.tlen = tl;
  r.tstart = ts;
  r.tend = te;
  r.alnlen = qe - qs;
  r.nmatch = r.alnlen;
  return r;
}

}  // namespace

TEST(Coverage, NoRecordsGivesZeros) {
  ReadTable reads{{"r", 10}};
  auto cov = build_coverage({}, reads);
  EXPECT_EQ(cov.at("r").depth, std::vector<std::int32_t>(10, 0));
  EXPECT_EQ(coverage_oracle({}, reads), cov);
}

TEST(Coverage, TwoQueryIntervals) {
  ReadTable reads{{"r", 10}, {"x", 20}, {"y", 20}};
  std::vector<OverlapRecord> recs = {rec("r", 10, 0, 5, "x", 20, 0, 5), rec("r", 10, 3, 8, "y", 20, 10, 15)};
  auto cov = build_coverage(recs, reads);
  EXPECT_EQ(cov.at("r").depth, (std::vector<std::int32_t>{1, 1, 1, 2, 2, 1, 1, 1, 0, 0}));
}

TEST(Coverage, SumsMatchIntervalLengths) {
  ReadTable reads{{"a", 50}, {"b", 40}};
  std::vector<OverlapRecord> recs = {rec("a", 50, 7, 31, "b", 40, 2, 29)};
  auto cov = build_coverage(recs, reads);
  auto total = [](const CoverageGraph& g) { return std::accumulate(g.depth.begin(), g.depth.end(), 0); };
  EXPECT_EQ(total(cov.at("a")), 24);
  EXPECT_EQ(total(cov.at("b")), 27);
}

TEST(Coverage, FullLengthOverlapIsAllOnes) {
  ReadTable reads{{"a", 30}, {"b", 30}};
  auto cov = build_coverage(std::vector<OverlapRecord>{rec("a", 30, 0, 30, "b", 30, 0, 30)}, reads);
  EXPECT_EQ(cov.at("a").depth, std::vector<std::int32_t>(30, 1));
  EXPECT_EQ(cov.at("b").depth, std::vector<std::int32_t>(30, 1));
}

TEST(Coverage, SelfRecordsIgnored) {
  ReadTable reads{{"a", 10}};
  auto cov = build_coverage(std::vector<OverlapRecord>{rec("a", 10, 0, 10, "a", 10, 0, 10)}, reads);
  EXPECT_EQ(cov.at("a").depth, std::vector<std::int32_t>(10, 0));
}

TEST(Coverage, UnknownReadRejected) {
  ReadTable reads{{"a", 10}};
  EXPECT_THROW(build_coverage(std::vector<OverlapRecord>{rec("a", 10, 0, 5, "b", 10, 0, 5)}, reads), DataError);
}

TEST(Coverage, RandomMatchesOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    ReadTable reads;
    for (int i = 0; i < 10; ++i) reads["r" + std::to_string(i)] = 1 + static_cast<std::int64_t>(rng() % 200);
    std::vector<OverlapRecord> recs;
    for (int k = 0; k < 50; ++k) {
      auto q = "r" + std::to_string(rng() % 10), t = "r" + std::to_string(rng() % 10);
      auto ql = reads[q], tl = reads[t];
      auto qs = static_cast<std::int64_t>(rng() % ql), ts = static_cast<std::int64_t>(rng() % tl);
      auto qe = qs + 1 + static_cast<std::int64_t>(rng() % (ql - qs));
      auto te = ts + 1 + static_cast<std::int64_t>(rng() % (tl - ts));
      recs.push_back(rec(q, ql, qs, qe, t, tl, ts, te));
    }
    ASSERT_EQ(build_coverage(recs, reads), coverage_oracle(recs, reads)) << "trial " << trial;
  }
}

TEST(Coverage, DumpRoundTrip) {
  ReadTable reads{{"a", 6}, {"b", 4}};
  auto cov = build_coverage(std::vector<OverlapRecord>{rec("a", 6, 1, 4, "b", 4, 0, 3)}, reads);
  std::stringstream io;
  write_coverage(io, cov);
  EXPECT_EQ(io.str(), "a\t0,1,1,1,0,0\nb\t1,1,1,0\n");
  EXPECT_EQ(read_coverage(io), cov);
}
