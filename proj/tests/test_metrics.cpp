#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "rsft/classify_eval.hpp"
#include "rsft/metrics.hpp"

namespace rsft {
namespace {

TEST(MacroF, PerfectIsOne) {
  std::vector<int> y = {0, 1, 2, 3, 3, 2, 1, 0};
  EXPECT_DOUBLE_EQ(macro_f_score(y, y), 1.0);
  auto m = confusion_matrix(y, y, kNumClasses);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) EXPECT_EQ(m[i][j], i == j ? 2 : 0);
  }
}

TEST(MacroF, CollapsedPredictor) {
  std::vector<int> truth, pred;
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < 10; ++i) {
      truth.push_back(c);
      pred.push_back(3);
    }
  }
  auto f = f_scores(pred, truth);
  EXPECT_DOUBLE_EQ(f.precision[3], 0.25);
  EXPECT_DOUBLE_EQ(f.recall[3], 1.0);
  EXPECT_DOUBLE_EQ(f.per_class[3], 0.4);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(f.per_class[c], 0.0);
  EXPECT_DOUBLE_EQ(f.macro, 0.1);
  EXPECT_TRUE(f.warnings.empty());
}

TEST(MacroF, AbsentClassWarns) {
  std::vector<int> y = {0, 0, 1};
  auto f = f_scores(y, y);
  EXPECT_DOUBLE_EQ(f.macro, 0.5);
  EXPECT_EQ(f.warnings.size(), 2u);
}

TEST(MacroF, PermutationInvariantAndRelabelEquivariant) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> cls(0, 3);
  std::vector<int> p(60), t(60);
  for (int i = 0; i < 60; ++i) {
    p[i] = cls(rng);
    t[i] = cls(rng);
  }
  double base = macro_f_score(p, t);
  std::vector<int> order(60);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> p2, t2, p3, t3;
  const int relabel[4] = {2, 0, 3, 1};
  for (int i : order) {
    p2.push_back(p[i]);
    t2.push_back(t[i]);
    p3.push_back(relabel[p[i]]);
    t3.push_back(relabel[t[i]]);
  }
  EXPECT_NEAR(macro_f_score(p2, t2), base, 1e-15);
  EXPECT_NEAR(macro_f_score(p3, t3), base, 1e-15);
}

TEST(Confusion, PairwiseOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> cls(0, 3);
  std::vector<int> p(200), t(200);
  for (int i = 0; i < 200; ++i) {
    p[i] = cls(rng);
    t[i] = cls(rng);
  }
  auto m = confusion_matrix(p, t, 4);
  for (int a = 0; a < 4; ++a) {
    std::int64_t row = 0;
    for (int b = 0; b < 4; ++b) {
      std::int64_t count = 0;
      for (int i = 0; i < 200; ++i) count += (t[i] == a && p[i] == b);
      EXPECT_EQ(m[a][b], count);
      row += m[a][b];
    }
    EXPECT_EQ(row, std::count(t.begin(), t.end(), a));
  }
  std::vector<int> bad = {4};
  std::vector<int> ok = {0};
  EXPECT_THROW(confusion_matrix(bad, ok, 4), std::invalid_argument);
}

// Enumerate every threshold t in the score set: predict positive iff score >= t.
PRCurve enumerate_pr(const std::vector<double>& s, const std::vector<int>& y, int cls) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double pos = std::count(y.begin(), y.end(), cls);
  PRCurve c;
  for (double t : thresholds) {
    double tp = 0, predicted = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) {
        ++predicted;
        tp += y[i] == cls;
      }
    }
    c.points.push_back({t, tp / predicted, tp / pos});
  }
  return c;
}

TEST(PrCurve, AllEqualScoresGiveOnePoint) {
  // 3 positives among 7: one point at recall 1 with the base rate as precision.
  std::vector<double> s(7, 0.5);
  std::vector<int> y = {1, 0, 1, 0, 0, 1, 0};
  auto c = pr_curve(s, y, 1);
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_DOUBLE_EQ(c.points[0].recall, 1.0);
  EXPECT_DOUBLE_EQ(c.points[0].precision, 3.0 / 7.0);
  // Base rate 0.3 needs 3 positives among 10.
  std::vector<double> s10(10, 0.2);
  std::vector<int> y10 = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  auto c10 = pr_curve(s10, y10, 1);
  ASSERT_EQ(c10.points.size(), 1u);
  EXPECT_DOUBLE_EQ(c10.points[0].precision, 0.3);
}

TEST(PrCurve, SeparatingScoresHaveUnitArea) {
  std::vector<double> s = {0.9, 0.8, 0.7, 0.3, 0.2, 0.1};
  std::vector<int> y = {2, 2, 2, 0, 1, 3};
  EXPECT_DOUBLE_EQ(pr_auc(pr_curve(s, y, 2)), 1.0);
}

TEST(PrCurve, NoPositivesIsAnError) {
  std::vector<double> s = {0.1, 0.2};
  std::vector<int> y = {0, 0};
  EXPECT_THROW(pr_curve(s, y, 1), DataError);
}

TEST(PrCurve, MatchesEnumerationOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cls(0, 3), level(0, 9);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> s(20);
    std::vector<int> y(20);
    for (int i = 0; i < 20; ++i) {
      s[i] = level(rng) / 10.0;  // coarse levels force ties
      y[i] = cls(rng);
    }
    y[0] = 1;
    auto got = pr_curve(s, y, 1);
    auto want = enumerate_pr(s, y, 1);
    ASSERT_EQ(got.points.size(), want.points.size());
    for (std::size_t k = 0; k < got.points.size(); ++k) {
      EXPECT_EQ(got.points[k].threshold, want.points[k].threshold);
      EXPECT_NEAR(got.points[k].precision, want.points[k].precision, 1e-15);
      EXPECT_NEAR(got.points[k].recall, want.points[k].recall, 1e-15);
    }
    EXPECT_DOUBLE_EQ(got.points.back().recall, 1.0);
    double auc = pr_auc(got);
    EXPECT_GE(auc, 0.0);
    EXPECT_LE(auc, 1.0);
  }
}

TEST(MeanPr, IdenticalCurvesAreIdentity) {
  std::vector<double> s = {0.9, 0.7, 0.6, 0.4, 0.3, 0.1};
  std::vector<int> y = {1, 0, 1, 1, 0, 0};
  auto c = pr_curve(s, y, 1);
  std::vector<PRCurve> four(4, c);
  auto one = mean_pr_curve(std::span<const PRCurve>(&c, 1));
  auto avg = mean_pr_curve(four);
  ASSERT_EQ(avg.points.size(), 101u);
  for (int g = 0; g < 101; ++g) {
    EXPECT_DOUBLE_EQ(avg.points[g].precision, one.points[g].precision);
    EXPECT_DOUBLE_EQ(avg.points[g].recall, g / 100.0);
  }
}

TEST(MeanPr, TwoHandBuiltCurves) {
  // A: (r 0.5, p 1.0), (r 1.0, p 0.5). B: (r 0.25, p 0.6), (r 0.75, p 0.9), (r 1.0, p 0.8).
  PRCurve a{{{0.9, 1.0, 0.5}, {0.1, 0.5, 1.0}}};
  PRCurve b{{{0.8, 0.6, 0.25}, {0.5, 0.9, 0.75}, {0.2, 0.8, 1.0}}};
  std::vector<PRCurve> both = {a, b};
  auto m = mean_pr_curve(both);
  ASSERT_EQ(m.points.size(), 101u);
  for (int g = 0; g < 101; ++g) {
    double pa = g < 100 ? 1.0 : 0.5;
    double pb = g < 75 ? 0.6 : (g < 100 ? 0.9 : 0.8);
    EXPECT_DOUBLE_EQ(m.points[g].precision, (pa + pb) / 2) << g;
    EXPECT_DOUBLE_EQ(m.points[g].threshold, 1.0 - g / 100.0);
  }
}

TEST(MeanPr, StepInterpolationBetweenPoints) {
  PRCurve a{{{0.9, 0.9, 0.3}, {0.5, 0.6, 0.7}, {0.1, 0.4, 1.0}}};
  auto p = interpolate_precision(a);
  EXPECT_DOUBLE_EQ(p[0], 0.9);   // below the first recall
  EXPECT_DOUBLE_EQ(p[29], 0.9);
  EXPECT_DOUBLE_EQ(p[30], 0.9);
  EXPECT_DOUBLE_EQ(p[69], 0.9);
  EXPECT_DOUBLE_EQ(p[70], 0.6);
  EXPECT_DOUBLE_EQ(p[99], 0.6);
  EXPECT_DOUBLE_EQ(p[100], 0.4);
}

TEST(Classify, ArgmaxAndRoundTrip) {
  std::vector<Signal> sig(3);
  sig[0].read_id = "a";
  sig[1].read_id = "b";
  sig[2].read_id = "c";
  nn::Tensor p({3, 4}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.7, 0.1, 0.1, 0.1, 0.25, 0.25, 0.25, 0.25});
  auto cls = to_classifications(sig, p);
  EXPECT_EQ(cls[0].label, ReadClass::kRegular);
  EXPECT_EQ(cls[1].label, ReadClass::kChimeric);
  EXPECT_EQ(cls[2].label, ReadClass::kChimeric);  // lowest index wins ties
  std::stringstream ss;
  write_classifications(ss, cls);
  auto back = read_classifications(ss);
  ASSERT_EQ(back.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].read_id, cls[i].read_id);
    EXPECT_EQ(back[i].label, cls[i].label);
    EXPECT_EQ(back[i].scores, cls[i].scores);
  }
  std::stringstream again;
  write_classifications(again, cls);
  EXPECT_EQ(to_label_map(cls), read_predictions(again));
  std::stringstream bad("read_id\tlabel\tp\nx\tweird\t0\t0\t0\t1\n");
  EXPECT_THROW(read_classifications(bad), DataError);
}

TEST(Evaluate, ReportsAndMissingReads) {
  std::vector<Classification> cls = {
      {"a", {0.7, 0.1, 0.1, 0.1}, ReadClass::kChimeric},
      {"b", {0.1, 0.7, 0.1, 0.1}, ReadClass::kLeftRepeat},
      {"c", {0.1, 0.1, 0.7, 0.1}, ReadClass::kRightRepeat},
      {"d", {0.1, 0.1, 0.1, 0.7}, ReadClass::kRegular},
  };
  LabelMap truth = {{"a", ReadClass::kChimeric},
                    {"b", ReadClass::kLeftRepeat},
                    {"c", ReadClass::kRightRepeat},
                    {"d", ReadClass::kRegular}};
  auto r = evaluate(cls, truth);
  EXPECT_DOUBLE_EQ(r.f.macro, 1.0);
  ASSERT_EQ(r.auc.size(), 4u);
  for (double a : r.auc) EXPECT_DOUBLE_EQ(a, 1.0);
  EXPECT_EQ(r.mean_pr.points.size(), 101u);
  truth["e"] = ReadClass::kRegular;
  EXPECT_THROW(evaluate(cls, truth), DataError);
}

TEST(StratifiedSubset, BalancedAndSeeded) {
  std::vector<ReadClass> labels;
  for (int i = 0; i < 40; ++i) labels.push_back(class_from_index(i % 4));
  auto a = stratified_subset(labels, 15, 9);
  auto b = stratified_subset(labels, 15, 9);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 15u);
  std::array<int, 4> count{};
  for (int i : a) ++count[to_index(labels[i])];
  for (int c : count) {
    EXPECT_GE(c, 3);
    EXPECT_LE(c, 4);
  }
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::set<int>(a.begin(), a.end()).size(), 15u);
  EXPECT_THROW(stratified_subset(labels, 60, 1), DataError);
}

TEST(Protocol, DataSplitSizesAndTable) {
  ProtocolConfig cfg;
  cfg.train_pool_per_class = 5;
  cfg.test_per_class = 3;
  cfg.unlabeled_per_class = 4;
  cfg.length = 100;
  auto d = protocol_data(cfg, 2);
  EXPECT_EQ(d.pool.size(), 20u);
  EXPECT_EQ(d.test.size(), 12u);
  EXPECT_EQ(d.unlabeled.size(), 16u);

  ProtocolResult r;
  cfg.n_labeled = {15, 30};
  for (int n : cfg.n_labeled) {
    for (auto m : cfg.models) r.cells.push_back({n, m, {0.5, 0.75}});
  }
  std::stringstream ss;
  write_protocol_table(ss, r, cfg);
  EXPECT_EQ(ss.str(), "N\tff\tm1m2\tsemigan\n15\t0.625\t0.625\t0.625\n30\t0.625\t0.625\t0.625\n");
}

}  // namespace
}  // namespace rsft
