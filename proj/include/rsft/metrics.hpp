#ifndef RSFT_METRICS_HPP_
#define RSFT_METRICS_HPP_

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rsft/read_class.hpp"
#include "rsft/tsv_io.hpp"

namespace rsft {

// rows = truth, columns = prediction
using ConfusionMatrix = std::vector<std::vector<std::int64_t>>;

inline ConfusionMatrix confusion_matrix(std::span<const int> pred, std::span<const int> truth,
                                        int classes) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("[rsft::confusion_matrix] error: " + std::to_string(pred.size()) +
                                " predictions for " + std::to_string(truth.size()) + " labels");
  }
  ConfusionMatrix m(classes, std::vector<std::int64_t>(classes, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= classes || truth[i] < 0 || truth[i] >= classes) {
      throw std::invalid_argument("[rsft::confusion_matrix] error: class index out of range at " +
                                  std::to_string(i));
    }
    ++m[truth[i]][pred[i]];
  }
  return m;
}

struct FScore {
  double macro = 0.0;
  std::vector<double> per_class;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<std::string> warnings;
};

/// Unweighted mean of per-class F1. A class missing from both truth and
/// predictions contributes 0 and a warning.
inline FScore f_scores(const ConfusionMatrix& m) {
  const int k = static_cast<int>(m.size());
  FScore out;
  for (int c = 0; c < k; ++c) {
    std::int64_t tp = m[c][c], truth = 0, predicted = 0;
    for (int j = 0; j < k; ++j) {
      truth += m[c][j];
      predicted += m[j][c];
    }
    double p = predicted ? static_cast<double>(tp) / predicted : 0.0;
    double r = truth ? static_cast<double>(tp) / truth : 0.0;
    double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    if (truth == 0 && predicted == 0) {
      std::string name = k == kNumClasses ? to_string(class_from_index(c)) : std::to_string(c);
      out.warnings.push_back("class " + name + " absent from truth and predictions; F1 taken as 0");
    }
    out.precision.push_back(p);
    out.recall.push_back(r);
    out.per_class.push_back(f);
  }
  out.macro = k ? std::accumulate(out.per_class.begin(), out.per_class.end(), 0.0) / k : 0.0;
  return out;
}

inline FScore f_scores(std::span<const int> pred, std::span<const int> truth, int classes = kNumClasses) {
  return f_scores(confusion_matrix(pred, truth, classes));
}

inline double macro_f_score(std::span<const int> pred, std::span<const int> truth,
                            int classes = kNumClasses) {
  return f_scores(pred, truth, classes).macro;
}

/// Aligns two labelings by read id. Both must cover the same reads.
inline std::pair<std::vector<int>, std::vector<int>> align_labels(const LabelMap& pred,
                                                                  const LabelMap& truth) {
  std::vector<int> p, t;
  for (const auto& [id, cls] : truth) {
    auto it = pred.find(id);
    if (it == pred.end()) throw DataError("[rsft::align_labels] error: no prediction for read " + id);
    p.push_back(to_index(it->second));
    t.push_back(to_index(cls));
  }
  if (pred.size() != truth.size()) {
    for (const auto& [id, cls] : pred) {
      if (!truth.count(id)) throw DataError("[rsft::align_labels] error: no label for read " + id);
    }
  }
  return {p, t};
}

inline FScore f_scores(const LabelMap& pred, const LabelMap& truth) {
  auto [p, t] = align_labels(pred, truth);
  return f_scores(p, t, kNumClasses);
}

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  friend bool operator==(const PRPoint&, const PRPoint&) = default;
};

/// Points in descending threshold order, so recall is non-decreasing along
/// the vector.
struct PRCurve {
  std::vector<PRPoint> points;
  friend bool operator==(const PRCurve&, const PRCurve&) = default;
};

/// One point per distinct score t: precision and recall of "score >= t" for
/// the examples whose truth is `cls`.
inline PRCurve pr_curve(std::span<const double> scores, std::span<const int> truth, int cls) {
  if (scores.size() != truth.size()) {
    throw std::invalid_argument("[rsft::pr_curve] error: scores and labels differ in length");
  }
  const auto total_pos = std::count(truth.begin(), truth.end(), cls);
  if (total_pos == 0) throw DataError("[rsft::pr_curve] error: undefined recall (no positive examples)");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  PRCurve curve;
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    truth[order[i]] == cls ? ++tp : ++fp;
    bool last_of_tie = i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]];
    if (!last_of_tie) continue;
    curve.points.push_back({scores[order[i]], static_cast<double>(tp) / (tp + fp),
                            static_cast<double>(tp) / total_pos});
  }
  return curve;
}

/// Curve for class `cls` from K-way scores (row-major [n, K]).
inline PRCurve pr_curve_for_class(std::span<const double> scores, std::span<const int> truth,
                                  int cls, int classes = kNumClasses) {
  if (scores.size() != truth.size() * classes) {
    throw std::invalid_argument("[rsft::pr_curve_for_class] error: score matrix shape mismatch");
  }
  std::vector<double> column(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) column[i] = scores[i * classes + cls];
  return pr_curve(column, truth, cls);
}

/// Trapezoid area over recall. The curve is anchored at recall 0 with the
/// precision of its highest-threshold point.
inline double pr_auc(const PRCurve& curve) {
  if (curve.points.empty()) return 0.0;
  double area = 0.0, prev_r = 0.0, prev_p = curve.points.front().precision;
  for (const auto& pt : curve.points) {
    area += (pt.recall - prev_r) * (pt.precision + prev_p) / 2;
    prev_r = pt.recall;
    prev_p = pt.precision;
  }
  return std::clamp(area, 0.0, 1.0);
}

inline constexpr int kRecallGridPoints = 101;

/// Right-continuous step interpolation: at grid recall r, the precision of
/// the point with the largest recall <= r (highest precision among ties).
/// Below the smallest recall, the smallest-recall point is used.
inline std::vector<double> interpolate_precision(const PRCurve& curve) {
  if (curve.points.empty()) throw std::invalid_argument("[rsft::interpolate_precision] error: empty curve");
  auto pts = curve.points;
  std::stable_sort(pts.begin(), pts.end(), [](const PRPoint& a, const PRPoint& b) {
    return a.recall != b.recall ? a.recall < b.recall : a.precision > b.precision;
  });
  std::vector<double> out(kRecallGridPoints);
  for (int g = 0; g < kRecallGridPoints; ++g) {
    double r = g / 100.0;
    const PRPoint* best = &pts.front();
    for (const auto& p : pts) {
      if (p.recall > r + 1e-12) break;
      if (p.recall > best->recall || (p.recall == best->recall && p.precision > best->precision)) best = &p;
    }
    out[g] = best->precision;
  }
  return out;
}

/// Average of the interpolated per-class precisions on the 101-point recall
/// grid. Thresholds of the result are 1 - recall (ordering only).
inline PRCurve mean_pr_curve(std::span<const PRCurve> curves) {
  if (curves.empty()) throw std::invalid_argument("[rsft::mean_pr_curve] error: no curves");
  std::vector<double> sum(kRecallGridPoints, 0.0);
  for (const auto& c : curves) {
    auto p = interpolate_precision(c);
    for (int g = 0; g < kRecallGridPoints; ++g) sum[g] += p[g];
  }
  PRCurve out;
  for (int g = 0; g < kRecallGridPoints; ++g) {
    double r = g / 100.0;
    out.points.push_back({1.0 - r, sum[g] / curves.size(), r});
  }
  return out;
}

}  // namespace rsft

#endif  // RSFT_METRICS_HPP_
