#ifndef RSFT_HEURISTIC_LABELER_HPP_
#define RSFT_HEURISTIC_LABELER_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "rsft/read_class.hpp"
#include "rsft/signal_prep.hpp"

namespace rsft {

/// Thresholds of the rule-based class guesser. Fractions are relative to the
/// signal length.
struct HeuristicParams {
  double smooth_window = 0.01;
  double edge_margin = 0.10;
  double drop_ratio = 0.3;
  double repeat_ratio = 1.8;
  double side_fraction = 0.3;
  double min_flank = 0.15;

  void validate() const {
    auto fraction_ok = [](double f) { return f > 0.0 && f <= 0.5; };
    if (!fraction_ok(smooth_window) || !fraction_ok(edge_margin) ||
        !fraction_ok(side_fraction)) {
      throw std::invalid_argument("[rsft::HeuristicParams] error: fractions must lie in (0, 0.5]");
    }
    if (!(drop_ratio > 0.0 && drop_ratio < 1.0)) {
      throw std::invalid_argument("[rsft::HeuristicParams] error: drop_ratio must lie in (0, 1)");
    }
    if (!(min_flank >= 0.0)) {
      throw std::invalid_argument("[rsft::HeuristicParams] error: min_flank must be non-negative");
    }
    if (!(repeat_ratio > 1.0)) {
      throw std::invalid_argument("[rsft::HeuristicParams] error: repeat_ratio must exceed 1");
    }
  }
};

/// Centered moving average with an odd window; truncated at the borders so
/// the result is mirror-symmetric.
inline std::vector<double> smooth(std::span<const double> x, int window) {
  const int n = static_cast<int>(x.size());
  const int half = std::max(0, window / 2);
  std::vector<double> prefix(n + 1, 0.0);
  for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    int lo = std::max(0, i - half);
    int hi = std::min(n, i + half + 1);
    out[i] = (prefix[hi] - prefix[lo]) / (hi - lo);
  }
  return out;
}

inline ReadClass heuristic_label(std::span<const double> signal, const HeuristicParams& p) {
  const int n = static_cast<int>(signal.size());
  if (n == 0) return ReadClass::kRegular;

  const int window = 2 * static_cast<int>(std::floor(p.smooth_window * n / 2.0)) + 1;
  auto s = smooth(signal, window);

  // chimeric: deep interior minimum with support on both sides
  const int margin = static_cast<int>(std::lround(p.edge_margin * n));
  const int lo = margin;
  const int hi = n - margin;
  if (hi - lo >= 3) {
    int arg = lo;
    for (int i = lo + 1; i < hi; ++i) {
      if (s[i] < s[arg]) arg = i;
    }
    if (arg > lo && arg + 1 < hi) {
      double left = 0.0, right = 0.0;
      for (int i = lo; i < arg; ++i) left += s[i];
      for (int i = arg + 1; i < hi; ++i) right += s[i];
      left /= (arg - lo);
      right /= (hi - arg - 1);
      if (left >= p.min_flank && right >= p.min_flank &&
          s[arg] < p.drop_ratio * std::min(left, right)) {
        return ReadClass::kChimeric;
      }
    }
  }

  // repeats: one side clearly above the other
  const int side = std::max(1, static_cast<int>(std::lround(p.side_fraction * n)));
  double ml = 0.0, mr = 0.0;
  for (int i = 0; i < side; ++i) {
    ml += s[i];
    mr += s[n - 1 - i];
  }
  ml /= side;
  mr /= side;
  if (mr > p.repeat_ratio * ml) return ReadClass::kRightRepeat;
  if (ml > p.repeat_ratio * mr) return ReadClass::kLeftRepeat;
  return ReadClass::kRegular;
}

inline ReadClass heuristic_label(const Signal& signal, const HeuristicParams& p) {
  return heuristic_label(std::span<const double>(signal.values), p);
}

using ClassQuota = std::array<int, kNumClasses>;

/// Heuristically labels every signal, then samples each class uniformly
/// without replacement up to its quota. Output is grouped by class in class
/// index order.
inline std::vector<Signal> balance_pool(std::span<const Signal> signals,
                                        const HeuristicParams& p, const ClassQuota& quota,
                                        std::uint64_t seed) {
  std::array<std::vector<std::size_t>, kNumClasses> members;
  for (std::size_t i = 0; i < signals.size(); ++i) {
    members[to_index(heuristic_label(signals[i], p))].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<Signal> out;
  for (int c = 0; c < kNumClasses; ++c) {
    if (quota[c] < 0) {
      throw std::invalid_argument("[rsft::balance_pool] error: negative quota");
    }
    auto& m = members[c];
    std::shuffle(m.begin(), m.end(), rng);
    auto take = std::min<std::size_t>(m.size(), static_cast<std::size_t>(quota[c]));
    for (std::size_t k = 0; k < take; ++k) out.push_back(signals[m[k]]);
  }
  return out;
}

}  // namespace rsft

#endif  // RSFT_HEURISTIC_LABELER_HPP_
