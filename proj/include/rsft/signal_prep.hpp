#ifndef RSFT_SIGNAL_PREP_HPP_
#define RSFT_SIGNAL_PREP_HPP_

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rsft/coverage.hpp"

namespace rsft {

/// Fixed-length, max-normalized coverage signal.
struct Signal {
  std::string read_id;
  std::vector<double> values;

  friend bool operator==(const Signal&, const Signal&) = default;
};

class TooShortError : public DataError {
 public:
  using DataError::DataError;
};

class ZeroCoverageError : public DataError {
 public:
  using DataError::DataError;
};

/// Bin b is the mean of every x[i] with floor(i * L / n) == b.
template <typename T>
std::vector<double> downsample(std::span<const T> values, int length) {
  const auto n = static_cast<std::int64_t>(values.size());
  if (length < 1) {
    throw std::invalid_argument("[rsft::downsample] error: length must be positive");
  }
  if (n < length) {
    throw TooShortError("[rsft::downsample] error: too short (" + std::to_string(n) +
                        " < " + std::to_string(length) + ")");
  }
  std::vector<double> sums(length, 0.0);
  std::vector<std::int64_t> counts(length, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    auto b = static_cast<std::size_t>(i * length / n);
    sums[b] += static_cast<double>(values[i]);
    ++counts[b];
  }
  for (int b = 0; b < length; ++b) sums[b] /= static_cast<double>(counts[b]);
  return sums;
}

inline std::vector<double> normalize(std::span<const double> values) {
  if (values.empty()) {
    throw std::invalid_argument("[rsft::normalize] error: empty input");
  }
  double max_value = *std::max_element(values.begin(), values.end());
  if (!(max_value > 0.0)) {
    throw ZeroCoverageError("[rsft::normalize] error: zero coverage");
  }
  std::vector<double> out(values.begin(), values.end());
  for (auto& v : out) v /= max_value;
  return out;
}

inline Signal prepare(const CoverageGraph& coverage, int length) {
  auto binned = downsample(std::span<const std::int32_t>(coverage.depth), length);
  return Signal{coverage.read_id, normalize(binned)};
}

/// Re-bins an already prepared signal to a shorter length.
inline Signal resample(const Signal& signal, int length) {
  if (static_cast<int>(signal.values.size()) == length) return signal;
  auto binned = downsample(std::span<const double>(signal.values), length);
  return Signal{signal.read_id, normalize(binned)};
}

struct PrepResult {
  std::vector<Signal> signals;
  // (read_id, reason) for every read excluded from the dataset.
  std::vector<std::pair<std::string, std::string>> rejected;
};

inline PrepResult prepare_all(const CoverageMap& coverage, int length) {
  PrepResult out;
  for (const auto& [name, graph] : coverage) {
    try {
      out.signals.push_back(prepare(graph, length));
    } catch (const TooShortError&) {
      out.rejected.emplace_back(name, "too_short");
    } catch (const ZeroCoverageError&) {
      out.rejected.emplace_back(name, "zero_coverage");
    }
  }
  return out;
}

}  // namespace rsft

#endif  // RSFT_SIGNAL_PREP_HPP_
