#ifndef RSFT_LATENT_VIZ_HPP_
#define RSFT_LATENT_VIZ_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsft/nn/tensor.hpp"
#include "rsft/read_class.hpp"
#include "rsft/tsv_io.hpp"

namespace rsft {

struct EmbedConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double exaggeration = 4.0;
  int exaggeration_iterations = 100;
  double momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch = 250;  // final momentum from this iteration on
  std::uint64_t seed = 1;

  void validate(int n) const {
    if (n < 4) throw std::invalid_argument("[rsft::tsne] error: need at least 4 points, got " + std::to_string(n));
    if (!(perplexity > 0) || perplexity >= (n - 1) / 3.0) {
      throw std::invalid_argument("[rsft::tsne] error: perplexity " + format_real(perplexity) +
                                  " infeasible for " + std::to_string(n) + " points (must be < (N-1)/3)");
    }
    if (iterations < 1) throw std::invalid_argument("[rsft::tsne] error: iterations must be >= 1");
    if (!(learning_rate > 0)) throw std::invalid_argument("[rsft::tsne] error: learning rate must be positive");
  }
};

struct Embedding {
  std::vector<double> coords;     // row-major [N, 2]
  std::vector<double> objective;  // KL(P || Q) after iteration i + 1, un-exaggerated P

  std::size_t size() const { return coords.size() / 2; }
  double x(std::size_t i) const { return coords[2 * i]; }
  double y(std::size_t i) const { return coords[2 * i + 1]; }
};

/// sum p log(p / q) over entries with p > 0.
inline double kl_objective(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("[rsft::kl_objective] error: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0) kl += p[i] * std::log(p[i] / std::max(q[i], std::numeric_limits<double>::min()));
  }
  return kl;
}

namespace detail {

inline std::vector<double> squared_distances(const nn::Tensor& x) {
  const int n = x.dim(0), d = static_cast<int>(x.size() / std::max(1, x.dim(0)));
  std::vector<double> dist(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        double diff = x[i * d + k] - x[j * d + k];
        s += diff * diff;
      }
      dist[i * n + j] = dist[j * n + i] = s;
    }
  }
  return dist;
}

/// Row-conditional p_{j|i} with the Gaussian precision found by bisection so
/// that the row entropy matches log(perplexity), then symmetrized and
/// normalized to sum 1.
inline std::vector<double> joint_probabilities(const std::vector<double>& dist, int n, double perplexity) {
  std::vector<double> p(static_cast<std::size_t>(n) * n, 0.0);
  const double target = std::log(perplexity);
  for (int i = 0; i < n; ++i) {
    double beta = 1.0, lo = -std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::max();
    double* row = p.data() + static_cast<std::size_t>(i) * n;
    for (int step = 0; step < 50; ++step) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * dist[i * n + j]);
        sum += row[j];
      }
      if (sum <= 0) sum = std::numeric_limits<double>::min();
      double h = 0.0;
      for (int j = 0; j < n; ++j) h += beta * dist[i * n + j] * row[j];
      h = h / sum + std::log(sum);
      double diff = h - target;
      for (int j = 0; j < n; ++j) row[j] /= sum;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = hi == std::numeric_limits<double>::max() ? beta * 2 : (beta + hi) / 2;
      } else {
        hi = beta;
        beta = lo == -std::numeric_limits<double>::max() ? beta / 2 : (beta + lo) / 2;
      }
    }
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double s = p[i * n + j] + p[j * n + i];
      p[i * n + j] = p[j * n + i] = s;
      total += 2 * s;
    }
  }
  for (auto& v : p) v /= total;
  return p;
}

// Student-t affinities: fills num (unnormalized, zero diagonal) and q.
inline void student_t(const std::vector<double>& y, int n, std::vector<double>& num, std::vector<double>& q) {
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    num[i * n + i] = 0.0;
    for (int j = i + 1; j < n; ++j) {
      double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
      double v = 1.0 / (1.0 + dx * dx + dy * dy);
      num[i * n + j] = num[j * n + i] = v;
      sum += 2 * v;
    }
  }
  for (std::size_t k = 0; k < num.size(); ++k) q[k] = num[k] / sum;
}

}  // namespace detail

/// Exact t-SNE to 2 dimensions. Plain gradient descent with momentum, early
/// exaggeration, and re-centering each iteration. No per-coordinate gains:
/// they overshoot right after exaggeration ends on small N.
inline Embedding tsne(const nn::Tensor& points, const EmbedConfig& cfg = {}) {
  if (points.rank() != 2) throw std::invalid_argument("[rsft::tsne] error: points must be [N, D]");
  const int n = points.dim(0);
  cfg.validate(n);
  for (double v : points.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("[rsft::tsne] error: non-finite input coordinate");
  }
  auto p = detail::joint_probabilities(detail::squared_distances(points), n, cfg.perplexity);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> init(0.0, 1e-4);
  Embedding out;
  out.coords.resize(2 * n);
  for (auto& v : out.coords) v = init(rng);
  std::vector<double> velocity(2 * n, 0.0), grad(2 * n);
  std::vector<double> num(static_cast<std::size_t>(n) * n), q(num.size());
  auto& y = out.coords;

  for (int it = 0; it < cfg.iterations; ++it) {
    const double ex = it < cfg.exaggeration_iterations ? cfg.exaggeration : 1.0;
    const double mom = it < cfg.momentum_switch ? cfg.momentum : cfg.final_momentum;
    detail::student_t(y, n, num, q);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        double m = 4.0 * (ex * p[i * n + j] - q[i * n + j]) * num[i * n + j];
        grad[2 * i] += m * (y[2 * i] - y[2 * j]);
        grad[2 * i + 1] += m * (y[2 * i + 1] - y[2 * j + 1]);
      }
    }
    for (int k = 0; k < 2 * n; ++k) {
      velocity[k] = mom * velocity[k] - cfg.learning_rate * grad[k];
      y[k] += velocity[k];
    }
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < n; ++i) {
      mx += y[2 * i];
      my += y[2 * i + 1];
    }
    for (int i = 0; i < n; ++i) {
      y[2 * i] -= mx / n;
      y[2 * i + 1] -= my / n;
    }
    detail::student_t(y, n, num, q);
    out.objective.push_back(kl_objective(p, q));
  }
  return out;
}

/// Fraction of points whose nearest embedded neighbour shares their group.
inline double nearest_neighbor_agreement(const Embedding& e, std::span<const int> groups) {
  const std::size_t n = e.size();
  if (groups.size() != n || n < 2) throw std::invalid_argument("[rsft::nearest_neighbor_agreement] error: size mismatch");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = i;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double dx = e.x(i) - e.x(j), dy = e.y(i) - e.y(j);
      double d = dx * dx + dy * dy;
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    if (groups[arg] == groups[i]) ++agree;
  }
  return static_cast<double>(agree) / n;
}

/// "read_id<TAB>x<TAB>y<TAB>label"; label "NA" when unknown.
inline void write_embedding(std::ostream& out, const Embedding& e, std::span<const std::string> ids,
                            const LabelMap& labels) {
  out << "read_id\tx\ty\tlabel\n";
  for (std::size_t i = 0; i < e.size(); ++i) {
    auto it = labels.find(ids[i]);
    out << ids[i] << '\t' << format_real(e.x(i)) << '\t' << format_real(e.y(i)) << '\t'
        << (it == labels.end() ? std::string("NA") : to_string(it->second)) << '\n';
  }
}

struct EmbeddedPoint {
  std::string read_id;
  double x = 0, y = 0;
  std::optional<ReadClass> label;
};

inline std::vector<EmbeddedPoint> read_embedding(std::istream& in) {
  std::vector<EmbeddedPoint> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("read_id\t", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, '\t');) f.push_back(field);
    const std::string where = "embedding line " + std::to_string(line_no);
    if (f.size() != 4) throw DataError("[rsft::read_embedding] error: " + where + ": expected 4 fields");
    EmbeddedPoint p{f[0], parse_real(f[1], where), parse_real(f[2], where), parse_read_class(f[3])};
    if (!p.label && f[3] != "NA") throw DataError("[rsft::read_embedding] error: " + where + ": unknown class");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace rsft

#endif  // RSFT_LATENT_VIZ_HPP_
