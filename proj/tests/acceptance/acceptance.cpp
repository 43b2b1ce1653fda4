// Acceptance runner. `acceptance [N ...]` runs the listed criteria (all when
// none are given) and prints one PASS/FAIL line per criterion. Exit status is
// non-zero when any selected criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rsft/assembly_filter.hpp"
#include "rsft/classify_eval.hpp"
#include "rsft/coverage.hpp"
#include "rsft/latent_viz.hpp"
#include "rsft/metrics.hpp"
#include "rsft/synth_gen.hpp"
#include "rsft/training.hpp"

#ifndef RSFT_CLI
#error "RSFT_CLI must name the rsft binary"
#endif

namespace fs = std::filesystem;
using namespace rsft;
using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed checks; the first few are reported.
struct Checker {
  int failures = 0;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures;
    if (notes.size() < 6) notes.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    std::string d = summary;
    for (const auto& n : notes) d += "; " + n;
    return {failures == 0, d};
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

// Uniform values kept at least `gap` away from every kink point.
Tensor away_from(Shape shape, std::mt19937_64& rng, std::vector<double> kinks, double gap = 0.02) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(-1.5, 1.5);
  for (auto& v : t.values()) {
    bool ok = false;
    while (!ok) {
      v = d(rng);
      ok = std::none_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(v - k) < gap; });
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

struct GradReport {
  int probes = 0;
  int skipped = 0;
  double worst = 0.0;
  std::string worst_at;
};

constexpr double kGradTol = 1e-4;

// Relative error, with an absolute test for gradients too small to carry a
// meaningful relative error in double precision.
double grad_error(double analytic, double numeric) {
  double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-6) return std::abs(analytic - numeric) < 1e-8 ? 0.0 : 1.0;
  return std::abs(analytic - numeric) / scale;
}

std::vector<std::size_t> probe_indices(std::size_t size, int count, std::mt19937_64& rng) {
  std::vector<std::size_t> all(size);
  for (std::size_t i = 0; i < size; ++i) all[i] = i;
  if (static_cast<int>(size) <= count) return all;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(count);
  return all;
}

using OpFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Central differences on every input of a scalar function.
GradReport check_op(std::vector<Tensor> inputs, const OpFn& f, std::mt19937_64& rng, double h = 1e-5) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.variable(x));
  tape.backward(f(tape, vars));
  std::vector<Tensor> grads;
  for (const auto& v : vars) grads.push_back(tape.grad(v.id()));

  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape t(false);
    std::vector<Var> cs;
    for (const auto& x : xs) cs.push_back(t.constant(x));
    return f(t, cs).value().item();
  };
  GradReport rep;
  // At least 20 probes per op, spread over its inputs.
  const int per_input = std::max(24, static_cast<int>(std::ceil(24.0 / inputs.size())));
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (auto i : probe_indices(inputs[k].size(), per_input, rng)) {
      auto plus = inputs, minus = inputs;
      plus[k][i] += h;
      minus[k][i] -= h;
      double numeric = (eval(plus) - eval(minus)) / (2 * h);
      double err = grad_error(grads[k][i], numeric);
      ++rep.probes;
      if (err >= rep.worst) {
        rep.worst = err;
        rep.worst_at = "input " + std::to_string(k) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

using ArchFn = std::function<Var(Tape&)>;

// Parameter probes: a few random entries of every trainable tensor whose name
// starts with `prefix`, at least 20 in total.
// Central differences at h and h/10 must agree before they are trusted as
// a reference: a probe whose +-h window straddles a relu or clamp kink, or
// whose loss change is lost in roundoff, fails that test and is replaced by
// a fresh draw. The agreement test never looks at the analytic gradient.
GradReport check_params(nn::ParameterSet& ps, const ArchFn& f, std::mt19937_64& rng, const std::string& prefix = "",
                        double h = 1e-5) {
  ps.zero_grad();
  {
    Tape tape;
    tape.backward(f(tape));
  }
  std::vector<std::pair<std::string, std::size_t>> probes;
  std::vector<std::string> names;
  for (auto& [name, p] : ps) {
    if (p.trainable && name.rfind(prefix, 0) == 0) names.push_back(name);
  }
  for (const auto& name : names) {
    for (auto i : probe_indices(ps.at(name).value.size(), 3, rng)) probes.push_back({name, i});
  }
  while (probes.size() < 20) {
    const auto& name = names[rng() % names.size()];
    probes.push_back({name, static_cast<std::size_t>(rng() % ps.at(name).value.size())});
  }
  auto central = [&](nn::Parameter& p, std::size_t i, double step) {
    const double keep = p.value[i];
    p.value[i] = keep + step;
    double fp;
    {
      Tape t(false);
      fp = f(t).value().item();
    }
    p.value[i] = keep - step;
    double fm;
    {
      Tape t(false);
      fm = f(t).value().item();
    }
    p.value[i] = keep;
    return (fp - fm) / (2 * step);
  };
  GradReport rep;
  const std::size_t wanted = probes.size();
  for (std::size_t k = 0; k < probes.size() && rep.probes < static_cast<int>(wanted); ++k) {
    const auto [name, i] = probes[k];
    auto& p = ps.at(name);
    const double coarse = central(p, i, h);
    const double fine = central(p, i, h / 10);
    if (grad_error(coarse, fine) >= kGradTol) {
      ++rep.skipped;
      if (probes.size() < 4 * wanted) {
        const auto& other = names[rng() % names.size()];
        probes.push_back({other, static_cast<std::size_t>(rng() % ps.at(other).value.size())});
      }
      continue;
    }
    double err = grad_error(p.grad[i], coarse);
    ++rep.probes;
    if (err >= rep.worst) {
      rep.worst = err;
      rep.worst_at = name + "[" + std::to_string(i) + "]";
    }
  }
  return rep;
}

// Scalar from any output: sum of y times a fixed random weight per entry.
Var weighted(Tape& t, Var y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return nn::sum(nn::mul(y, t.constant(random_tensor(y.shape(), rng))));
}

Tensor one_hot_rows(int rows, int k, std::uint64_t seed) {
  Tensor t({rows, k});
  for (int r = 0; r < rows; ++r) t[r * k + static_cast<int>((seed + 7 * r) % k)] = 1.0;
  return t;
}

Outcome criterion_gradients() {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::vector<std::pair<std::string, GradReport>> results;
  auto op = [&](const std::string& name, std::vector<Tensor> in, const OpFn& f) {
    results.push_back({name, check_op(std::move(in), f, rng)});
  };
  auto R = [&](Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(std::move(s), rng, lo, hi); };

  op("add", {R({4, 6}), R({4, 6})}, [](Tape& t, auto& v) { return weighted(t, nn::add(v[0], v[1])); });
  op("sub", {R({4, 6}), R({4, 6})}, [](Tape& t, auto& v) { return weighted(t, nn::sub(v[0], v[1])); });
  op("mul", {R({4, 6}), R({4, 6})}, [](Tape& t, auto& v) { return weighted(t, nn::mul(v[0], v[1])); });
  op("scale", {R({4, 6})}, [](Tape& t, auto& v) { return weighted(t, nn::scale(v[0], -2.5)); });
  op("relu", {away_from({4, 6}, rng, {0.0})}, [](Tape& t, auto& v) { return weighted(t, nn::relu(v[0])); });
  op("leaky_relu", {away_from({4, 6}, rng, {0.0})},
     [](Tape& t, auto& v) { return weighted(t, nn::leaky_relu(v[0], 0.2)); });
  op("sigmoid", {R({4, 6}, -3, 3)}, [](Tape& t, auto& v) { return weighted(t, nn::sigmoid(v[0])); });
  op("exp", {R({4, 6})}, [](Tape& t, auto& v) { return weighted(t, nn::exp(v[0])); });
  op("clamp", {away_from({4, 6}, rng, {-1.0, 1.0})},
     [](Tape& t, auto& v) { return weighted(t, nn::clamp(v[0], -1.0, 1.0)); });
  op("sum", {R({4, 6})}, [](Tape&, auto& v) { return nn::scale(nn::sum(nn::mul(v[0], v[0])), 0.5); });
  op("mean", {R({4, 6})}, [](Tape&, auto& v) { return nn::mean(nn::mul(v[0], v[0])); });
  op("sum_rows", {R({4, 6})}, [](Tape& t, auto& v) { return weighted(t, nn::sum_rows(v[0])); });
  op("reshape", {R({4, 6})}, [](Tape& t, auto& v) { return weighted(t, nn::reshape(v[0], {2, 3, 4})); });
  op("slice_cols", {R({4, 6})}, [](Tape& t, auto& v) { return weighted(t, nn::slice_cols(v[0], 1, 3)); });
  op("column", {R({4, 6})}, [](Tape& t, auto& v) { return weighted(t, nn::column(v[0], 2)); });
  op("concat_cols", {R({4, 3}), R({4, 5})},
     [](Tape& t, auto& v) { return weighted(t, nn::concat_cols(v[0], v[1])); });
  op("concat_rows", {R({2, 6}), R({3, 6})},
     [](Tape& t, auto& v) { return weighted(t, nn::concat_rows({v[0], v[1]})); });
  op("slice_rows", {R({5, 5})}, [](Tape& t, auto& v) { return weighted(t, nn::slice_rows(v[0], 1, 3)); });
  op("softmax", {R({4, 6}, -2, 2)}, [](Tape& t, auto& v) { return weighted(t, nn::softmax(v[0])); });
  op("log_softmax", {R({4, 6}, -2, 2)}, [](Tape& t, auto& v) { return weighted(t, nn::log_softmax(v[0])); });
  op("logsumexp_rows", {R({4, 6}, -2, 2)},
     [](Tape& t, auto& v) { return weighted(t, nn::logsumexp_rows(v[0])); });
  op("dense", {R({3, 5}), R({4, 5}), R({4})},
     [](Tape& t, auto& v) { return weighted(t, nn::dense(v[0], v[1], v[2])); });
  op("conv1d", {R({2, 2, 7}), R({3, 2, 3}), R({3})},
     [](Tape& t, auto& v) { return weighted(t, nn::conv1d(v[0], v[1], v[2])); });
  op("conv1d_transpose", {R({2, 3, 6}), R({3, 2, 5}), R({2})},
     [](Tape& t, auto& v) { return weighted(t, nn::conv1d_transpose(v[0], v[1], v[2])); });
  op("max_pool", {R({2, 2, 8})}, [](Tape& t, auto& v) { return weighted(t, nn::max_pool(v[0]).out); });
  op("max_unpool", {R({2, 2, 8})}, [](Tape& t, auto& v) {
    auto p = nn::max_pool(v[0]);
    return weighted(t, nn::max_unpool(nn::mul(p.out, p.out), p.indices, 8));
  });
  op("upsample2", {R({2, 3, 4})}, [](Tape& t, auto& v) { return weighted(t, nn::upsample2(v[0])); });
  {
    auto bn = [](int channels) {
      return [channels](Tape& t, const std::vector<Var>& v) {
        nn::Parameter rm{Tensor({channels}), Tensor({channels}), false};
        nn::Parameter rv{Tensor({channels}, 1.0), Tensor({channels}), false};
        nn::BatchNormOptions opt;
        opt.update_running = false;
        return weighted(t, nn::batch_norm(v[0], v[1], v[2], rm, rv, opt));
      };
    };
    op("batch_norm_2d", {R({5, 4}), R({4}, 0.5, 1.5), R({4})}, bn(4));
    op("batch_norm_3d", {R({3, 2, 5}), R({2}, 0.5, 1.5), R({2})}, bn(2));
  }
  {
    auto target = one_hot_rows(4, 5, 1);
    op("softmax_cross_entropy_rows", {R({4, 5}, -2, 2)},
       [target](Tape& t, auto& v) { return weighted(t, nn::softmax_cross_entropy_rows(v[0], target)); });
    op("softmax_cross_entropy", {R({4, 5}, -2, 2)},
       [target](Tape&, auto& v) { return nn::softmax_cross_entropy(v[0], target); });
    auto bits = random_tensor({4, 6}, rng, 0.0, 1.0);
    op("bernoulli_nll_rows", {R({4, 6}, 0.05, 0.95)},
       [bits](Tape& t, auto& v) { return weighted(t, nn::bernoulli_nll_rows(v[0], bits)); });
    op("bernoulli_nll_logits_rows", {R({4, 6}, -3, 3)},
       [bits](Tape& t, auto& v) { return weighted(t, nn::bernoulli_nll_logits_rows(v[0], bits)); });
  }
  op("kl_diag_gaussian_rows", {R({4, 6}), R({4, 6})},
     [](Tape& t, auto& v) { return weighted(t, nn::kl_diag_gaussian_rows(v[0], v[1])); });
  op("half_squared_error_rows", {R({4, 6}), R({4, 6})},
     [](Tape& t, auto& v) { return weighted(t, nn::half_squared_error_rows(v[0], v[1])); });
  {
    auto eps = random_tensor({4, 6}, rng);
    op("reparameterize", {R({4, 6}), R({4, 6})},
       [eps](Tape& t, auto& v) { return weighted(t, nn::reparameterize(v[0], v[1], eps)); });
  }

  // Full architectures at their real sizes, train-mode batch norm with the
  // running statistics frozen so repeated evaluations agree.
  auto train_ctx = [](Tape& t) { return nn::ForwardContext{t, nn::Mode::kTrain, false}; };
  {
    ModelConfig mc;
    FeedForwardNet ff(mc, 11);
    auto x = random_tensor({3, 1, mc.length}, rng, 0.0, 1.0);
    auto y = one_hot_rows(3, 4, 2);
    results.push_back({"arch FF", check_params(ff.params(), [&](Tape& t) {
                         auto ctx = train_ctx(t);
                         return nn::softmax_cross_entropy(ff.logits(ctx, t.constant(x)), y);
                       }, rng)});
  }
  {
    ModelConfig mc;
    M1Model m1(mc, 12);
    auto x = random_tensor({3, 1, mc.length}, rng, 0.0, 1.0);
    Tensor target = x;
    target.reshape({3, mc.length});
    auto eps = random_tensor({3, mc.z1_dim}, rng);
    results.push_back({"arch M1", check_params(m1.params(), [&](Tape& t) {
                         auto ctx = train_ctx(t);
                         auto code = m1.encode(ctx, t.constant(x));
                         auto z = nn::reparameterize(code.mu, code.logvar, eps);
                         return nn::add(nn::mean(nn::bernoulli_nll_logits_rows(m1.decode_logits(ctx, z), target)),
                                        nn::mean(nn::kl_diag_gaussian_rows(code.mu, code.logvar)));
                       }, rng, "", 1e-4)});  // loss ~ 350: a smaller step drowns in roundoff
  }
  {
    ModelConfig mc;
    M2Model m2(mc, 13);
    auto zl = random_tensor({4, mc.z1_dim}, rng, -2, 2);
    auto zu = random_tensor({4, mc.z1_dim}, rng, -2, 2);
    std::vector<int> y = {0, 1, 2, 3};
    auto y1 = one_hot_rows(4, 4, 0);
    results.push_back({"arch M2", check_params(m2.params(), [&](Tape& t) {
                         auto ctx = train_ctx(t);
                         std::mt19937_64 noise(5);
                         auto lab = nn::mean(m2_labeled_bound(m2, ctx, t.constant(zl), y, noise));
                         auto ce = nn::softmax_cross_entropy(m2.class_logits(ctx, t.constant(zl)), y1);
                         auto unl = nn::mean(m2_unlabeled_bound(m2, ctx, t.constant(zu), noise));
                         return nn::add(nn::add(lab, nn::scale(ce, 3.0)), unl);
                       }, rng)});
  }
  {
    ModelConfig mc{kDefaultGanLength};
    Generator g(mc, 14);
    Discriminator d(mc, 15);
    auto real = random_tensor({4, 1, mc.length}, rng, 0.0, 1.0);
    auto fake = random_tensor({2, 1, mc.length}, rng, 0.0, 1.0);
    auto y = one_hot_rows(2, 4, 3);
    results.push_back({"arch D", check_params(d.params(), [&](Tape& t) {
                         auto ctx = train_ctx(t);
                         auto logits = d.forward(ctx, nn::concat_rows({t.constant(real), t.constant(fake)})).logits;
                         auto l = discriminator_losses(logits, 2, 2, 2, y, 4);
                         return nn::add(nn::add(l.supervised, l.real_unsup), l.fake);
                       }, rng)});
    auto z = random_tensor({3, mc.noise_dim}, rng, -2, 2);
    results.push_back({"arch G", check_params(g.params(), [&](Tape& t) {
                         auto ctx = train_ctx(t);
                         auto x = nn::reshape(g.sample(ctx, t.constant(z)), {3, 1, mc.length});
                         auto logits = d.forward(ctx, x).logits;
                         return nn::mean(detail::real_unsup_loss_rows(logits, 4));
                       }, rng)});
  }

  Checker c;
  double worst = 0.0;
  int probes = 0;
  int skipped = 0;
  for (const auto& [name, r] : results) {
    probes += r.probes;
    skipped += r.skipped;
    c.expect(r.skipped <= r.probes / 4, name + " skipped " + std::to_string(r.skipped) + " kinked probes");
    worst = std::max(worst, r.worst);
    c.expect(r.probes >= 20, name + " has only " + std::to_string(r.probes) + " probes");
    c.expect(r.worst < kGradTol, name + " rel error " + fmt(r.worst, 8) + " at " + r.worst_at);
  }
  double secs = seconds_since(t0);
  c.expect(secs < 120, "runtime " + fmt(secs, 1) + " s >= 120 s");
  return c.outcome(std::to_string(results.size()) + " ops/architectures, " + std::to_string(probes) +
                    " probes (" + std::to_string(skipped) + " redrawn at kinks), worst relative error " + fmt(worst, 8) + ", " +
                   fmt(secs, 1) + " s");
}

// ---------------------------------------------------------------------------
// 2. Coverage oracle

Outcome criterion_coverage() {
  std::mt19937_64 rng(77);
  Checker c;
  int records_total = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n_reads = 1 + static_cast<int>(rng() % 20);
    const int n_records = static_cast<int>(rng() % 101);
    ReadTable reads;
    std::vector<std::string> names;
    for (int i = 0; i < n_reads; ++i) {
      names.push_back("read" + std::to_string(i));
      reads[names.back()] = 1 + static_cast<std::int64_t>(rng() % 300);
    }
    std::vector<OverlapRecord> recs;
    for (int k = 0; k < n_records; ++k) {
      OverlapRecord r;
      r.qname = names[rng() % n_reads];
      r.tname = names[rng() % n_reads];
      r.qlen = reads[r.qname];
      r.tlen = reads[r.tname];
      r.qstart = static_cast<std::int64_t>(rng() % r.qlen);
      r.qend = r.qstart + 1 + static_cast<std::int64_t>(rng() % (r.qlen - r.qstart));
      r.tstart = static_cast<std::int64_t>(rng() % r.tlen);
      r.tend = r.tstart + 1 + static_cast<std::int64_t>(rng() % (r.tlen - r.tstart));
      r.nmatch = r.alnlen = std::min(r.qend - r.qstart, r.tend - r.tstart);
      recs.push_back(r);
    }
    records_total += n_records;
    auto got = build_coverage(recs, reads);
    // Independent naive count: every base, every record.
    bool same = got.size() == reads.size();
    for (const auto& [name, len] : reads) {
      if (!same) break;
      const auto& depth = got.at(name).depth;
      same = static_cast<std::int64_t>(depth.size()) == len;
      for (std::int64_t pos = 0; same && pos < len; ++pos) {
        int count = 0;
        for (const auto& r : recs) {
          if (r.qname == r.tname) continue;
          count += r.qname == name && r.qstart <= pos && pos < r.qend;
          count += r.tname == name && r.tstart <= pos && pos < r.tend;
        }
        same = depth[pos] == count;
      }
    }
    c.expect(same, "instance " + std::to_string(trial) + " differs from the naive count");
  }
  return c.outcome("1000 instances, " + std::to_string(records_total) + " records");
}

// ---------------------------------------------------------------------------
// 3. Semi-supervised trend on the synthetic surrogate
//
// Budgets are cut from the full defaults (FF 100, M1 200, M2 200, GAN 300
// epochs) so the whole table fits the 30 minute limit on one core.

constexpr int kProtoFFEpochs = 100;
constexpr int kProtoM1Epochs = 20;
constexpr int kProtoM2Epochs = 200;
constexpr int kProtoGanEpochs = 20;

Outcome criterion_trend() {
  auto t0 = std::chrono::steady_clock::now();
  ProtocolConfig cfg;
  cfg.ff.epochs = kProtoFFEpochs;
  cfg.m1.epochs = kProtoM1Epochs;
  cfg.m2.epochs = kProtoM2Epochs;
  cfg.gan.epochs = kProtoGanEpochs;
  auto result = run_protocol(cfg, [&](const std::string& s) {
    std::cout << "  [" << fmt(seconds_since(t0), 0) << " s] " << s << std::endl;
  });
  std::ostringstream table;
  write_protocol_table(table, result, cfg);
  std::cout << table.str();

  Checker c;
  auto mean = [&](int n, ModelKind m) { return result.at(n, m).mean(); };
  for (int n : cfg.n_labeled) {
    c.expect(mean(n, ModelKind::kFF) <= mean(n, ModelKind::kM1M2),
             "N=" + std::to_string(n) + ": FF " + fmt(mean(n, ModelKind::kFF)) + " > M1+M2 " +
                 fmt(mean(n, ModelKind::kM1M2)));
    c.expect(mean(n, ModelKind::kFF) <= mean(n, ModelKind::kSemiGan),
             "N=" + std::to_string(n) + ": FF " + fmt(mean(n, ModelKind::kFF)) + " > semi-GAN " +
                 fmt(mean(n, ModelKind::kSemiGan)));
  }
  const double gap = mean(15, ModelKind::kSemiGan) - mean(15, ModelKind::kFF);
  c.expect(gap >= 0.05, "semi-GAN - FF at N=15 is " + fmt(gap) + " < 0.05");
  for (auto m : cfg.models) {
    c.expect(mean(70, m) >= mean(15, m) - 0.02,
             to_string(m) + ": F(70) " + fmt(mean(70, m)) + " < F(15) " + fmt(mean(15, m)) + " - 0.02");
  }
  double secs = seconds_since(t0);
  c.expect(secs <= 1800, "runtime " + fmt(secs, 0) + " s > 1800 s");
  return c.outcome("N=15 gap " + fmt(gap) + ", " + fmt(secs, 0) + " s");
}

// ---------------------------------------------------------------------------
// 4. VAE sanity

Outcome criterion_vae() {
  int improved = 0;
  bool kl_ok = true;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig sc;
    sc.per_class = {40, 40, 40, 40};
    sc.seed = seed;
    auto data = synth_signals(sc);
    auto tc = default_train_config(ModelKind::kM1);
    tc.epochs = 50;
    tc.seed = seed;
    auto r = train_m1(data.signals, tc);
    double first = r.log.front().get("elbo"), last = r.log.at(49).get("elbo");
    if (last > first) ++improved;
    for (const auto& e : r.log) kl_ok = kl_ok && e.get("kl_min") >= 0.0;
    per_seed += " " + fmt(first, 1) + "->" + fmt(last, 1);
  }
  Checker c;
  c.expect(improved >= 4, "ELBO improved in only " + std::to_string(improved) + " of 5 seeds");
  c.expect(kl_ok, "negative KL at some step");
  return c.outcome("ELBO improved in " + std::to_string(improved) + "/5 seeds (" + per_seed.substr(1) + ")");
}

// ---------------------------------------------------------------------------
// 5. Semi-GAN sanity

Outcome criterion_gan() {
  auto t0 = std::chrono::steady_clock::now();
  SynthConfig sc;
  sc.per_class = {21, 21, 21, 21};
  sc.seed = 3;
  auto data = synth_signals(sc);
  LabeledSet labeled;
  UnlabeledSet unlabeled;
  std::array<int, kNumClasses> seen{};
  for (std::size_t i = 0; i < data.signals.size(); ++i) {
    if (seen[to_index(data.labels[i])]++ < 5) {
      labeled.add(data.signals[i], data.labels[i]);
    } else {
      unlabeled.push_back(data.signals[i]);
    }
  }
  auto tc = default_train_config(ModelKind::kSemiGan);
  tc.seed = 3;
  Checker c;
  TrainResult r;
  try {
    r = train_semigan(labeled, unlabeled, tc);
  } catch (const NumericError& e) {
    return {false, e.what()};
  }
  c.expect(static_cast<int>(r.log.size()) == tc.epochs, "log has " + std::to_string(r.log.size()) + " epochs");
  double fmin = 1.0, fmax = 0.0, first_below = -1;
  for (const auto& e : r.log) {
    for (const auto& [k, v] : e.values) c.expect(std::isfinite(v), k + " non-finite at epoch " + std::to_string(e.epoch));
    fmin = std::min(fmin, e.get("fake_min"));
    fmax = std::max(fmax, e.get("fake_max"));
    if (first_below < 0 && e.get("d_sup") < std::log(4.0)) first_below = e.epoch;
  }
  c.expect(fmin > 0.0 && fmax < 1.0, "generated values reach [" + fmt(fmin, 6) + ", " + fmt(fmax, 6) + "]");
  c.expect(first_below > 0 && first_below <= 20, "labeled CE not below ln 4 within 20 epochs");
  char range[96];
  std::snprintf(range, sizeof(range), "fakes in (0,1): min %.3g, 1 - max %.3g", fmin, 1.0 - fmax);
  return c.outcome(std::to_string(tc.epochs) + " epochs finite, " + range + ", labeled CE < ln 4 at epoch " + fmt(first_below, 0) + ", " + fmt(seconds_since(t0), 0) + " s");
}

// ---------------------------------------------------------------------------
// 6. NG50 oracle

Outcome criterion_ng50() {
  Checker c;
  auto hand = [&](std::vector<std::int64_t> v, std::int64_t g, std::optional<std::int64_t> want) {
    auto got = ng50(v, g).ng50;
    c.expect(got == want, "hand case G=" + std::to_string(g) + " wrong");
  };
  hand({500, 300, 200}, 1000, 500);
  hand({400, 300, 200}, 1000, 300);
  hand({100}, 1000, std::nullopt);
  std::mt19937_64 rng(606);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::int64_t> v(rng() % 30);
    for (auto& x : v) x = 1 + static_cast<std::int64_t>(rng() % 5000);
    const std::int64_t g = 1 + static_cast<std::int64_t>(rng() % 60000);
    // Every prefix of the descending order; first one reaching half of G.
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    std::optional<std::int64_t> want;
    for (std::size_t k = 1; k <= sorted.size() && !want; ++k) {
      std::int64_t s = 0;
      for (std::size_t i = 0; i < k; ++i) s += sorted[i];
      if (2 * s >= g) want = sorted[k - 1];
    }
    c.expect(ng50(v, g).ng50 == want, "random set " + std::to_string(trial) + " differs");
  }
  return c.outcome("3 hand cases, 1000 random sets");
}

// ---------------------------------------------------------------------------
// 7. Filter semantics

Outcome criterion_filter() {
  PipelineConfig pc;
  pc.repeat = RepeatSpec{4000, 50000, 130000};
  pc.chimera_rate = 0.05;
  pc.seed = 7;
  auto data = synth_pipeline(pc);
  Checker c;
  int chim_in = 0, pair_in = 0;
  for (const auto& r : data.records) {
    auto a = data.labels.at(r.qname), b = data.labels.at(r.tname);
    chim_in += a == ReadClass::kChimeric || b == ReadClass::kChimeric;
    pair_in += is_repeat_pair(a, b);
  }
  c.expect(chim_in > 0 && pair_in > 0, "input lacks chimeric or repeat-pair overlaps");
  auto out = filter_overlaps(data.records, data.labels);
  int chim_out = 0, pair_out = 0;
  for (const auto& r : out.kept) {
    auto a = data.labels.at(r.qname), b = data.labels.at(r.tname);
    chim_out += a == ReadClass::kChimeric || b == ReadClass::kChimeric;
    pair_out += is_repeat_pair(a, b);
  }
  c.expect(chim_out == 0, std::to_string(chim_out) + " kept records touch a chimeric read");
  c.expect(pair_out == 0, std::to_string(pair_out) + " kept left/right repeat pairs");
  auto again = filter_overlaps(out.kept, data.labels);
  c.expect(again.kept == out.kept, "second pass changed the overlap set");
  return c.outcome(std::to_string(data.records.size()) + " records (" + std::to_string(chim_in) + " chimeric, " +
                   std::to_string(pair_in) + " repeat-pair) -> " + std::to_string(out.kept.size()) + " kept");
}

// ---------------------------------------------------------------------------
// 8. PR machinery

Outcome criterion_pr() {
  std::mt19937_64 rng(808);
  Checker c;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 60);
    const int levels = 2 + static_cast<int>(rng() % 20);  // few levels -> many ties
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels) / levels;
      y[i] = static_cast<int>(rng() % 4);
    }
    y[rng() % n] = 2;
    auto curve = pr_curve(s, y, 2);
    std::set<double, std::greater<>> thresholds(s.begin(), s.end());
    const double pos = std::count(y.begin(), y.end(), 2);
    bool same = curve.points.size() == thresholds.size();
    std::size_t k = 0;
    for (double t : thresholds) {
      if (!same) break;
      double tp = 0, predicted = 0;
      for (int i = 0; i < n; ++i) {
        if (s[i] >= t) {
          ++predicted;
          tp += y[i] == 2;
        }
      }
      const auto& p = curve.points[k++];
      same = p.threshold == t && std::abs(p.precision - tp / predicted) < 1e-12 && std::abs(p.recall - tp / pos) < 1e-12;
    }
    c.expect(same, "set " + std::to_string(trial) + " differs from enumeration");
    double auc = pr_auc(curve);
    c.expect(auc >= 0.0 && auc <= 1.0, "AUC " + fmt(auc) + " outside [0, 1]");
    std::vector<PRCurve> copies(4, curve);
    auto mean = mean_pr_curve(copies);
    auto self = interpolate_precision(curve);
    bool identity = mean.points.size() == 101;
    for (int g = 0; identity && g < 101; ++g) identity = mean.points[g].precision == self[g];
    c.expect(identity, "mean of identical curves differs for set " + std::to_string(trial));
  }
  return c.outcome("200 random score sets");
}

// ---------------------------------------------------------------------------
// 9. t-SNE

Outcome criterion_tsne() {
  std::mt19937_64 rng(909);
  std::normal_distribution<double> n01(0.0, 1.0);
  nn::Tensor x({150, 10});
  std::vector<int> groups;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 50; ++i) {
      for (int j = 0; j < 10; ++j) x[(c * 50 + i) * 10 + j] = n01(rng) + (j == c ? 10.0 : 0.0);
      groups.push_back(c);
    }
  }
  auto t0 = std::chrono::steady_clock::now();
  EmbedConfig cfg;
  auto e = tsne(x, cfg);
  double secs = seconds_since(t0);
  auto e2 = tsne(x, cfg);
  Checker c;
  double agree = nearest_neighbor_agreement(e, groups);
  c.expect(agree >= 0.95, "nearest-neighbour agreement " + fmt(agree));
  // objective[i] is the value after iteration i + 1.
  c.expect(e.objective.at(999) < e.objective.at(100),
           "objective " + fmt(e.objective[999]) + " at 1000 not below " + fmt(e.objective[100]) + " at 101");
  c.expect(e.coords == e2.coords, "embedding differs between runs");
  c.expect(secs < 60, "runtime " + fmt(secs, 1) + " s");
  return c.outcome("agreement " + fmt(agree, 3) + ", objective " + fmt(e.objective[100]) + " -> " +
                   fmt(e.objective[999]) + ", " + fmt(secs, 1) + " s");
}

// ---------------------------------------------------------------------------
// 10. End-to-end CLI determinism

int shell(const std::string& cmd) {
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion_cli() {
  const fs::path root = fs::temp_directory_path() / ("rsft_acceptance_" + std::to_string(::getpid()));
  const std::string cli = RSFT_CLI;
  Checker c;
  auto run_pipeline = [&](const fs::path& d) {
    fs::create_directories(d);
    const std::string p = d.string() + "/";
    const std::vector<std::string> steps = {
        "synth --kind pipeline --genome-length 80000 --reads 240 --min-read-length 3000 --max-read-length 6000 "
        "--chimera-rate 0.1 --repeat-length 3000 --repeat-first 20000 --repeat-second 50000 --out " + p + "sim",
        "coverage --paf " + p + "sim.paf --out " + p + "coverage.tsv",
        "prep --coverage " + p + "coverage.tsv --out " + p + "signals.tsv --rejected " + p + "rejected.tsv",
        "train --model ff --signals " + p + "signals.tsv --labels " + p + "sim.labels.tsv --epochs 3 --out " + p +
            "ff.ckpt --log " + p + "ff.log",
        "classify --checkpoint " + p + "ff.ckpt --signals " + p + "signals.tsv --out " + p + "classes.tsv",
        "eval --models ff,m1m2,semigan --labeled 8 --seeds 1 --pool-per-class 3 --test-per-class 3 "
        "--unlabeled-per-class 4 --length 100 --gan-length 100 --ff-epochs 2 --m1-epochs 1 --m2-epochs 2 "
        "--gan-epochs 1 --out " + p + "table.tsv --per-seed " + p + "per_seed.tsv",
        "filter --paf " + p + "sim.paf --pred " + p + "classes.tsv --out " + p + "filtered.paf --blacklist " + p +
            "blacklist.txt --report " + p + "report.tsv --read-lengths " + p + "lengths.txt",
        "stats --contigs " + p + "lengths.txt --genome-length 80000 > " + p + "stats.tsv",
    };
    for (const auto& s : steps) {
      int code = shell("RSFT_SEED=11 '" + cli + "' " + s + " 2>>" + p + "stderr.txt");
      c.expect(code == 0, "step failed (" + std::to_string(code) + "): " + s.substr(0, s.find(' ')));
      if (code != 0) return;
    }
  };
  run_pipeline(root / "a");
  run_pipeline(root / "b");
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const auto name = entry.path().filename();
    if (name == "stderr.txt") continue;  // progress lines carry timings
    ++compared;
    c.expect(fs::exists(root / "b" / name) && slurp(entry.path()) == slurp(root / "b" / name),
             name.string() + " differs between runs");
  }
  c.expect(compared >= 14, "only " + std::to_string(compared) + " outputs produced");
  std::string stats = slurp(root / "a" / "stats.tsv");
  if (!stats.empty() && stats.back() == '\n') stats.pop_back();
  fs::remove_all(root);
  return c.outcome(std::to_string(compared) + " outputs byte-identical across two runs; stats " + stats);
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {1, {"gradient correctness", criterion_gradients}},
      {2, {"coverage oracle", criterion_coverage}},
      {3, {"semi-supervised trend", criterion_trend}},
      {4, {"VAE sanity", criterion_vae}},
      {5, {"semi-GAN sanity", criterion_gan}},
      {6, {"NG50 oracle", criterion_ng50}},
      {7, {"filter semantics", criterion_filter}},
      {8, {"PR machinery", criterion_pr}},
      {9, {"t-SNE", criterion_tsne}},
      {10, {"end-to-end determinism", criterion_cli}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    int n = std::atoi(argv[i]);
    if (!criteria.count(n)) {
      std::cerr << "acceptance: unknown criterion '" << argv[i] << "'\n";
      return 2;
    }
    selected.push_back(n);
  }
  if (selected.empty()) {
    for (const auto& [n, _] : criteria) selected.push_back(n);
  }
  bool all = true;
  for (int n : selected) {
    const auto& [name, fn] = criteria.at(n);
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << n << " (" << name << "): " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
