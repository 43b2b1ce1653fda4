#ifndef RSFT_TRAINING_HPP_
#define RSFT_TRAINING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rsft/metrics.hpp"
#include "rsft/model_zoo.hpp"
#include "rsft/nn/adam.hpp"
#include "rsft/nn/checkpoint.hpp"
#include "rsft/signal_prep.hpp"

namespace rsft {

enum class ModelKind { kFF, kM1, kM2, kM1M2, kSemiGan };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kFF: return "ff";
    case ModelKind::kM1: return "m1";
    case ModelKind::kM2: return "m2";
    case ModelKind::kM1M2: return "m1m2";
    case ModelKind::kSemiGan: return "semigan";
  }
  return "?";
}

inline std::optional<ModelKind> parse_model_kind(std::string_view s) {
  for (auto k : {ModelKind::kFF, ModelKind::kM1, ModelKind::kM2, ModelKind::kM1M2, ModelKind::kSemiGan}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

struct TrainConfig {
  int batch_size = 64;
  int epochs = 100;
  double lr = 1e-3;
  double beta1 = 0.9;
  std::uint64_t seed = 1;
  double validation_fraction = 0.2;  // held out of the labeled set for checkpoint selection
  double alpha_scale = 0.1;          // M2 classification weight: alpha_scale * (Nl + Nu) / Nl

  void validate() const {
    if (batch_size < 2) throw std::invalid_argument("[rsft::TrainConfig] error: batch_size must be >= 2");
    if (epochs < 0) throw std::invalid_argument("[rsft::TrainConfig] error: epochs must be >= 0");
    if (!(lr > 0)) throw std::invalid_argument("[rsft::TrainConfig] error: lr must be positive");
    if (!(beta1 >= 0 && beta1 < 1)) throw std::invalid_argument("[rsft::TrainConfig] error: beta1 outside [0, 1)");
    if (!(validation_fraction >= 0 && validation_fraction < 1)) {
      throw std::invalid_argument("[rsft::TrainConfig] error: validation_fraction outside [0, 1)");
    }
  }

  void write(std::map<std::string, std::string>& header) const {
    header["batch_size"] = std::to_string(batch_size);
    header["epochs"] = std::to_string(epochs);
    header["lr"] = format_real(lr);
    header["beta1"] = format_real(beta1);
    header["seed"] = std::to_string(seed);
    header["validation_fraction"] = format_real(validation_fraction);
  }
};

/// Per-model defaults: 100 / 200 / 200 / 300 epochs, Adam 1e-3 (beta1 0.9),
/// and 2e-4 (beta1 0.5) for the adversarial pair.
inline TrainConfig default_train_config(ModelKind kind) {
  TrainConfig c;
  switch (kind) {
    case ModelKind::kFF: c.epochs = 100; break;
    case ModelKind::kM1: c.epochs = 200; break;
    case ModelKind::kM2:
    case ModelKind::kM1M2: c.epochs = 200; break;
    case ModelKind::kSemiGan:
      c.epochs = 300;
      c.lr = 2e-4;
      c.beta1 = 0.5;
      break;
  }
  return c;
}

struct LabeledSet {
  std::vector<Signal> signals;
  std::vector<ReadClass> labels;

  std::size_t size() const { return signals.size(); }
  void add(Signal s, ReadClass c) {
    signals.push_back(std::move(s));
    labels.push_back(c);
  }
};

using UnlabeledSet = std::vector<Signal>;

/// Pairs signals with labels by read id; signals without a label are skipped.
inline LabeledSet attach_labels(std::span<const Signal> signals, const LabelMap& labels) {
  LabeledSet out;
  for (const auto& s : signals) {
    auto it = labels.find(s.read_id);
    if (it != labels.end()) out.add(s, it->second);
  }
  return out;
}

inline void check_disjoint(const LabeledSet& labeled, const UnlabeledSet& unlabeled) {
  std::set<std::string> ids;
  for (const auto& s : labeled.signals) ids.insert(s.read_id);
  for (const auto& s : unlabeled) {
    if (ids.count(s.read_id)) {
      throw DataError("[rsft::training] error: read " + s.read_id + " is both labeled and unlabeled");
    }
  }
}

struct EpochLog {
  int epoch = 0;
  std::vector<std::pair<std::string, double>> values;
  double val_macro_f = std::numeric_limits<double>::quiet_NaN();

  double get(const std::string& key) const {
    for (const auto& [k, v] : values) {
      if (k == key) return v;
    }
    throw std::out_of_range("[rsft::EpochLog] error: no value '" + key + "'");
  }
};

/// "epoch<TAB>name=value...<TAB>val_macro_f=..." (NA without a hold-out).
inline std::string format_epoch_log(const EpochLog& log) {
  std::string line = std::to_string(log.epoch);
  for (const auto& [k, v] : log.values) line += "\t" + k + "=" + format_real(v);
  line += "\tval_macro_f=" + (std::isnan(log.val_macro_f) ? std::string("NA") : format_real(log.val_macro_f));
  return line;
}

using EpochCallback = std::function<void(const EpochLog&)>;

struct TrainResult {
  nn::Checkpoint checkpoint;
  std::vector<EpochLog> log;
  int best_epoch = 0;  // 0 = initialization or no selection
};

namespace detail {

inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint32_t stream) { return stream_rng(seed, stream)(); }

// Streams: 0 init, 1 shuffling, 2 noise, 3 validation split, 4 second model init.
enum : std::uint32_t { kInitStream = 0, kShuffleStream = 1, kNoiseStream = 2, kSplitStream = 3, kInit2Stream = 4 };

/// Contiguous batches of near-equal size covering `order`.
inline std::vector<std::span<const int>> equal_batches(const std::vector<int>& order, int batch_size) {
  std::vector<std::span<const int>> out;
  const int n = static_cast<int>(order.size());
  if (n == 0) return out;
  const int nb = (n + batch_size - 1) / batch_size;
  int start = 0;
  for (int b = 0; b < nb; ++b) {
    int size = n / nb + (b < n % nb ? 1 : 0);
    out.emplace_back(order.data() + start, size);
    start += size;
  }
  return out;
}

inline std::vector<int> permutation(int n, std::mt19937_64& rng) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

/// Endless reshuffled pass over [0, n).
class Cycler {
 public:
  Cycler(int n, std::mt19937_64& rng) : n_(n), rng_(rng) {}
  std::vector<int> next(int count) {
    std::vector<int> out;
    while (static_cast<int>(out.size()) < count) {
      if (pos_ == order_.size()) {
        order_ = permutation(n_, rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  int n_;
  std::mt19937_64& rng_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
};

inline std::vector<double> signal_at_length(const Signal& s, int length) {
  if (static_cast<int>(s.values.size()) == length) return s.values;
  if (static_cast<int>(s.values.size()) < length) {
    throw DataError("[rsft::training] error: signal " + s.read_id + " has " +
                    std::to_string(s.values.size()) + " values, model expects " + std::to_string(length));
  }
  return resample(s, length).values;
}

/// [n, 1, L] stack; longer signals are resampled to L, shorter are an error.
inline nn::Tensor stack_signals(std::span<const Signal> signals, int length) {
  nn::Tensor t({static_cast<int>(signals.size()), 1, length});
  for (std::size_t i = 0; i < signals.size(); ++i) {
    auto v = signal_at_length(signals[i], length);
    std::copy(v.begin(), v.end(), t.data() + i * length);
  }
  return t;
}

inline nn::Tensor gather_rows(const nn::Tensor& x, std::span<const int> rows) {
  nn::Shape shape = x.shape();
  const std::size_t width = x.size() / shape[0];
  shape[0] = static_cast<int>(rows.size());
  nn::Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.data() + rows[i] * width, width, out.data() + i * width);
  }
  return out;
}

inline nn::Tensor one_hot(std::span<const int> labels, int classes) {
  nn::Tensor t({static_cast<int>(labels.size()), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) t[i * classes + labels[i]] = 1.0;
  return t;
}

inline nn::Tensor constant_class(int rows, int classes, int cls) {
  nn::Tensor t({rows, classes});
  for (int i = 0; i < rows; ++i) t[i * classes + cls] = 1.0;
  return t;
}

inline nn::Tensor normal_tensor(nn::Shape shape, std::mt19937_64& rng) {
  nn::Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

inline void check_finite(double v, const char* trainer, const std::string& what, int epoch) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("[rsft::") + trainer + "] error: non-finite " + what + " at epoch " +
                       std::to_string(epoch));
  }
}

// Argmax with the lowest index winning ties.
inline std::vector<int> argmax_rows(const nn::Tensor& scores) {
  const int rows = scores.dim(0), k = scores.dim(1);
  std::vector<int> out(rows);
  for (int r = 0; r < rows; ++r) {
    int best = 0;
    for (int c = 1; c < k; ++c) {
      if (scores[r * k + c] > scores[r * k + best]) best = c;
    }
    out[r] = best;
  }
  return out;
}

/// Runs `fn` on consecutive chunks of rows in eval mode without gradients and
/// stacks the [chunk, width] results.
inline nn::Tensor eval_in_chunks(const nn::Tensor& x, const std::function<nn::Var(nn::ForwardContext&, nn::Var)>& fn,
                                 int chunk = 256) {
  const int n = x.dim(0);
  std::vector<double> out;
  int width = 0;
  for (int start = 0; start < n; start += chunk) {
    int count = std::min(chunk, n - start);
    std::vector<int> rows(count);
    std::iota(rows.begin(), rows.end(), start);
    nn::Tape tape(false);
    nn::ForwardContext ctx{tape, nn::Mode::kEval};
    auto y = fn(ctx, tape.constant(gather_rows(x, rows))).value();
    width = static_cast<int>(y.size() / count);
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  return nn::Tensor({n, width}, std::move(out));
}

struct Split {
  std::vector<int> train;
  std::vector<int> validation;
};

/// Per class: round(fraction * n_c) held out, but never the last example.
inline Split stratified_split(std::span<const int> labels, int classes, double fraction, std::uint64_t seed) {
  auto rng = stream_rng(seed, kSplitStream);
  Split s;
  for (int c = 0; c < classes; ++c) {
    std::vector<int> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(static_cast<int>(i));
    }
    std::shuffle(members.begin(), members.end(), rng);
    int hold = static_cast<int>(std::lround(fraction * members.size()));
    hold = std::min(hold, std::max(0, static_cast<int>(members.size()) - 1));
    s.validation.insert(s.validation.end(), members.begin(), members.begin() + hold);
    s.train.insert(s.train.end(), members.begin() + hold, members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  return s;
}

inline std::vector<int> label_indices(std::span<const ReadClass> labels) {
  std::vector<int> out;
  for (auto c : labels) out.push_back(to_index(c));
  return out;
}

/// Keeps the snapshot with the best validation macro-F; ties go to the later
/// epoch. Several parameter sets are snapshotted together.
class BestKeeper {
 public:
  explicit BestKeeper(std::vector<nn::ParameterSet*> sets) : sets_(std::move(sets)) {}
  bool enabled() const { return enabled_; }
  void enable() { enabled_ = true; }
  void offer(double score, int epoch) {
    if (!enabled_ || score < best_) return;
    best_ = score;
    epoch_ = epoch;
    snapshots_.clear();
    for (auto* ps : sets_) snapshots_.push_back(ps->snapshot());
  }
  int restore() const {
    if (enabled_ && epoch_ > 0) {
      for (std::size_t i = 0; i < sets_.size(); ++i) sets_[i]->restore(snapshots_[i]);
    }
    return epoch_;
  }

 private:
  std::vector<nn::ParameterSet*> sets_;
  bool enabled_ = false;
  double best_ = -1.0;
  int epoch_ = 0;
  std::vector<std::map<std::string, nn::Tensor>> snapshots_;
};

inline void put_params(nn::Checkpoint& ck, const nn::ParameterSet& ps, const std::string& prefix) {
  for (const auto& [name, p] : ps) ck.params[prefix + name] = p.value;
}

inline void expect_kind(const nn::Checkpoint& ck, ModelKind want, const char* who) {
  auto it = ck.header.find("kind");
  if (it == ck.header.end() || it->second != to_string(want)) {
    throw DataError(std::string("[rsft::") + who + "] error: expected a " + to_string(want) +
                    " checkpoint, got " + (it == ck.header.end() ? "no kind" : it->second));
  }
}

inline void restore_params(nn::ParameterSet& ps, const nn::Checkpoint& ck, const std::string& prefix,
                           const char* who) {
  try {
    ps.restore(ck.params, prefix);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("[rsft::") + who + "] error: incompatible checkpoint: " + e.what());
  }
}

}  // namespace detail

// -- checkpoint <-> model ----------------------------------------------------

inline nn::Checkpoint make_checkpoint(ModelKind kind, const ModelConfig& mc, const TrainConfig& tc) {
  nn::Checkpoint ck;
  ck.header["kind"] = to_string(kind);
  mc.write(ck.header);
  tc.write(ck.header);
  return ck;
}

inline FeedForwardNet load_ff(const nn::Checkpoint& ck) {
  detail::expect_kind(ck, ModelKind::kFF, "load_ff");
  FeedForwardNet net(ModelConfig::read(ck.header));
  detail::restore_params(net.params(), ck, "", "load_ff");
  return net;
}

inline M1Model load_m1(const nn::Checkpoint& ck) {
  auto it = ck.header.find("kind");
  bool bundled = it != ck.header.end() && it->second == to_string(ModelKind::kM1M2);
  if (!bundled) detail::expect_kind(ck, ModelKind::kM1, "load_m1");
  M1Model m(ModelConfig::read(ck.header));
  detail::restore_params(m.params(), ck, bundled ? "m1." : "", "load_m1");
  return m;
}

inline M2Model load_m2(const nn::Checkpoint& ck) {
  auto it = ck.header.find("kind");
  bool bundled = it != ck.header.end() && it->second == to_string(ModelKind::kM1M2);
  if (!bundled) detail::expect_kind(ck, ModelKind::kM2, "load_m2");
  M2Model m(ModelConfig::read(ck.header));
  detail::restore_params(m.params(), ck, bundled ? "m2." : "", "load_m2");
  return m;
}

/// M1 and M2 in one file (params prefixed "m1." and "m2.").
inline nn::Checkpoint bundle_m1m2(const nn::Checkpoint& m1, const nn::Checkpoint& m2) {
  detail::expect_kind(m1, ModelKind::kM1, "bundle_m1m2");
  detail::expect_kind(m2, ModelKind::kM2, "bundle_m1m2");
  if (ModelConfig::read(m1.header) != ModelConfig::read(m2.header)) {
    throw DataError("[rsft::bundle_m1m2] error: M1 and M2 model configs differ");
  }
  nn::Checkpoint ck;
  ck.header = m2.header;
  ck.header["kind"] = to_string(ModelKind::kM1M2);
  ck.header["m1_epochs"] = m1.header.at("epochs");
  for (const auto& [k, v] : m1.params) ck.params["m1." + k] = v;
  for (const auto& [k, v] : m2.params) ck.params["m2." + k] = v;
  return ck;
}

struct SemiGan {
  Generator generator;
  Discriminator discriminator;
};

inline SemiGan load_semigan(const nn::Checkpoint& ck) {
  detail::expect_kind(ck, ModelKind::kSemiGan, "load_semigan");
  auto cfg = ModelConfig::read(ck.header);
  SemiGan g{Generator(cfg), Discriminator(cfg)};
  detail::restore_params(g.generator.params(), ck, "g.", "load_semigan");
  detail::restore_params(g.discriminator.params(), ck, "d.", "load_semigan");
  return g;
}

// -- inference helpers used by training and classification -------------------

inline nn::Tensor ff_probabilities(const FeedForwardNet& net, std::span<const Signal> signals) {
  auto x = detail::stack_signals(signals, net.config().length);
  return detail::eval_in_chunks(x, [&](nn::ForwardContext& ctx, nn::Var v) {
    return nn::softmax(net.logits(ctx, v));
  });
}

/// Posterior means of q(z1|x): deterministic [n, z1_dim] features.
inline nn::Tensor extract_z1(const M1Model& m1, std::span<const Signal> signals) {
  auto x = detail::stack_signals(signals, m1.config().length);
  return detail::eval_in_chunks(x, [&](nn::ForwardContext& ctx, nn::Var v) { return m1.encode(ctx, v).mu; });
}

inline nn::Tensor m2_probabilities(const M2Model& m2, const nn::Tensor& z1) {
  return detail::eval_in_chunks(z1, [&](nn::ForwardContext& ctx, nn::Var v) {
    return nn::softmax(m2.class_logits(ctx, v));
  });
}

/// Class probabilities with p_fake dropped and the K class components
/// renormalized (a softmax over the first K logits).
inline nn::Tensor semigan_probabilities(const Discriminator& d, std::span<const Signal> signals) {
  auto x = detail::stack_signals(signals, d.config().length);
  const int k = d.config().classes;
  return detail::eval_in_chunks(x, [&](nn::ForwardContext& ctx, nn::Var v) {
    return nn::softmax(nn::slice_cols(d.forward(ctx, v).logits, 0, k));
  });
}

inline nn::Tensor semigan_features(const Discriminator& d, std::span<const Signal> signals) {
  auto x = detail::stack_signals(signals, d.config().length);
  return detail::eval_in_chunks(x, [&](nn::ForwardContext& ctx, nn::Var v) { return d.forward(ctx, v).features; });
}

// -- trainers ----------------------------------------------------------------

/// Supervised cross-entropy on labeled signals.
inline TrainResult train_ff(const LabeledSet& labeled, const TrainConfig& cfg,
                            const ModelConfig& mc = {}, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  auto labels = detail::label_indices(labeled.labels);
  auto split = detail::stratified_split(labels, mc.classes, cfg.validation_fraction, cfg.seed);
  if (split.train.empty()) throw DataError("[rsft::train_ff] error: no labeled training examples");
  FeedForwardNet net(mc, detail::stream_seed(cfg.seed, detail::kInitStream));
  auto x = detail::stack_signals(labeled.signals, mc.length);
  std::vector<int> val_truth;
  for (int i : split.validation) val_truth.push_back(labels[i]);
  auto xv = detail::gather_rows(x, split.validation);

  nn::Adam adam({cfg.lr, cfg.beta1});
  auto rng = detail::stream_rng(cfg.seed, detail::kShuffleStream);
  detail::BestKeeper best({&net.params()});
  if (!split.validation.empty()) best.enable();
  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order;
    for (int p : detail::permutation(static_cast<int>(split.train.size()), rng)) order.push_back(split.train[p]);
    double total = 0.0;
    for (auto batch : detail::equal_batches(order, cfg.batch_size)) {
      std::vector<int> y;
      for (int i : batch) y.push_back(labels[i]);
      net.params().zero_grad();
      nn::Tape tape;
      nn::ForwardContext ctx{tape};
      auto loss = nn::softmax_cross_entropy(net.logits(ctx, tape.constant(detail::gather_rows(x, batch))),
                                            detail::one_hot(y, mc.classes));
      detail::check_finite(loss.value().item(), "train_ff", "loss", epoch);
      total += loss.value().item() * batch.size();
      tape.backward(loss);
      adam.step(net.params());
    }
    EpochLog log{epoch, {{"loss", total / order.size()}}};
    if (best.enabled()) {
      auto probs = detail::eval_in_chunks(xv, [&](nn::ForwardContext& ctx, nn::Var v) { return net.logits(ctx, v); });
      log.val_macro_f = macro_f_score(detail::argmax_rows(probs), val_truth, mc.classes);
      best.offer(log.val_macro_f, epoch);
    }
    if (on_epoch) on_epoch(log);
    result.log.push_back(std::move(log));
  }
  result.best_epoch = best.restore();
  result.checkpoint = make_checkpoint(ModelKind::kFF, mc, cfg);
  detail::put_params(result.checkpoint, net.params(), "");
  return result;
}

/// Unsupervised VAE: minimizes -ELBO = Bernoulli NLL + KL with one
/// reparameterized sample per example. Logged: elbo, recon, kl, kl_min
/// (smallest per-batch mean KL of the epoch).
inline TrainResult train_m1(std::span<const Signal> signals, const TrainConfig& cfg,
                            const ModelConfig& mc = {}, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (signals.size() < 2) throw DataError("[rsft::train_m1] error: need at least 2 signals");
  M1Model m1(mc, detail::stream_seed(cfg.seed, detail::kInitStream));
  auto x = detail::stack_signals(signals, mc.length);
  nn::Adam adam({cfg.lr, cfg.beta1});
  auto rng = detail::stream_rng(cfg.seed, detail::kShuffleStream);
  auto noise = detail::stream_rng(cfg.seed, detail::kNoiseStream);
  const int n = static_cast<int>(signals.size());
  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = detail::permutation(n, rng);
    double recon_sum = 0.0, kl_sum = 0.0, kl_min = std::numeric_limits<double>::infinity();
    for (auto batch : detail::equal_batches(order, cfg.batch_size)) {
      auto xb = detail::gather_rows(x, batch);
      nn::Tensor target = xb;
      target.reshape({static_cast<int>(batch.size()), mc.length});
      m1.params().zero_grad();
      nn::Tape tape;
      nn::ForwardContext ctx{tape};
      auto code = m1.encode(ctx, tape.constant(xb));
      auto z = nn::reparameterize(code.mu, code.logvar, detail::normal_tensor(code.mu.shape(), noise));
      auto recon = nn::mean(nn::bernoulli_nll_logits_rows(m1.decode_logits(ctx, z), target));
      auto kl = nn::mean(nn::kl_diag_gaussian_rows(code.mu, code.logvar));
      auto loss = nn::add(recon, kl);
      detail::check_finite(loss.value().item(), "train_m1", "loss", epoch);
      recon_sum += recon.value().item() * batch.size();
      kl_sum += kl.value().item() * batch.size();
      kl_min = std::min(kl_min, kl.value().item());
      tape.backward(loss);
      adam.step(m1.params());
    }
    EpochLog log{epoch, {{"elbo", -(recon_sum + kl_sum) / n}, {"recon", recon_sum / n}, {"kl", kl_sum / n},
                         {"kl_min", kl_min}}};
    if (on_epoch) on_epoch(log);
    result.log.push_back(std::move(log));
  }
  result.checkpoint = make_checkpoint(ModelKind::kM1, mc, cfg);
  detail::put_params(result.checkpoint, m1.params(), "");
  return result;
}

namespace detail {

// L(z1, y) = 0.5 ||z1 - dec(z2, y)||^2 + KL(q(z2|z1,y) || N(0,I)) + ln K, per row.
inline nn::Var m2_bound(const M2Model& m2, nn::ForwardContext& ctx, nn::Var z1, const nn::Tensor& y,
                        std::mt19937_64& noise) {
  auto& tape = ctx.tape;
  auto yv = tape.constant(y);
  auto code = m2.encode(ctx, z1, yv);
  auto z2 = nn::reparameterize(code.mu, code.logvar, normal_tensor(code.mu.shape(), noise));
  auto rec = nn::half_squared_error_rows(m2.decode(ctx, z2, yv), z1);
  auto kl = nn::kl_diag_gaussian_rows(code.mu, code.logvar);
  const int rows = z1.dim(0);
  auto prior = tape.constant(nn::Tensor({rows}, std::log(static_cast<double>(m2.config().classes))));
  return nn::add(nn::add(rec, kl), prior);
}

}  // namespace detail

/// Objective on one unlabeled batch: sum_y q(y|z1) L(z1, y) - H(q(y|z1)), per row.
inline nn::Var m2_unlabeled_bound(const M2Model& m2, nn::ForwardContext& ctx, nn::Var z1, std::mt19937_64& noise) {
  const int rows = z1.dim(0), k = m2.config().classes;
  auto logits = m2.class_logits(ctx, z1);
  auto q = nn::softmax(logits);
  auto neg_entropy = nn::sum_rows(nn::mul(q, nn::log_softmax(logits)));
  nn::Var total = neg_entropy;
  for (int c = 0; c < k; ++c) {
    auto bound = detail::m2_bound(m2, ctx, z1, detail::constant_class(rows, k, c), noise);
    total = nn::add(total, nn::mul(nn::column(q, c), bound));
  }
  return total;
}

inline nn::Var m2_labeled_bound(const M2Model& m2, nn::ForwardContext& ctx, nn::Var z1, std::span<const int> y,
                                std::mt19937_64& noise) {
  return detail::m2_bound(m2, ctx, z1, detail::one_hot(y, m2.config().classes), noise);
}

/// Semi-supervised M2 on z1 features. Loss per step:
/// mean_l L(z1, y) + alpha * mean_l CE(q(y|z1), y) + mean_u U(z1).
/// An epoch is one pass over the unlabeled features; labeled batches cycle.
inline TrainResult train_m2(const nn::Tensor& z1_labeled, std::span<const ReadClass> labels,
                            const nn::Tensor& z1_unlabeled, const TrainConfig& cfg, const ModelConfig& mc = {},
                            const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (z1_labeled.rank() != 2 || z1_labeled.dim(1) != mc.z1_dim ||
      static_cast<std::size_t>(z1_labeled.dim(0)) != labels.size()) {
    throw std::invalid_argument("[rsft::train_m2] error: labeled features must be [n, z1_dim] with n labels");
  }
  if (z1_unlabeled.rank() != 2 || z1_unlabeled.dim(1) != mc.z1_dim) {
    throw std::invalid_argument("[rsft::train_m2] error: unlabeled features must be [n, z1_dim]");
  }
  auto y_all = detail::label_indices(labels);
  auto split = detail::stratified_split(y_all, mc.classes, cfg.validation_fraction, cfg.seed);
  if (split.train.empty()) throw DataError("[rsft::train_m2] error: no labeled training examples");
  const int nl = static_cast<int>(split.train.size());
  const int nu = z1_unlabeled.dim(0);
  const double alpha = cfg.alpha_scale * (nl + nu) / nl;

  M2Model m2(mc, detail::stream_seed(cfg.seed, detail::kInitStream));
  nn::Adam adam({cfg.lr, cfg.beta1});
  auto rng = detail::stream_rng(cfg.seed, detail::kShuffleStream);
  auto noise = detail::stream_rng(cfg.seed, detail::kNoiseStream);
  detail::Cycler cycle(nl, rng);
  std::vector<int> val_truth;
  for (int i : split.validation) val_truth.push_back(y_all[i]);
  auto zv = detail::gather_rows(z1_labeled, split.validation);
  detail::BestKeeper best({&m2.params()});
  if (!split.validation.empty()) best.enable();

  TrainResult result;
  // Without unlabeled data an epoch is one pass over the labeled examples.
  const int steps_base = nu > 0 ? nu : nl;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = detail::permutation(steps_base, rng);
    auto batches = detail::equal_batches(order, cfg.batch_size);
    double sum_l = 0, sum_ce = 0, sum_u = 0, sum_loss = 0;
    for (auto batch : batches) {
      std::vector<int> lab;
      for (int p : cycle.next(std::min(cfg.batch_size, nl))) lab.push_back(split.train[p]);
      std::vector<int> y;
      for (int i : lab) y.push_back(y_all[i]);
      m2.params().zero_grad();
      nn::Tape tape;
      nn::ForwardContext ctx{tape};
      auto zl = tape.constant(detail::gather_rows(z1_labeled, lab));
      auto l_term = nn::mean(m2_labeled_bound(m2, ctx, zl, y, noise));
      auto ce = nn::softmax_cross_entropy(m2.class_logits(ctx, zl), detail::one_hot(y, mc.classes));
      auto loss = nn::add(l_term, nn::scale(ce, alpha));
      double u_value = 0.0;
      if (nu > 0) {
        auto zu = tape.constant(detail::gather_rows(z1_unlabeled, batch));
        auto u_term = nn::mean(m2_unlabeled_bound(m2, ctx, zu, noise));
        u_value = u_term.value().item();
        loss = nn::add(loss, u_term);
      }
      detail::check_finite(loss.value().item(), "train_m2", "loss", epoch);
      sum_l += l_term.value().item();
      sum_ce += ce.value().item();
      sum_u += u_value;
      sum_loss += loss.value().item();
      tape.backward(loss);
      adam.step(m2.params());
    }
    const double nb = static_cast<double>(batches.size());
    EpochLog log{epoch, {{"loss", sum_loss / nb}, {"labeled", sum_l / nb}, {"ce", sum_ce / nb},
                         {"unlabeled", sum_u / nb}}};
    if (best.enabled()) {
      log.val_macro_f = macro_f_score(detail::argmax_rows(m2_probabilities(m2, zv)), val_truth, mc.classes);
      best.offer(log.val_macro_f, epoch);
    }
    if (on_epoch) on_epoch(log);
    result.log.push_back(std::move(log));
  }
  result.best_epoch = best.restore();
  result.checkpoint = make_checkpoint(ModelKind::kM2, mc, cfg);
  result.checkpoint.header["alpha"] = format_real(alpha);
  detail::put_params(result.checkpoint, m2.params(), "");
  return result;
}

namespace detail {

// -log(1 - p_fake) = LSE(all) - LSE(class logits), per row.
inline nn::Var real_unsup_loss_rows(nn::Var logits, int classes) {
  return nn::sub(nn::logsumexp_rows(logits), nn::logsumexp_rows(nn::slice_cols(logits, 0, classes)));
}

// -log p_fake = LSE(all) - fake logit, per row.
inline nn::Var fake_loss_rows(nn::Var logits, int classes) {
  return nn::sub(nn::logsumexp_rows(logits), nn::column(logits, classes));
}

}  // namespace detail

/// Components of the discriminator objective for one batch (means).
struct GanLosses {
  nn::Var supervised;   // CE over the K class logits on labeled real signals
  nn::Var real_unsup;   // -log(1 - p_fake) on unlabeled real signals
  nn::Var fake;         // -log p_fake on generated signals
};

inline GanLosses discriminator_losses(nn::Var logits, int n_labeled, int n_unlabeled, int n_fake,
                                      const nn::Tensor& labeled_onehot, int classes) {
  auto lab = nn::slice_rows(logits, 0, n_labeled);
  auto unl = nn::slice_rows(logits, n_labeled, n_unlabeled);
  auto fake = nn::slice_rows(logits, n_labeled + n_unlabeled, n_fake);
  return {nn::softmax_cross_entropy(nn::slice_cols(lab, 0, classes), labeled_onehot),
          nn::mean(detail::real_unsup_loss_rows(unl, classes)),
          nn::mean(detail::fake_loss_rows(fake, classes))};
}

/// Semi-supervised GAN with a K+1-way discriminator. Signals longer than the
/// model length are resampled. Per step (1:1):
///   D: CE(labeled) - log(1 - p_fake)(unlabeled) - log p_fake(G(z)) on one
///      concatenated batch;
///   G: -log(1 - p_fake(G(z))), D run alongside the unlabeled batch with its
///      batch-norm running statistics frozen.
/// Logged: d_loss, d_sup, d_unsup, d_fake, g_loss, fake_min, fake_max.
inline TrainResult train_semigan(const LabeledSet& labeled, const UnlabeledSet& unlabeled, const TrainConfig& cfg,
                                 const ModelConfig& mc = {kDefaultGanLength}, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  check_disjoint(labeled, unlabeled);
  auto y_all = detail::label_indices(labeled.labels);
  auto split = detail::stratified_split(y_all, mc.classes, cfg.validation_fraction, cfg.seed);
  if (split.train.size() < 2) throw DataError("[rsft::train_semigan] error: need at least 2 labeled training examples");
  if (unlabeled.size() < 2) throw DataError("[rsft::train_semigan] error: need at least 2 unlabeled signals");
  const int nl = static_cast<int>(split.train.size());
  const int nu = static_cast<int>(unlabeled.size());
  const int k = mc.classes;

  Generator gen(mc, detail::stream_seed(cfg.seed, detail::kInitStream));
  Discriminator disc(mc, detail::stream_seed(cfg.seed, detail::kInit2Stream));
  auto xl = detail::stack_signals(labeled.signals, mc.length);
  auto xu = detail::stack_signals(unlabeled, mc.length);
  nn::Adam adam_g({cfg.lr, cfg.beta1}), adam_d({cfg.lr, cfg.beta1});
  auto rng = detail::stream_rng(cfg.seed, detail::kShuffleStream);
  auto noise = detail::stream_rng(cfg.seed, detail::kNoiseStream);
  detail::Cycler cycle(nl, rng);
  std::vector<int> val_truth;
  std::vector<Signal> val_signals;
  for (int i : split.validation) {
    val_truth.push_back(y_all[i]);
    val_signals.push_back(labeled.signals[i]);
  }
  detail::BestKeeper best({&gen.params(), &disc.params()});
  if (!split.validation.empty()) best.enable();

  auto as_batch = [&](const nn::Tensor& rows2d) {
    nn::Tensor t = rows2d;
    t.reshape({rows2d.dim(0), 1, mc.length});
    return t;
  };

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = detail::permutation(nu, rng);
    auto batches = detail::equal_batches(order, cfg.batch_size);
    double s_d = 0, s_sup = 0, s_unsup = 0, s_fake = 0, s_g = 0;
    double fake_min = std::numeric_limits<double>::infinity(), fake_max = -fake_min;
    for (auto batch : batches) {
      const int nb = static_cast<int>(batch.size());
      std::vector<int> lab;
      for (int p : cycle.next(std::min(cfg.batch_size, nl))) lab.push_back(split.train[p]);
      std::vector<int> y;
      for (int i : lab) y.push_back(y_all[i]);

      // Discriminator step on [labeled; unlabeled; fake].
      nn::Tensor fake_values;
      {
        nn::Tape gtape(false);
        nn::ForwardContext gctx{gtape, nn::Mode::kTrain, false};
        fake_values = gen.sample(gctx, gtape.constant(detail::normal_tensor({nb, mc.noise_dim}, noise))).value();
      }
      for (double v : fake_values.values()) {
        fake_min = std::min(fake_min, v);
        fake_max = std::max(fake_max, v);
      }
      disc.params().zero_grad();
      double d_total;
      {
        nn::Tape tape;
        nn::ForwardContext ctx{tape};
        auto input = nn::concat_rows({tape.constant(detail::gather_rows(xl, lab)),
                                      tape.constant(detail::gather_rows(xu, batch)),
                                      tape.constant(as_batch(fake_values))});
        auto logits = disc.forward(ctx, input).logits;
        auto parts = discriminator_losses(logits, static_cast<int>(lab.size()), nb, nb, detail::one_hot(y, k), k);
        auto loss = nn::add(nn::add(parts.supervised, parts.real_unsup), parts.fake);
        d_total = loss.value().item();
        detail::check_finite(d_total, "train_semigan", "discriminator loss", epoch);
        s_sup += parts.supervised.value().item();
        s_unsup += parts.real_unsup.value().item();
        s_fake += parts.fake.value().item();
        tape.backward(loss);
      }
      adam_d.step(disc.params());
      s_d += d_total;

      // Generator step.
      gen.params().zero_grad();
      {
        nn::Tape tape;
        nn::ForwardContext gctx{tape};
        auto fake = gen.sample(gctx, tape.constant(detail::normal_tensor({nb, mc.noise_dim}, noise)));
        nn::ForwardContext dctx{tape, nn::Mode::kTrain, false};
        auto input = nn::concat_rows({tape.constant(detail::gather_rows(xu, batch)),
                                      nn::reshape(fake, {nb, 1, mc.length})});
        auto logits = disc.forward(dctx, input).logits;
        auto loss = nn::mean(detail::real_unsup_loss_rows(nn::slice_rows(logits, nb, nb), k));
        detail::check_finite(loss.value().item(), "train_semigan", "generator loss", epoch);
        s_g += loss.value().item();
        tape.backward(loss);
      }
      adam_g.step(gen.params());
    }
    const double nbatches = static_cast<double>(batches.size());
    EpochLog log{epoch, {{"d_loss", s_d / nbatches}, {"d_sup", s_sup / nbatches}, {"d_unsup", s_unsup / nbatches},
                         {"d_fake", s_fake / nbatches}, {"g_loss", s_g / nbatches}, {"fake_min", fake_min},
                         {"fake_max", fake_max}}};
    if (best.enabled()) {
      auto probs = semigan_probabilities(disc, val_signals);
      log.val_macro_f = macro_f_score(detail::argmax_rows(probs), val_truth, k);
      best.offer(log.val_macro_f, epoch);
    }
    if (on_epoch) on_epoch(log);
    result.log.push_back(std::move(log));
  }
  result.best_epoch = best.restore();
  result.checkpoint = make_checkpoint(ModelKind::kSemiGan, mc, cfg);
  detail::put_params(result.checkpoint, gen.params(), "g.");
  detail::put_params(result.checkpoint, disc.params(), "d.");
  return result;
}

}  // namespace rsft

#endif  // RSFT_TRAINING_HPP_
