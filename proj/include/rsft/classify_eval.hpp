#ifndef RSFT_CLASSIFY_EVAL_HPP_
#define RSFT_CLASSIFY_EVAL_HPP_

#include <algorithm>
#include <array>
#include <chrono>
#include <functional>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rsft/metrics.hpp"
#include "rsft/synth_gen.hpp"
#include "rsft/training.hpp"

namespace rsft {

struct Classification {
  std::string read_id;
  std::vector<double> scores;  // K probabilities summing to 1
  ReadClass label = ReadClass::kRegular;
};

/// Argmax rows of an [n, K] probability matrix; the lowest index wins ties.
inline std::vector<Classification> to_classifications(std::span<const Signal> signals, const nn::Tensor& probs) {
  const int k = probs.dim(1);
  if (k != kNumClasses) {
    throw std::invalid_argument("[rsft::to_classifications] error: expected " + std::to_string(kNumClasses) +
                                " class scores, got " + std::to_string(k));
  }
  auto labels = detail::argmax_rows(probs);
  std::vector<Classification> out;
  for (std::size_t i = 0; i < signals.size(); ++i) {
    std::vector<double> s(probs.data() + i * k, probs.data() + (i + 1) * k);
    out.push_back({signals[i].read_id, std::move(s), class_from_index(labels[i])});
  }
  return out;
}

inline std::vector<Classification> classify_ff(const nn::Checkpoint& ck, std::span<const Signal> signals) {
  auto net = load_ff(ck);
  return to_classifications(signals, ff_probabilities(net, signals));
}

/// Scores q(y | z1) with z1 the M1 posterior mean.
inline std::vector<Classification> classify_m1m2(const nn::Checkpoint& m1_ck, const nn::Checkpoint& m2_ck,
                                                 std::span<const Signal> signals) {
  auto m1 = load_m1(m1_ck);
  auto m2 = load_m2(m2_ck);
  return to_classifications(signals, m2_probabilities(m2, extract_z1(m1, signals)));
}

inline std::vector<Classification> classify_m1m2(const nn::Checkpoint& bundled, std::span<const Signal> signals) {
  return classify_m1m2(bundled, bundled, signals);
}

inline std::vector<Classification> classify_semigan(const nn::Checkpoint& ck, std::span<const Signal> signals) {
  auto gan = load_semigan(ck);
  return to_classifications(signals, semigan_probabilities(gan.discriminator, signals));
}

inline ModelKind checkpoint_kind(const nn::Checkpoint& ck) {
  auto it = ck.header.find("kind");
  std::optional<ModelKind> kind;
  if (it != ck.header.end()) kind = parse_model_kind(it->second);
  if (!kind) throw DataError("[rsft::checkpoint_kind] error: checkpoint has no recognizable kind");
  return *kind;
}

/// Dispatch on the checkpoint kind (ff, m1m2 or semigan).
inline std::vector<Classification> classify(const nn::Checkpoint& ck, std::span<const Signal> signals) {
  switch (checkpoint_kind(ck)) {
    case ModelKind::kFF: return classify_ff(ck, signals);
    case ModelKind::kM1M2: return classify_m1m2(ck, signals);
    case ModelKind::kSemiGan: return classify_semigan(ck, signals);
    default:
      throw DataError("[rsft::classify] error: a " + ck.header.at("kind") + " checkpoint cannot classify");
  }
}

/// Latent vectors for visualization: M1 posterior means (m1, m1m2) or the
/// discriminator's penultimate activations (semigan).
inline nn::Tensor extract_features(const nn::Checkpoint& ck, std::span<const Signal> signals) {
  switch (checkpoint_kind(ck)) {
    case ModelKind::kM1:
    case ModelKind::kM1M2: return extract_z1(load_m1(ck), signals);
    case ModelKind::kSemiGan: return semigan_features(load_semigan(ck).discriminator, signals);
    default:
      throw DataError("[rsft::extract_features] error: a " + ck.header.at("kind") +
                      " checkpoint has no latent features");
  }
}

inline LabelMap to_label_map(std::span<const Classification> cls) {
  LabelMap out;
  for (const auto& c : cls) out[c.read_id] = c.label;
  return out;
}

/// "read_id<TAB>label<TAB>p_chimeric<TAB>p_left_repeat<TAB>p_right_repeat<TAB>p_regular"
inline void write_classifications(std::ostream& out, std::span<const Classification> cls) {
  out << "read_id\tlabel";
  for (auto c : kAllClasses) out << "\tp_" << to_string(c);
  out << "\n";
  for (const auto& c : cls) {
    out << c.read_id << '\t' << to_string(c.label);
    for (double s : c.scores) out << '\t' << format_real(s);
    out << '\n';
  }
}

inline std::vector<Classification> read_classifications(std::istream& in) {
  std::vector<Classification> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line_no == 1 && line.rfind("read_id\t", 0) == 0)) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, '\t');) f.push_back(field);
    const std::string where = "classifications line " + std::to_string(line_no);
    if (f.size() != 2 + kNumClasses) throw DataError("[rsft::read_classifications] error: " + where + ": expected 6 fields");
    auto label = parse_read_class(f[1]);
    if (!label) throw DataError("[rsft::read_classifications] error: " + where + ": unknown class '" + f[1] + "'");
    Classification c{f[0], {}, *label};
    for (int k = 0; k < kNumClasses; ++k) c.scores.push_back(parse_real(f[2 + k], where));
    out.push_back(std::move(c));
  }
  return out;
}

/// Reads classifications or plain "read_id<TAB>label" files.
inline LabelMap read_predictions(std::istream& in) {
  std::stringstream buf;
  buf << in.rdbuf();
  std::string first;
  std::getline(buf, first);
  buf.clear();
  buf.seekg(0);
  if (first.rfind("read_id\tlabel\t", 0) == 0) {
    auto cls = read_classifications(buf);
    return to_label_map(cls);
  }
  return read_labels(buf);
}

// -- evaluation report -------------------------------------------------------

struct EvalReport {
  FScore f;
  ConfusionMatrix confusion;
  std::vector<PRCurve> pr;  // per class; empty when scores are unavailable
  std::vector<double> auc;
  PRCurve mean_pr;
};

/// Metrics of `cls` against `truth` (every truth read must be classified).
inline EvalReport evaluate(std::span<const Classification> cls, const LabelMap& truth) {
  std::map<std::string, const Classification*> by_id;
  for (const auto& c : cls) by_id[c.read_id] = &c;
  std::vector<int> pred, t;
  std::vector<double> scores;
  for (const auto& [id, label] : truth) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("[rsft::evaluate] error: no classification for read " + id);
    pred.push_back(to_index(it->second->label));
    t.push_back(to_index(label));
    scores.insert(scores.end(), it->second->scores.begin(), it->second->scores.end());
  }
  EvalReport r;
  r.confusion = confusion_matrix(pred, t, kNumClasses);
  r.f = f_scores(r.confusion);
  if (scores.size() == t.size() * kNumClasses) {
    for (int c = 0; c < kNumClasses; ++c) {
      if (std::find(t.begin(), t.end(), c) == t.end()) continue;
      r.pr.push_back(pr_curve_for_class(scores, t, c));
      r.auc.push_back(pr_auc(r.pr.back()));
    }
    if (!r.pr.empty()) r.mean_pr = mean_pr_curve(r.pr);
  }
  return r;
}

inline void write_metrics(std::ostream& out, const FScore& f) {
  out << "metric\tvalue\n";
  out << "macro_f\t" << format_real(f.macro) << "\n";
  for (int c = 0; c < static_cast<int>(f.per_class.size()); ++c) {
    auto name = to_string(class_from_index(c));
    out << "f1_" << name << "\t" << format_real(f.per_class[c]) << "\n";
    out << "precision_" << name << "\t" << format_real(f.precision[c]) << "\n";
    out << "recall_" << name << "\t" << format_real(f.recall[c]) << "\n";
  }
}

inline void write_confusion(std::ostream& out, const ConfusionMatrix& m) {
  out << "truth\\pred";
  for (auto c : kAllClasses) out << '\t' << to_string(c);
  out << '\n';
  for (int i = 0; i < kNumClasses; ++i) {
    out << to_string(class_from_index(i));
    for (int j = 0; j < kNumClasses; ++j) out << '\t' << m[i][j];
    out << '\n';
  }
}

inline void write_pr_curve(std::ostream& out, const PRCurve& curve) {
  out << "threshold\tprecision\trecall\n";
  for (const auto& p : curve.points) {
    out << format_real(p.threshold) << '\t' << format_real(p.precision) << '\t' << format_real(p.recall) << '\n';
  }
}

inline PRCurve read_pr_curve(std::istream& in) {
  PRCurve c;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("threshold", 0) == 0) continue;
    std::stringstream ss(line);
    std::string a, b, d;
    std::getline(ss, a, '\t');
    std::getline(ss, b, '\t');
    std::getline(ss, d, '\t');
    const std::string where = "pr curve line " + std::to_string(line_no);
    c.points.push_back({parse_real(a, where), parse_real(b, where), parse_real(d, where)});
  }
  return c;
}

// -- labeled-subset protocol -------------------------------------------------

/// N indices drawn class-stratified: floor(N/K) per class, the remainder to
/// classes picked in seeded order. Errors when a class runs short.
inline std::vector<int> stratified_subset(std::span<const ReadClass> labels, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::array<std::vector<int>, kNumClasses> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[to_index(labels[i])].push_back(static_cast<int>(i));
  std::array<int, kNumClasses> take;
  take.fill(n / kNumClasses);
  std::array<int, kNumClasses> order{0, 1, 2, 3};
  std::shuffle(order.begin(), order.end(), rng);
  for (int r = 0; r < n % kNumClasses; ++r) ++take[order[r]];
  std::vector<int> out;
  for (int c = 0; c < kNumClasses; ++c) {
    if (static_cast<int>(members[c].size()) < take[c]) {
      throw DataError("[rsft::stratified_subset] error: class " + to_string(class_from_index(c)) + " has " +
                      std::to_string(members[c].size()) + " examples, need " + std::to_string(take[c]));
    }
    std::shuffle(members[c].begin(), members[c].end(), rng);
    out.insert(out.end(), members[c].begin(), members[c].begin() + take[c]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct ProtocolConfig {
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<int> n_labeled = {15, 30, 70};
  std::vector<ModelKind> models = {ModelKind::kFF, ModelKind::kM1M2, ModelKind::kSemiGan};
  int train_pool_per_class = 65;   // 260 labeled training examples
  int test_per_class = 100;        // 400 test examples
  int unlabeled_per_class = 500;   // 2000 unlabeled examples
  double noise = 0.03;
  int length = kDefaultLength;
  int gan_length = kDefaultGanLength;
  TrainConfig ff = default_train_config(ModelKind::kFF);
  TrainConfig m1 = default_train_config(ModelKind::kM1);
  TrainConfig m2 = default_train_config(ModelKind::kM2);
  TrainConfig gan = default_train_config(ModelKind::kSemiGan);
};

struct ProtocolData {
  LabeledSet pool;
  LabeledSet test;
  UnlabeledSet unlabeled;
};

/// One synthetic draw split per class into the labeled pool, test and
/// unlabeled sets.
inline ProtocolData protocol_data(const ProtocolConfig& cfg, std::uint64_t seed) {
  SynthConfig sc;
  sc.length = cfg.length;
  sc.noise = cfg.noise;
  sc.seed = seed;
  int per = cfg.train_pool_per_class + cfg.test_per_class + cfg.unlabeled_per_class;
  sc.per_class = {per, per, per, per};
  auto all = synth_signals(sc);
  ProtocolData d;
  std::array<int, kNumClasses> seen{};
  for (std::size_t i = 0; i < all.signals.size(); ++i) {
    int c = to_index(all.labels[i]);
    int rank = seen[c]++;
    if (rank < cfg.train_pool_per_class) {
      d.pool.add(all.signals[i], all.labels[i]);
    } else if (rank < cfg.train_pool_per_class + cfg.test_per_class) {
      d.test.add(all.signals[i], all.labels[i]);
    } else {
      d.unlabeled.push_back(all.signals[i]);
    }
  }
  return d;
}

struct ProtocolCell {
  int n = 0;
  ModelKind model = ModelKind::kFF;
  std::vector<double> per_seed;
  double mean() const {
    double s = 0;
    for (double v : per_seed) s += v;
    return per_seed.empty() ? 0.0 : s / per_seed.size();
  }
};

struct ProtocolResult {
  std::vector<ProtocolCell> cells;  // n-major, model-minor

  const ProtocolCell& at(int n, ModelKind m) const {
    for (const auto& c : cells) {
      if (c.n == n && c.model == m) return c;
    }
    throw std::out_of_range("[rsft::ProtocolResult] error: no cell for N=" + std::to_string(n) + " " + to_string(m));
  }
};

using ProtocolProgress = std::function<void(const std::string&)>;

inline double test_macro_f(std::span<const Classification> cls, const LabeledSet& test) {
  std::vector<int> pred, truth;
  for (std::size_t i = 0; i < cls.size(); ++i) {
    pred.push_back(to_index(cls[i].label));
    truth.push_back(to_index(test.labels[i]));
  }
  return macro_f_score(pred, truth);
}

/// For every seed: draw data, train M1 once on pool + unlabeled signals, then
/// per N train FF, M2 and the semi-GAN on the same stratified subset and score
/// macro-F on the test set.
inline ProtocolResult run_protocol(const ProtocolConfig& cfg, const ProtocolProgress& progress = {}) {
  ProtocolResult result;
  for (int n : cfg.n_labeled) {
    for (auto m : cfg.models) result.cells.push_back({n, m, {}});
  }
  auto cell = [&](int n, ModelKind m) -> ProtocolCell& {
    for (auto& c : result.cells) {
      if (c.n == n && c.model == m) return c;
    }
    throw std::logic_error("cell");
  };
  auto note = [&](const std::string& s) {
    if (progress) progress(s);
  };
  const bool want_m1m2 = std::find(cfg.models.begin(), cfg.models.end(), ModelKind::kM1M2) != cfg.models.end();
  for (auto seed : cfg.seeds) {
    auto data = protocol_data(cfg, seed);
    ModelConfig mc;
    mc.length = cfg.length;
    ModelConfig gc;
    gc.length = cfg.gan_length;

    std::optional<M1Model> m1;
    nn::Tensor z_unl, z_pool, z_test;
    if (want_m1m2) {
      std::vector<Signal> all = data.pool.signals;
      all.insert(all.end(), data.unlabeled.begin(), data.unlabeled.end());
      auto tc = cfg.m1;
      tc.seed = seed;
      auto trained = train_m1(all, tc, mc);
      m1.emplace(load_m1(trained.checkpoint));
      z_unl = extract_z1(*m1, data.unlabeled);
      z_pool = extract_z1(*m1, data.pool.signals);
      z_test = extract_z1(*m1, data.test.signals);
      note("seed " + std::to_string(seed) + " m1 elbo " + format_real(trained.log.empty() ? 0.0 : trained.log.back().get("elbo")));
    }
    for (int n : cfg.n_labeled) {
      auto idx = stratified_subset(data.pool.labels, n, seed * 1000 + n);
      LabeledSet sub;
      std::vector<ReadClass> sub_labels;
      for (int i : idx) {
        sub.add(data.pool.signals[i], data.pool.labels[i]);
        sub_labels.push_back(data.pool.labels[i]);
      }
      for (auto m : cfg.models) {
        double f = 0.0;
        if (m == ModelKind::kFF) {
          auto tc = cfg.ff;
          tc.seed = seed;
          auto r = train_ff(sub, tc, mc);
          f = test_macro_f(classify_ff(r.checkpoint, data.test.signals), data.test);
        } else if (m == ModelKind::kM1M2) {
          auto tc = cfg.m2;
          tc.seed = seed;
          auto r = train_m2(detail::gather_rows(z_pool, idx), sub_labels, z_unl, tc, mc);
          auto m2 = load_m2(r.checkpoint);
          auto probs = m2_probabilities(m2, z_test);
          f = test_macro_f(to_classifications(data.test.signals, probs), data.test);
        } else if (m == ModelKind::kSemiGan) {
          auto tc = cfg.gan;
          tc.seed = seed;
          auto r = train_semigan(sub, data.unlabeled, tc, gc);
          f = test_macro_f(classify_semigan(r.checkpoint, data.test.signals), data.test);
        } else {
          throw std::invalid_argument("[rsft::run_protocol] error: unsupported model " + to_string(m));
        }
        cell(n, m).per_seed.push_back(f);
        note("seed " + std::to_string(seed) + " N=" + std::to_string(n) + " " + to_string(m) + " macro_f " +
             format_real(f));
      }
    }
  }
  return result;
}

/// Table: one row per N, one column per model (mean macro-F over seeds).
inline void write_protocol_table(std::ostream& out, const ProtocolResult& r, const ProtocolConfig& cfg) {
  out << "N";
  for (auto m : cfg.models) out << '\t' << to_string(m);
  out << '\n';
  for (int n : cfg.n_labeled) {
    out << n;
    for (auto m : cfg.models) out << '\t' << format_real(r.at(n, m).mean());
    out << '\n';
  }
}

}  // namespace rsft

#endif  // RSFT_CLASSIFY_EVAL_HPP_
