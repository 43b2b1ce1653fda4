// rsft command-line frontend. One subcommand per run; see `rsft --help`.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rsft/assembly_filter.hpp"
#include "rsft/classify_eval.hpp"
#include "rsft/coverage.hpp"
#include "rsft/heuristic_labeler.hpp"
#include "rsft/latent_viz.hpp"
#include "rsft/overlap_io.hpp"
#include "rsft/signal_prep.hpp"
#include "rsft/svg.hpp"
#include "rsft/synth_gen.hpp"
#include "rsft/training.hpp"

namespace {

using namespace rsft;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Values the user may leave at "auto" (model-dependent defaults).
template <class T>
using Auto = std::optional<T>;

struct Opts {
  std::uint64_t seed = 1;
  std::string config;

  struct {
    std::string paf, out;
    int min_mapq = 0;
  } coverage;

  struct {
    std::string coverage, out, rejected;
    int length = kDefaultLength;
  } prep;

  struct {
    std::string signals, out, pool_out;
    HeuristicParams params;
    int per_class = 65;
  } heuristic;

  struct {
    std::string kind = "signals", out = "synth";
    int classes = kNumClasses, per_class = 100, length = kDefaultLength;
    double noise = 0.03;
    std::int64_t genome_length = 200000;
    int reads = 600;
    std::int64_t min_read_length = 4000, max_read_length = 8000;
    double chimera_rate = 0.05;
    std::int64_t repeat_length = 0, repeat_first = 0, repeat_second = 0;
    std::int64_t min_overlap = 500;
  } synth;

  struct {
    std::string model = "ff", signals, labels, out, log;
    int labeled = 0;
    Auto<int> epochs, m1_epochs, model_length;
    Auto<double> lr, beta1;
    int batch_size = 64;
    double validation_fraction = 0.2;
  } train;

  struct {
    std::string checkpoint, signals, out;
  } classify;

  struct {
    std::string pred, truth, out = "-", confusion, per_seed;
    std::vector<std::string> models = {"ff", "m1m2", "semigan"};
    std::vector<int> labeled = {15, 30, 70};
    int seeds = 5;
    int pool_per_class = 65, test_per_class = 100, unlabeled_per_class = 500;
    double noise = 0.03;
    int length = kDefaultLength, gan_length = kDefaultGanLength;
    int ff_epochs = 100, m1_epochs = 200, m2_epochs = 200, gan_epochs = 300;
  } eval;

  struct {
    std::string pred, truth, out, cls = "mean";
  } pr;

  struct {
    std::string checkpoint, signals, features, labels, out;
    double perplexity = 30.0, learning_rate = 200.0;
    int iterations = 1000;
  } tsne;

  struct {
    std::string paf, pred, out, blacklist, report, read_lengths;
  } filter;

  struct {
    std::string contigs;
    std::int64_t genome_length = 0;
  } stats;

  struct {
    std::string kind, out, title;
    std::vector<std::string> input, reads;
    int width = 640, height = 420;
  } plot;
};

// -- file helpers -------------------------------------------------------------

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("[rsft] error: cannot open " + path);
  return in;
}

void check_output(const std::string& path) {
  if (path.empty() || path == "-") return;
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw UsageError("[rsft] error: output directory does not exist: " + parent.string());
  }
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& fn) {
  if (path == "-") {
    fn(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("[rsft] error: cannot write " + path);
  fn(out);
  out.flush();
  if (!out) throw DataError("[rsft] error: write failed for " + path);
}

std::vector<Signal> load_signals(const std::string& path) {
  auto in = open_in(path);
  return read_signals(in);
}

LabelMap load_labels(const std::string& path) {
  auto in = open_in(path);
  return read_labels(in);
}

LabelMap load_predictions(const std::string& path) {
  auto in = open_in(path);
  return read_predictions(in);
}

PafData load_paf(const std::string& path) {
  auto in = open_in(path);
  return parse_paf(in);
}

ReadClass parse_class_or_throw(const std::string& s) {
  auto c = parse_read_class(s);
  if (!c) throw UsageError("[rsft] error: unknown class '" + s + "'");
  return *c;
}

ModelKind parse_model_or_throw(const std::string& s) {
  auto m = parse_model_kind(s);
  if (!m || *m == ModelKind::kM1 || *m == ModelKind::kM2) {
    throw UsageError("[rsft] error: unknown model '" + s + "' (expected ff, m1m2 or semigan)");
  }
  return *m;
}

void note(const std::string& s) { std::cerr << s << '\n'; }

// -- subcommands ----------------------------------------------------------------

void run_coverage(const Opts& o) {
  check_output(o.coverage.out);
  auto paf = load_paf(o.coverage.paf);
  std::vector<OverlapRecord> kept;
  for (const auto& r : paf.records) {
    if (r.mapq >= o.coverage.min_mapq) kept.push_back(r);
  }
  auto cov = build_coverage(kept, paf.reads);
  write_file(o.coverage.out, [&](std::ostream& out) { write_coverage(out, cov); });
  note("coverage: " + std::to_string(cov.size()) + " reads, " + std::to_string(kept.size()) + " records");
}

void run_prep(const Opts& o) {
  check_output(o.prep.out);
  check_output(o.prep.rejected);
  if (o.prep.length < 1) throw UsageError("[rsft prep] error: --length must be >= 1");
  auto in = open_in(o.prep.coverage);
  auto cov = read_coverage(in);
  auto res = prepare_all(cov, o.prep.length);
  write_file(o.prep.out, [&](std::ostream& out) { write_signals(out, res.signals); });
  if (!o.prep.rejected.empty()) {
    write_file(o.prep.rejected, [&](std::ostream& out) {
      for (const auto& [id, why] : res.rejected) out << id << '\t' << why << '\n';
    });
  }
  note("prep: " + std::to_string(res.signals.size()) + " signals, " + std::to_string(res.rejected.size()) +
       " rejected");
}

void run_heuristic(const Opts& o) {
  const auto& h = o.heuristic;
  check_output(h.out);
  check_output(h.pool_out);
  h.params.validate();
  auto signals = load_signals(h.signals);
  LabelMap labels;
  for (const auto& s : signals) labels[s.read_id] = heuristic_label(s, h.params);
  write_file(h.out, [&](std::ostream& out) { write_labels(out, labels); });
  if (!h.pool_out.empty()) {
    if (h.per_class < 0) throw UsageError("[rsft heuristic] error: --per-class must be >= 0");
    ClassQuota q;
    q.fill(h.per_class);
    auto pool = balance_pool(signals, h.params, q, o.seed);
    write_file(h.pool_out, [&](std::ostream& out) { write_signals(out, pool); });
  }
}

void run_synth(const Opts& o) {
  const auto& s = o.synth;
  if (s.classes != kNumClasses) {
    throw UsageError("[rsft synth] error: --classes must be " + std::to_string(kNumClasses));
  }
  if (s.kind == "signals") {
    const std::string sig = s.out + ".signals.tsv", lab = s.out + ".labels.tsv";
    check_output(sig);
    SynthConfig cfg;
    cfg.length = s.length;
    cfg.per_class.fill(s.per_class);
    cfg.noise = s.noise;
    cfg.seed = o.seed;
    auto data = synth_signals(cfg);
    LabelMap labels;
    for (std::size_t i = 0; i < data.signals.size(); ++i) labels[data.signals[i].read_id] = data.labels[i];
    write_file(sig, [&](std::ostream& out) { write_signals(out, data.signals); });
    write_file(lab, [&](std::ostream& out) { write_labels(out, labels); });
    note("synth: " + std::to_string(data.signals.size()) + " signals -> " + sig + ", " + lab);
  } else if (s.kind == "pipeline") {
    const std::string paf = s.out + ".paf", lab = s.out + ".labels.tsv";
    check_output(paf);
    PipelineConfig cfg;
    cfg.genome_length = s.genome_length;
    cfg.n_reads = s.reads;
    cfg.min_read_length = s.min_read_length;
    cfg.max_read_length = s.max_read_length;
    cfg.chimera_rate = s.chimera_rate;
    if (s.repeat_length > 0) cfg.repeat = RepeatSpec{s.repeat_length, s.repeat_first, s.repeat_second};
    cfg.min_overlap = s.min_overlap;
    cfg.seed = o.seed;
    auto data = synth_pipeline(cfg);
    write_file(paf, [&](std::ostream& out) { write_paf(out, data.records); });
    write_file(lab, [&](std::ostream& out) { write_labels(out, data.labels); });
    note("synth: " + std::to_string(data.reads.size()) + " reads, " + std::to_string(data.records.size()) +
         " overlaps -> " + paf + ", " + lab);
  } else {
    throw UsageError("[rsft synth] error: --kind must be signals or pipeline");
  }
}

TrainConfig resolve_train(ModelKind kind, const Opts& o) {
  auto tc = default_train_config(kind);
  const auto& t = o.train;
  if (t.epochs) tc.epochs = *t.epochs;
  if (t.lr) tc.lr = *t.lr;
  if (t.beta1) tc.beta1 = *t.beta1;
  tc.batch_size = t.batch_size;
  tc.validation_fraction = t.validation_fraction;
  tc.seed = o.seed;
  tc.validate();
  return tc;
}

void run_train(const Opts& o) {
  const auto& t = o.train;
  check_output(t.out);
  check_output(t.log);
  const auto kind = parse_model_or_throw(t.model);
  auto tc = resolve_train(kind, o);

  auto signals = load_signals(t.signals);
  auto labels = load_labels(t.labels);
  auto labeled = attach_labels(signals, labels);
  if (labeled.size() == 0) throw DataError("[rsft train] error: no signal has a label");
  if (t.labeled > 0) {
    auto idx = stratified_subset(labeled.labels, t.labeled, o.seed);
    LabeledSet sub;
    for (int i : idx) sub.add(labeled.signals[i], labeled.labels[i]);
    labeled = std::move(sub);
  } else if (t.labeled < 0) {
    throw UsageError("[rsft train] error: --labeled must be >= 0");
  }
  std::set<std::string> used;
  for (const auto& s : labeled.signals) used.insert(s.read_id);
  UnlabeledSet unlabeled;
  for (const auto& s : signals) {
    if (!used.count(s.read_id)) unlabeled.push_back(s);
  }
  note("train: " + std::to_string(labeled.size()) + " labeled, " + std::to_string(unlabeled.size()) + " unlabeled");

  std::ofstream log_file;
  if (!t.log.empty()) {
    log_file.open(t.log, std::ios::binary);
    if (!log_file) throw DataError("[rsft] error: cannot write " + t.log);
  }
  auto logger = [&](const std::string& stage) {
    return [&, stage](const EpochLog& e) {
      auto line = stage + "\t" + format_epoch_log(e);
      if (log_file.is_open()) log_file << line << '\n';
      std::cerr << line << '\n';
    };
  };

  ModelConfig mc;
  mc.length = t.model_length.value_or(kind == ModelKind::kSemiGan ? kDefaultGanLength : kDefaultLength);
  mc.validate();
  nn::Checkpoint ck;
  if (kind == ModelKind::kFF) {
    ck = train_ff(labeled, tc, mc, logger("ff")).checkpoint;
  } else if (kind == ModelKind::kSemiGan) {
    if (unlabeled.empty()) throw DataError("[rsft train] error: semigan needs unlabeled signals");
    ck = train_semigan(labeled, unlabeled, tc, mc, logger("semigan")).checkpoint;
  } else {
    if (unlabeled.empty()) throw DataError("[rsft train] error: m1m2 needs unlabeled signals");
    auto m1c = default_train_config(ModelKind::kM1);
    m1c.epochs = t.m1_epochs.value_or(m1c.epochs);
    m1c.lr = tc.lr;
    m1c.beta1 = tc.beta1;
    m1c.batch_size = tc.batch_size;
    m1c.seed = o.seed;
    auto m1r = train_m1(signals, m1c, mc, logger("m1"));
    auto m1 = load_m1(m1r.checkpoint);
    auto z_l = extract_z1(m1, labeled.signals);
    auto z_u = extract_z1(m1, unlabeled);
    auto m2r = train_m2(z_l, labeled.labels, z_u, tc, mc, logger("m2"));
    ck = bundle_m1m2(m1r.checkpoint, m2r.checkpoint);
  }
  nn::save_checkpoint(t.out, ck);
  note("train: checkpoint -> " + t.out);
}

void run_classify(const Opts& o) {
  const auto& c = o.classify;
  check_output(c.out);
  auto ck = nn::load_checkpoint(c.checkpoint);
  auto signals = load_signals(c.signals);
  auto cls = classify(ck, signals);
  write_file(c.out, [&](std::ostream& out) { write_classifications(out, cls); });
}

std::vector<Classification> load_scored(const std::string& path) {
  auto in = open_in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string first;
  std::getline(buf, first);
  buf.clear();
  buf.seekg(0);
  if (first.rfind("read_id\tlabel\t", 0) == 0) return read_classifications(buf);
  // Plain label file: hard labels only, no scores.
  std::vector<Classification> out;
  for (const auto& [id, c] : read_labels(buf)) out.push_back({id, {}, c});
  return out;
}

void run_eval(const Opts& o) {
  const auto& e = o.eval;
  check_output(e.out);
  check_output(e.confusion);
  check_output(e.per_seed);
  if (!e.pred.empty() || !e.truth.empty()) {
    if (e.pred.empty() || e.truth.empty()) throw UsageError("[rsft eval] error: --pred and --truth go together");
    auto cls = load_scored(e.pred);
    auto truth = load_labels(e.truth);
    auto report = evaluate(cls, truth);
    for (const auto& w : report.f.warnings) note("eval: warning: " + w);
    write_file(e.out, [&](std::ostream& out) { write_metrics(out, report.f); });
    if (!e.confusion.empty()) {
      write_file(e.confusion, [&](std::ostream& out) { write_confusion(out, report.confusion); });
    }
    return;
  }
  ProtocolConfig cfg;
  if (e.seeds < 1) throw UsageError("[rsft eval] error: --seeds must be >= 1");
  cfg.seeds.clear();
  for (int i = 0; i < e.seeds; ++i) cfg.seeds.push_back(o.seed + i);
  cfg.n_labeled = e.labeled;
  cfg.models.clear();
  for (const auto& m : e.models) cfg.models.push_back(parse_model_or_throw(m));
  cfg.train_pool_per_class = e.pool_per_class;
  cfg.test_per_class = e.test_per_class;
  cfg.unlabeled_per_class = e.unlabeled_per_class;
  cfg.noise = e.noise;
  cfg.length = e.length;
  cfg.gan_length = e.gan_length;
  cfg.ff.epochs = e.ff_epochs;
  cfg.m1.epochs = e.m1_epochs;
  cfg.m2.epochs = e.m2_epochs;
  cfg.gan.epochs = e.gan_epochs;
  for (int n : cfg.n_labeled) {
    if (n < 1 || n > kNumClasses * cfg.train_pool_per_class) {
      throw UsageError("[rsft eval] error: --labeled values must lie in [1, 4 * pool-per-class]");
    }
  }
  for (const auto* tc : {&cfg.ff, &cfg.m1, &cfg.m2, &cfg.gan}) tc->validate();
  auto result = run_protocol(cfg, note);
  write_file(e.out, [&](std::ostream& out) { write_protocol_table(out, result, cfg); });
  if (!e.per_seed.empty()) {
    write_file(e.per_seed, [&](std::ostream& out) {
      out << "N\tmodel\tseed\tmacro_f\n";
      for (const auto& c : result.cells) {
        for (std::size_t i = 0; i < c.per_seed.size(); ++i) {
          out << c.n << '\t' << to_string(c.model) << '\t' << cfg.seeds[i] << '\t' << format_real(c.per_seed[i])
              << '\n';
        }
      }
    });
  }
}

void run_pr_curve(const Opts& o) {
  const auto& p = o.pr;
  check_output(p.out);
  auto cls = load_scored(p.pred);
  auto truth = load_labels(p.truth);
  auto report = evaluate(cls, truth);
  if (report.pr.empty()) throw DataError("[rsft pr-curve] error: predictions carry no class scores");
  PRCurve curve;
  if (p.cls == "mean") {
    curve = report.mean_pr;
  } else {
    auto c = to_index(parse_class_or_throw(p.cls));
    std::vector<int> t;
    std::vector<double> scores;
    std::map<std::string, const Classification*> by_id;
    for (const auto& x : cls) by_id[x.read_id] = &x;
    for (const auto& [id, label] : truth) {
      t.push_back(to_index(label));
      const auto& s = by_id.at(id)->scores;
      scores.insert(scores.end(), s.begin(), s.end());
    }
    curve = pr_curve_for_class(scores, t, c, kNumClasses);
  }
  write_file(p.out, [&](std::ostream& out) { write_pr_curve(out, curve); });
  std::cout << "auc\t" << format_real(pr_auc(curve)) << '\n';
}

void run_tsne(const Opts& o) {
  const auto& t = o.tsne;
  check_output(t.out);
  std::vector<std::string> ids;
  nn::Tensor features;
  if (!t.features.empty()) {
    if (!t.checkpoint.empty()) throw UsageError("[rsft tsne] error: give --features or --checkpoint, not both");
    auto rows = load_signals(t.features);
    if (rows.empty()) throw DataError("[rsft tsne] error: feature file is empty");
    const int d = static_cast<int>(rows[0].values.size());
    features = nn::Tensor({static_cast<int>(rows.size()), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ids.push_back(rows[i].read_id);
      for (int k = 0; k < d; ++k) features[i * d + k] = rows[i].values[k];
    }
  } else {
    if (t.checkpoint.empty() || t.signals.empty()) {
      throw UsageError("[rsft tsne] error: need --features, or --checkpoint with --signals");
    }
    auto ck = nn::load_checkpoint(t.checkpoint);
    auto signals = load_signals(t.signals);
    for (const auto& s : signals) ids.push_back(s.read_id);
    features = extract_features(ck, signals);
  }
  EmbedConfig cfg;
  cfg.perplexity = t.perplexity;
  cfg.iterations = t.iterations;
  cfg.learning_rate = t.learning_rate;
  cfg.seed = o.seed;
  auto emb = tsne(features, cfg);
  LabelMap labels;
  if (!t.labels.empty()) labels = load_labels(t.labels);
  write_file(t.out, [&](std::ostream& out) { write_embedding(out, emb, ids, labels); });
  note("tsne: final objective " + format_real(emb.objective.back()));
}

void run_filter(const Opts& o) {
  const auto& f = o.filter;
  for (const auto* p : {&f.out, &f.blacklist, &f.report, &f.read_lengths}) check_output(*p);
  auto paf = load_paf(f.paf);
  auto labels = load_predictions(f.pred);
  auto res = filter_overlaps(paf.records, labels);
  write_file(f.out, [&](std::ostream& out) { write_paf(out, res.kept); });
  if (!f.blacklist.empty()) {
    write_file(f.blacklist, [&](std::ostream& out) { write_blacklist(out, res.blacklist); });
  }
  if (!f.report.empty()) {
    write_file(f.report, [&](std::ostream& out) { write_filter_report(out, res.report); });
  } else {
    write_filter_report(std::cerr, res.report);
  }
  if (!f.read_lengths.empty()) {
    std::set<std::string> kept_reads;
    for (const auto& r : res.kept) {
      kept_reads.insert(r.qname);
      kept_reads.insert(r.tname);
    }
    write_file(f.read_lengths, [&](std::ostream& out) {
      for (const auto& id : kept_reads) out << paf.reads.at(id) << '\n';
    });
  }
  if (!res.report.unclassified.empty()) {
    note("filter: warning: " + std::to_string(res.report.unclassified.size()) +
         " reads had no classification and were kept as regular");
  }
}

void run_stats(const Opts& o) {
  auto in = open_in(o.stats.contigs);
  auto lengths = read_contig_lengths(in);
  if (o.stats.genome_length <= 0) throw UsageError("[rsft stats] error: --genome-length must be positive");
  auto s = ng50(lengths, o.stats.genome_length);
  std::cout << s.n_contigs << '\t' << (s.ng50 ? std::to_string(*s.ng50) : std::string("NA")) << '\n';
}

void run_plot(const Opts& o) {
  const auto& p = o.plot;
  check_output(p.out);
  svg::ChartOptions opt;
  opt.width = p.width;
  opt.height = p.height;
  opt.title = p.title;
  std::string doc;
  if (p.kind == "coverage") {
    std::vector<svg::Series> series;
    std::set<std::string> want(p.reads.begin(), p.reads.end());
    for (const auto& path : p.input) {
      for (auto& s : load_signals(path)) {
        if (want.empty() ? series.size() >= 4 : !want.count(s.read_id)) continue;
        svg::Series line{s.read_id, {}, std::move(s.values), {}};
        for (std::size_t i = 0; i < line.y.size(); ++i) line.x.push_back(static_cast<double>(i));
        series.push_back(std::move(line));
      }
    }
    if (series.empty()) throw UsageError("[rsft plot] error: no coverage rows selected");
    opt.x_label = "position";
    opt.y_label = "coverage";
    doc = svg::line_chart(series, opt);
  } else if (p.kind == "pr") {
    std::vector<svg::Series> series;
    for (const auto& path : p.input) {
      auto in = open_in(path);
      auto curve = read_pr_curve(in);
      if (curve.points.empty()) throw UsageError("[rsft plot] error: empty PR curve in " + path);
      svg::Series line{std::filesystem::path(path).stem().string(), {}, {}, {}};
      for (const auto& pt : curve.points) {
        line.x.push_back(pt.recall);
        line.y.push_back(pt.precision);
      }
      series.push_back(std::move(line));
    }
    opt.x_label = "recall";
    opt.y_label = "precision";
    opt.x_min = opt.y_min = 0.0;
    opt.x_max = opt.y_max = 1.0;
    doc = svg::line_chart(series, opt);
  } else if (p.kind == "tsne") {
    std::vector<EmbeddedPoint> pts;
    for (const auto& path : p.input) {
      auto in = open_in(path);
      auto more = read_embedding(in);
      pts.insert(pts.end(), more.begin(), more.end());
    }
    if (pts.empty()) throw UsageError("[rsft plot] error: empty embedding");
    std::vector<svg::Series> series;
    for (auto c : kAllClasses) {
      svg::Series s{to_string(c), {}, {}, svg::class_color(c)};
      for (const auto& pt : pts) {
        if (pt.label == c) {
          s.x.push_back(pt.x);
          s.y.push_back(pt.y);
        }
      }
      if (!s.x.empty()) series.push_back(std::move(s));
    }
    svg::Series unknown{"unlabeled", {}, {}, "gray"};
    for (const auto& pt : pts) {
      if (!pt.label) {
        unknown.x.push_back(pt.x);
        unknown.y.push_back(pt.y);
      }
    }
    if (!unknown.x.empty()) series.push_back(std::move(unknown));
    doc = svg::scatter_chart(series, opt);
  } else {
    throw UsageError("[rsft plot] error: --kind must be coverage, pr or tsne");
  }
  write_file(p.out, [&](std::ostream& out) { out << doc; });
}

// -- option wiring ----------------------------------------------------------------

struct Cli {
  std::unique_ptr<CLI::App> app;
  std::map<std::string, std::function<void(const Opts&)>> runners;
};

template <class T>
CLI::Option* auto_opt(CLI::App* sub, const std::string& name, Auto<T>& slot, const std::string& help) {
  return sub->add_option(name, slot, help + " (default: model-dependent)")->default_str("auto");
}

Cli make_cli(Opts& o) {
  Cli cli;
  cli.app = std::make_unique<CLI::App>("Classify long reads from their coverage graphs", "rsft");
  auto& app = *cli.app;
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", o.seed, "Seed for every random choice (env RSFT_SEED)")->envname("RSFT_SEED");
  app.add_option("--config", o.config, "key=value file; flags on the command line win")
      ->check(CLI::ExistingFile);

  auto sub = [&](const std::string& name, const std::string& help, std::function<void(const Opts&)> fn) {
    cli.runners[name] = std::move(fn);
    return app.add_subcommand(name, help);
  };
  auto in_file = CLI::ExistingFile;

  auto* c = sub("coverage", "PAF overlaps -> per-read coverage graphs", run_coverage);
  c->add_option("--paf", o.coverage.paf, "Input PAF")->required()->check(in_file);
  c->add_option("--out", o.coverage.out, "Output coverage TSV")->required();
  c->add_option("--min-mapq", o.coverage.min_mapq, "Ignore records below this mapping quality");

  auto* p = sub("prep", "Coverage graphs -> fixed-length normalized signals", run_prep);
  p->add_option("--coverage", o.prep.coverage, "Input coverage TSV")->required()->check(in_file);
  p->add_option("--out", o.prep.out, "Output signal TSV")->required();
  p->add_option("--length", o.prep.length, "Signal length L");
  p->add_option("--rejected", o.prep.rejected, "Write excluded reads and the reason");

  auto* h = sub("heuristic", "Rule-based labels for signals", run_heuristic);
  h->add_option("--signals", o.heuristic.signals, "Input signal TSV")->required()->check(in_file);
  h->add_option("--out", o.heuristic.out, "Output label TSV")->required();
  h->add_option("--smooth-window", o.heuristic.params.smooth_window, "Moving-average window, fraction of L");
  h->add_option("--edge-margin", o.heuristic.params.edge_margin, "Ignored margin at each end, fraction of L");
  h->add_option("--drop-ratio", o.heuristic.params.drop_ratio, "Interior minimum / median below this = chimeric");
  h->add_option("--repeat-ratio", o.heuristic.params.repeat_ratio, "Side mean ratio above this = repeat");
  h->add_option("--side-fraction", o.heuristic.params.side_fraction, "Width of each compared side, fraction of L");
  h->add_option("--min-flank", o.heuristic.params.min_flank, "Minimum flank level around a chimeric dip");
  h->add_option("--pool-out", o.heuristic.pool_out, "Also write a class-balanced signal pool");
  h->add_option("--per-class", o.heuristic.per_class, "Pool size per heuristic class");

  auto* s = sub("synth", "Synthetic signals or a synthetic overlap set", run_synth);
  s->add_option("--kind", o.synth.kind, "signals or pipeline")->check(CLI::IsMember({"signals", "pipeline"}));
  s->add_option("--out", o.synth.out, "Output prefix");
  s->add_option("--classes", o.synth.classes, "Number of classes (must be 4)");
  s->add_option("--per-class", o.synth.per_class, "Signals per class");
  s->add_option("--length", o.synth.length, "Signal length");
  s->add_option("--noise", o.synth.noise, "Gaussian noise sigma");
  s->add_option("--genome-length", o.synth.genome_length, "Pipeline: genome length");
  s->add_option("--reads", o.synth.reads, "Pipeline: number of reads");
  s->add_option("--min-read-length", o.synth.min_read_length, "Pipeline: shortest read");
  s->add_option("--max-read-length", o.synth.max_read_length, "Pipeline: longest read");
  s->add_option("--chimera-rate", o.synth.chimera_rate, "Pipeline: chimeric read fraction");
  s->add_option("--repeat-length", o.synth.repeat_length, "Pipeline: repeat length (0 = none)");
  s->add_option("--repeat-first", o.synth.repeat_first, "Pipeline: first repeat copy start");
  s->add_option("--repeat-second", o.synth.repeat_second, "Pipeline: second repeat copy start");
  s->add_option("--min-overlap", o.synth.min_overlap, "Pipeline: shortest reported overlap");

  auto* t = sub("train", "Train a classifier; unlabeled signals feed the semi-supervised models", run_train);
  t->add_option("--model", o.train.model, "ff, m1m2 or semigan")->check(CLI::IsMember({"ff", "m1m2", "semigan"}));
  t->add_option("--signals", o.train.signals, "Signal TSV (labeled and unlabeled)")->required()->check(in_file);
  t->add_option("--labels", o.train.labels, "Label TSV for the labeled subset")->required()->check(in_file);
  t->add_option("--out", o.train.out, "Output checkpoint")->required();
  t->add_option("--log", o.train.log, "Write the per-epoch log here");
  t->add_option("--labeled", o.train.labeled, "Keep a stratified subset of N labels (0 = all)");
  auto_opt(t, "--epochs", o.train.epochs, "Epochs (M2 epochs for m1m2)");
  auto_opt(t, "--m1-epochs", o.train.m1_epochs, "M1 epochs for m1m2");
  auto_opt(t, "--model-length", o.train.model_length, "Model input length");
  auto_opt(t, "--lr", o.train.lr, "Adam learning rate");
  auto_opt(t, "--beta1", o.train.beta1, "Adam beta1");
  t->add_option("--batch-size", o.train.batch_size, "Minibatch size");
  t->add_option("--validation-fraction", o.train.validation_fraction, "Labeled share held out for model selection");

  auto* k = sub("classify", "Score signals with a checkpoint", run_classify);
  k->add_option("--checkpoint", o.classify.checkpoint, "Trained checkpoint")->required()->check(in_file);
  k->add_option("--signals", o.classify.signals, "Signal TSV")->required()->check(in_file);
  k->add_option("--out", o.classify.out, "Output classification TSV")->required();

  auto* e = sub("eval", "Metrics of predictions, or the labeled-subset comparison on synthetic data", run_eval);
  e->add_option("--pred", o.eval.pred, "Classification or label TSV")->check(in_file);
  e->add_option("--truth", o.eval.truth, "Reference label TSV")->check(in_file);
  e->add_option("--out", o.eval.out, "Metrics or comparison table ('-' = stdout)");
  e->add_option("--confusion", o.eval.confusion, "Write the confusion matrix here");
  e->add_option("--models", o.eval.models, "Models to compare")->delimiter(',');
  e->add_option("--labeled", o.eval.labeled, "Labeled subset sizes")->delimiter(',');
  e->add_option("--seeds", o.eval.seeds, "Number of seeds, starting at --seed");
  e->add_option("--per-seed", o.eval.per_seed, "Write every per-seed score here");
  e->add_option("--pool-per-class", o.eval.pool_per_class, "Labeled pool per class");
  e->add_option("--test-per-class", o.eval.test_per_class, "Test signals per class");
  e->add_option("--unlabeled-per-class", o.eval.unlabeled_per_class, "Unlabeled signals per class");
  e->add_option("--noise", o.eval.noise, "Synthetic noise sigma");
  e->add_option("--length", o.eval.length, "Signal length for ff and m1m2");
  e->add_option("--gan-length", o.eval.gan_length, "Signal length for semigan");
  e->add_option("--ff-epochs", o.eval.ff_epochs, "FF epochs");
  e->add_option("--m1-epochs", o.eval.m1_epochs, "M1 epochs");
  e->add_option("--m2-epochs", o.eval.m2_epochs, "M2 epochs");
  e->add_option("--gan-epochs", o.eval.gan_epochs, "Semi-GAN epochs");

  auto* r = sub("pr-curve", "Precision-recall curve of scored predictions", run_pr_curve);
  r->add_option("--pred", o.pr.pred, "Classification TSV")->required()->check(in_file);
  r->add_option("--truth", o.pr.truth, "Reference label TSV")->required()->check(in_file);
  r->add_option("--out", o.pr.out, "Output curve TSV")->required();
  r->add_option("--class", o.pr.cls, "Class name, or mean for the class-averaged curve");

  auto* z = sub("tsne", "2-D embedding of latent features", run_tsne);
  z->add_option("--checkpoint", o.tsne.checkpoint, "m1, m1m2 or semigan checkpoint")->check(in_file);
  z->add_option("--signals", o.tsne.signals, "Signals to embed")->check(in_file);
  z->add_option("--features", o.tsne.features, "Precomputed feature TSV")->check(in_file);
  z->add_option("--labels", o.tsne.labels, "Labels to attach to the points")->check(in_file);
  z->add_option("--out", o.tsne.out, "Output embedding TSV")->required();
  z->add_option("--perplexity", o.tsne.perplexity, "t-SNE perplexity");
  z->add_option("--iterations", o.tsne.iterations, "Gradient steps");
  z->add_option("--learning-rate", o.tsne.learning_rate, "Step size");

  auto* f = sub("filter", "Drop overlaps of chimeric reads and left/right repeat pairs", run_filter);
  f->add_option("--paf", o.filter.paf, "Input PAF")->required()->check(in_file);
  f->add_option("--pred", o.filter.pred, "Classification or label TSV")->required()->check(in_file);
  f->add_option("--out", o.filter.out, "Output PAF")->required();
  f->add_option("--blacklist", o.filter.blacklist, "Write chimeric read ids here");
  f->add_option("--report", o.filter.report, "Write drop counts here (default stderr)");
  f->add_option("--read-lengths", o.filter.read_lengths, "Write lengths of reads left in the overlaps");

  auto* st = sub("stats", "Contig count and NG50", run_stats);
  st->add_option("--contigs", o.stats.contigs, "FASTA or one length per line")->required()->check(in_file);
  st->add_option("--genome-length", o.stats.genome_length, "Reference genome length")->required();

  auto* pl = sub("plot", "SVG figures", run_plot);
  pl->add_option("--kind", o.plot.kind, "coverage, pr or tsne")->required()->check(
      CLI::IsMember({"coverage", "pr", "tsne"}));
  pl->add_option("--input", o.plot.input, "Input file(s)")->required()->check(in_file);
  pl->add_option("--out", o.plot.out, "Output SVG")->required();
  pl->add_option("--title", o.plot.title, "Chart title");
  pl->add_option("--reads", o.plot.reads, "Coverage: read ids to draw (default first 4)")->delimiter(',');
  pl->add_option("--width", o.plot.width, "Width in pixels");
  pl->add_option("--height", o.plot.height, "Height in pixels");
  return cli;
}

CLI::App* active(CLI::App& app) {
  auto subs = app.get_subcommands();
  return subs.empty() ? nullptr : subs.front();
}

std::string trim(std::string s) {
  auto ws = [](unsigned char ch) { return std::isspace(ch) != 0; };
  while (!s.empty() && ws(s.back())) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && ws(s[i])) ++i;
  return s.substr(i);
}

// Turns config entries the command line did not set into extra arguments.
std::vector<std::string> config_args(const std::string& path, CLI::App& app) {
  auto* sub = active(app);
  auto in = open_in(path);
  std::vector<std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("[rsft] error: " + path + " line " + std::to_string(line_no) + ": expected key=value");
    }
    auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "config") throw UsageError("[rsft] error: config files cannot include other config files");
    CLI::Option* opt = sub ? sub->get_option_no_throw("--" + key) : nullptr;
    if (!opt) opt = app.get_option_no_throw("--" + key);
    if (!opt) throw UsageError("[rsft] error: " + path + " line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (value.empty() || value == "auto" || opt->count() > 0) continue;
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

std::string joined(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

void print_config(CLI::App& app, const Opts& o) {
  auto* sub = active(app);
  std::cerr << "# rsft " << sub->get_name() << "\n";
  std::cerr << "seed=" << o.seed << "\n";
  for (const auto* opt : sub->get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames()[0] == "help") continue;
    std::string value = opt->count() > 0 ? joined(opt->results()) : opt->get_default_str();
    if (!value.empty() && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    std::cerr << opt->get_lnames()[0] << "=" << value << "\n";
  }
}

int parse(Cli& cli, std::vector<std::string> args) {
  std::reverse(args.begin(), args.end());
  try {
    cli.app->parse(args);
  } catch (const CLI::CallForHelp& e) {
    return cli.app->exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.app->exit(e);
  } catch (const CLI::ParseError& e) {
    cli.app->exit(e);
    return 1;
  }
  return -1;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    Opts first;
    auto cli = make_cli(first);
    if (int rc = parse(cli, args); rc >= 0) return rc;
    Opts o;
    auto final_cli = make_cli(o);
    if (!first.config.empty()) {
      auto extra = config_args(first.config, *cli.app);
      args.insert(args.end(), extra.begin(), extra.end());
    }
    if (int rc = parse(final_cli, args); rc >= 0) return rc;
    auto* sub = active(*final_cli.app);
    print_config(*final_cli.app, o);
    final_cli.runners.at(sub->get_name())(o);
    return 0;
  } catch (const UsageError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
}
