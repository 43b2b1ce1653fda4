#ifndef RSFT_SYNTH_GEN_HPP_
#define RSFT_SYNTH_GEN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsft/heuristic_labeler.hpp"
#include "rsft/overlap_io.hpp"
#include "rsft/read_class.hpp"
#include "rsft/signal_prep.hpp"
#include "rsft/tsv_io.hpp"

namespace rsft {

/// Shape parameters for synthetic coverage signals. Level-like quantities are
/// on the pre-normalization scale; widths and positions are fractions of the
/// signal length.
struct SynthConfig {
  int length = 500;
  ClassQuota per_class = {100, 100, 100, 100};
  double base_min = 0.3;
  double base_max = 0.8;
  double notch_width_min = 0.02;
  double notch_width_max = 0.08;
  double notch_depth_max = 0.1;
  double boost_min = 2.0;
  double boost_max = 4.0;
  double boundary_min = 0.35;
  double boundary_max = 0.65;
  double noise = 0.03;
  double taper = 0.05;       // linear ramp over the outer 5% on each end
  double wiggle_max = 0.04;  // relative amplitude of the slow base undulation
  std::uint64_t seed = 1;
  std::string id_prefix = "synth";

  void validate() const {
    auto ordered = [](double a, double b) { return a <= b; };
    if (length < 4) throw std::invalid_argument("[rsft::SynthConfig] error: length < 4");
    if (!ordered(base_min, base_max) || base_min <= 0.0 ||
        !ordered(notch_width_min, notch_width_max) || notch_width_min <= 0.0 ||
        !ordered(boost_min, boost_max) || boost_min < 1.0 ||
        !ordered(boundary_min, boundary_max) || boundary_min <= 0.0 || boundary_max >= 1.0 ||
        notch_depth_max < 0.0 || notch_depth_max >= 1.0) {
      throw std::invalid_argument("[rsft::SynthConfig] error: ranges must be well-ordered");
    }
    if (noise < 0.0) throw std::invalid_argument("[rsft::SynthConfig] error: noise < 0");
    for (int q : per_class) {
      if (q < 0) throw std::invalid_argument("[rsft::SynthConfig] error: negative class count");
    }
  }
};

struct LabeledSignals {
  std::vector<Signal> signals;
  std::vector<ReadClass> labels;
};

namespace detail {

inline std::mt19937_64 item_rng(std::uint64_t seed, std::uint64_t index, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    stream};
  return std::mt19937_64(seq);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::vector<double> regular_shape(const SynthConfig& cfg, std::mt19937_64& rng) {
  const int n = cfg.length;
  const double base = uniform(rng, cfg.base_min, cfg.base_max);
  const double amp = uniform(rng, 0.0, cfg.wiggle_max);
  const double freq = uniform(rng, 0.5, 1.5);
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double ramp = std::max(1.0, cfg.taper * n);
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) {
    double edge = std::min(1.0, (std::min(i, n - 1 - i) + 1) / ramp);
    v[i] = base * (1.0 + amp * std::sin(2.0 * std::numbers::pi * freq * i / n + phase)) *
           (0.5 + 0.5 * edge);
  }
  return v;
}

inline std::vector<double> shape_for(ReadClass c, const SynthConfig& cfg, std::mt19937_64& rng) {
  const int n = cfg.length;
  auto v = regular_shape(cfg, rng);
  switch (c) {
    case ReadClass::kRegular:
      break;
    case ReadClass::kChimeric: {
      int width = std::max(1, static_cast<int>(std::lround(
                                  uniform(rng, cfg.notch_width_min, cfg.notch_width_max) * n)));
      double center = uniform(rng, 0.2, 0.8) * n;
      int start = std::clamp(static_cast<int>(std::lround(center - width / 2.0)), 1,
                             std::max(1, n - width - 1));
      double depth = uniform(rng, 0.0, cfg.notch_depth_max);
      for (int i = start; i < std::min(n, start + width); ++i) v[i] *= depth;
      break;
    }
    case ReadClass::kRightRepeat:
    case ReadClass::kLeftRepeat: {
      int boundary = static_cast<int>(std::lround(uniform(rng, cfg.boundary_min, cfg.boundary_max) * n));
      double boost = uniform(rng, cfg.boost_min, cfg.boost_max);
      for (int i = boundary; i < n; ++i) v[i] *= boost;
      if (c == ReadClass::kLeftRepeat) std::reverse(v.begin(), v.end());
      break;
    }
  }
  return v;
}

}  // namespace detail

/// Labeled synthetic signals carrying the class signatures of real coverage
/// graphs. Class order is a seeded shuffle; item i draws from its own stream
/// so generation is reproducible item by item.
inline LabeledSignals synth_signals(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<ReadClass> classes;
  for (int c = 0; c < kNumClasses; ++c) {
    classes.insert(classes.end(), cfg.per_class[c], class_from_index(c));
  }
  std::mt19937_64 order_rng(cfg.seed);
  std::shuffle(classes.begin(), classes.end(), order_rng);

  LabeledSignals out;
  out.signals.reserve(classes.size());
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto rng = detail::item_rng(cfg.seed, i, 1);
    auto v = detail::shape_for(classes[i], cfg, rng);
    if (cfg.noise > 0.0) {
      std::normal_distribution<double> noise(0.0, cfg.noise);
      for (auto& x : v) x = std::max(0.0, x + noise(rng));
    }
    char id[64];
    std::snprintf(id, sizeof(id), "%s_%06zu", cfg.id_prefix.c_str(), i);
    out.signals.push_back(Signal{id, normalize(v)});
    out.labels.push_back(classes[i]);
  }
  return out;
}

/// A segment duplicated at two genome loci.
struct RepeatSpec {
  std::int64_t length = 0;
  std::int64_t first = 0;
  std::int64_t second = 0;
};

struct PipelineConfig {
  std::int64_t genome_length = 200000;
  int n_reads = 600;
  std::int64_t min_read_length = 4000;
  std::int64_t max_read_length = 8000;
  double chimera_rate = 0.05;
  std::optional<RepeatSpec> repeat;
  std::int64_t min_overlap = 500;
  // Direct overlaps must reach a read end on both sides within this slack.
  std::int64_t max_overhang = 0;
  // Share of a read inside a repeat copy needed for a repeat label.
  double repeat_min_fraction = 0.2;
  std::uint64_t seed = 1;
};

struct ReadPiece {
  std::int64_t genome_start = 0;
  std::int64_t genome_end = 0;
  std::int64_t read_offset = 0;
};

struct SynthRead {
  std::string name;
  std::int64_t length = 0;
  std::vector<ReadPiece> pieces;
  ReadClass label = ReadClass::kRegular;
};

struct PipelineData {
  std::vector<SynthRead> reads;
  ReadTable table;
  std::vector<OverlapRecord> records;
  LabelMap labels;
};

namespace detail {

struct Interval {
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::int64_t length() const { return end - start; }
};

inline Interval intersect(Interval a, Interval b) {
  return {std::max(a.start, b.start), std::min(a.end, b.end)};
}

inline OverlapRecord make_record(const SynthRead& a, const ReadPiece& pa, Interval ga,
                                 const SynthRead& b, const ReadPiece& pb, Interval gb) {
  OverlapRecord r;
  r.qname = a.name;
  r.qlen = a.length;
  r.qstart = pa.read_offset + (ga.start - pa.genome_start);
  r.qend = r.qstart + ga.length();
  r.strand = '+';
  r.tname = b.name;
  r.tlen = b.length;
  r.tstart = pb.read_offset + (gb.start - pb.genome_start);
  r.tend = r.tstart + gb.length();
  r.nmatch = ga.length();
  r.alnlen = ga.length();
  r.mapq = 60;
  return r;
}

inline std::int64_t overhang(const OverlapRecord& r) {
  return std::min(r.qstart, r.tstart) + std::min(r.qlen - r.qend, r.tlen - r.tend);
}

inline ReadClass label_read(const SynthRead& read, const PipelineConfig& cfg) {
  if (read.pieces.size() > 1) return ReadClass::kChimeric;
  if (!cfg.repeat) return ReadClass::kRegular;
  const auto& piece = read.pieces.front();
  const double need = cfg.repeat_min_fraction * static_cast<double>(read.length);
  for (auto copy_start : {cfg.repeat->first, cfg.repeat->second}) {
    const auto copy_end = copy_start + cfg.repeat->length;
    // read's right end inside the copy, left end outside
    if (piece.genome_start < copy_start && copy_start < piece.genome_end &&
        piece.genome_end <= copy_end &&
        static_cast<double>(piece.genome_end - copy_start) >= need) {
      return ReadClass::kRightRepeat;
    }
    if (copy_start <= piece.genome_start && piece.genome_start < copy_end &&
        copy_end < piece.genome_end &&
        static_cast<double>(copy_end - piece.genome_start) >= need) {
      return ReadClass::kLeftRepeat;
    }
  }
  return ReadClass::kRegular;
}

}  // namespace detail

/// Samples reads from a linear genome and emits every overlap implied by
/// their true coordinates.
///
/// Direct overlaps (same locus) are kept when the shared interval is at least
/// min_overlap long and reaches a read end on both sides (up to max_overhang).
/// A fused read disagrees with the genome past its junction, so overlaps
/// running across a junction are rejected; this is what carves the coverage
/// dip of chimeric reads. Cross-copy repeat hits are local alignments and only
/// need min_overlap, which lifts the coverage on the repeat side of a read.
inline PipelineData synth_pipeline(const PipelineConfig& cfg) {
  const auto g = cfg.genome_length;
  if (g <= 0 || cfg.n_reads < 0 || cfg.min_read_length < 1 ||
      cfg.min_read_length > cfg.max_read_length) {
    throw std::invalid_argument("[rsft::synth_pipeline] error: invalid read parameters");
  }
  if (cfg.max_read_length > g) {
    throw std::invalid_argument("[rsft::synth_pipeline] error: reads longer than genome");
  }
  if (cfg.chimera_rate < 0.0 || cfg.chimera_rate > 1.0) {
    throw std::invalid_argument("[rsft::synth_pipeline] error: chimera_rate outside [0, 1]");
  }
  if (cfg.repeat) {
    const auto& r = *cfg.repeat;
    if (r.length <= 0 || r.first < 0 || r.second < 0 || r.first + r.length > g ||
        r.second + r.length > g ||
        !(r.first + r.length <= r.second || r.second + r.length <= r.first)) {
      throw std::invalid_argument(
          "[rsft::synth_pipeline] error: repeat copies must be disjoint and inside the genome");
    }
  }

  PipelineData out;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::int64_t min_gap = g / 10;

  for (int i = 0; i < cfg.n_reads; ++i) {
    SynthRead read;
    char name[32];
    std::snprintf(name, sizeof(name), "read_%06d", i);
    read.name = name;
    read.length = std::uniform_int_distribution<std::int64_t>(cfg.min_read_length,
                                                              cfg.max_read_length)(rng);
    bool chimeric = read.length >= 2 && unit(rng) < cfg.chimera_rate;
    if (chimeric) {
      auto len_a = std::clamp<std::int64_t>(std::llround((0.3 + 0.4 * unit(rng)) * read.length), 1,
                                            read.length - 1);
      auto len_b = read.length - len_a;
      auto start_a = std::uniform_int_distribution<std::int64_t>(0, g - len_a)(rng);
      std::int64_t start_b = -1;
      for (int attempt = 0; attempt < 1000 && start_b < 0; ++attempt) {
        auto candidate = std::uniform_int_distribution<std::int64_t>(0, g - len_b)(rng);
        if (candidate >= start_a + len_a + min_gap || candidate + len_b + min_gap <= start_a) {
          start_b = candidate;
        }
      }
      if (start_b < 0) {
        throw std::invalid_argument(
            "[rsft::synth_pipeline] error: genome too short to place chimeric pieces");
      }
      read.pieces = {{start_a, start_a + len_a, 0}, {start_b, start_b + len_b, len_a}};
    } else {
      auto start = std::uniform_int_distribution<std::int64_t>(0, g - read.length)(rng);
      read.pieces = {{start, start + read.length, 0}};
    }
    read.label = detail::label_read(read, cfg);
    out.table.emplace(read.name, read.length);
    out.labels.emplace(read.name, read.label);
    out.reads.push_back(std::move(read));
  }

  using detail::Interval;
  for (std::size_t a = 0; a < out.reads.size(); ++a) {
    for (std::size_t b = a + 1; b < out.reads.size(); ++b) {
      const auto& ra = out.reads[a];
      const auto& rb = out.reads[b];
      for (const auto& pa : ra.pieces) {
        for (const auto& pb : rb.pieces) {
          Interval ia{pa.genome_start, pa.genome_end};
          Interval ib{pb.genome_start, pb.genome_end};
          auto shared = detail::intersect(ia, ib);
          if (shared.length() >= cfg.min_overlap) {
            auto rec = detail::make_record(ra, pa, shared, rb, pb, shared);
            if (detail::overhang(rec) <= cfg.max_overhang) out.records.push_back(std::move(rec));
          }
          if (!cfg.repeat) continue;
          const auto& rep = *cfg.repeat;
          for (int dir = 0; dir < 2; ++dir) {
            Interval copy_a{dir == 0 ? rep.first : rep.second, 0};
            copy_a.end = copy_a.start + rep.length;
            Interval copy_b{dir == 0 ? rep.second : rep.first, 0};
            copy_b.end = copy_b.start + rep.length;
            const auto shift = copy_b.start - copy_a.start;
            auto in_a = detail::intersect(ia, copy_a);
            auto in_b = detail::intersect(ib, copy_b);
            if (in_a.length() <= 0 || in_b.length() <= 0) continue;
            auto hit = detail::intersect(in_a, {in_b.start - shift, in_b.end - shift});
            if (hit.length() < cfg.min_overlap) continue;
            out.records.push_back(detail::make_record(ra, pa, hit, rb, pb,
                                                      {hit.start + shift, hit.end + shift}));
          }
        }
      }
    }
  }
  return out;
}

}  // namespace rsft

#endif  // RSFT_SYNTH_GEN_HPP_
