#ifndef RSFT_ASSEMBLY_FILTER_HPP_
#define RSFT_ASSEMBLY_FILTER_HPP_

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsft/overlap_io.hpp"
#include "rsft/read_class.hpp"
#include "rsft/tsv_io.hpp"

namespace rsft {

struct FilterReport {
  std::int64_t reads_dropped = 0;
  std::int64_t overlaps_dropped_chimeric = 0;
  std::int64_t overlaps_dropped_repeat_pair = 0;
  std::int64_t overlaps_kept = 0;
  std::vector<std::string> unclassified;  // reads treated as regular

  std::int64_t total() const { return overlaps_dropped_chimeric + overlaps_dropped_repeat_pair + overlaps_kept; }
};

struct FilterResult {
  std::vector<OverlapRecord> kept;
  FilterReport report;
  std::vector<std::string> blacklist;  // reads classified chimeric, sorted
};

inline bool is_repeat_pair(ReadClass a, ReadClass b) {
  return (a == ReadClass::kLeftRepeat && b == ReadClass::kRightRepeat) ||
         (a == ReadClass::kRightRepeat && b == ReadClass::kLeftRepeat);
}

/// Drops every record touching a chimeric read, then every record joining a
/// left_repeat and a right_repeat read. Order of kept records is preserved.
/// Reads without a classification count as regular and are reported.
inline FilterResult filter_overlaps(std::span<const OverlapRecord> records, const LabelMap& labels) {
  FilterResult out;
  std::set<std::string> missing;
  auto class_of = [&](const std::string& id) {
    auto it = labels.find(id);
    if (it == labels.end()) {
      missing.insert(id);
      return ReadClass::kRegular;
    }
    return it->second;
  };
  std::set<std::string> chimeric_seen;
  for (const auto& r : records) {
    auto cq = class_of(r.qname);
    auto ct = class_of(r.tname);
    if (cq == ReadClass::kChimeric) chimeric_seen.insert(r.qname);
    if (ct == ReadClass::kChimeric) chimeric_seen.insert(r.tname);
    if (cq == ReadClass::kChimeric || ct == ReadClass::kChimeric) {
      ++out.report.overlaps_dropped_chimeric;
    } else if (is_repeat_pair(cq, ct)) {
      ++out.report.overlaps_dropped_repeat_pair;
    } else {
      out.kept.push_back(r);
    }
  }
  for (const auto& [id, cls] : labels) {
    if (cls == ReadClass::kChimeric) out.blacklist.push_back(id);
  }
  // Dropped reads are chimeric reads that occur in the overlap set.
  out.report.reads_dropped = static_cast<std::int64_t>(chimeric_seen.size());
  out.report.overlaps_kept = static_cast<std::int64_t>(out.kept.size());
  out.report.unclassified.assign(missing.begin(), missing.end());
  return out;
}

inline void write_filter_report(std::ostream& out, const FilterReport& r) {
  out << "reads_dropped\t" << r.reads_dropped << "\n"
      << "overlaps_dropped_chimeric\t" << r.overlaps_dropped_chimeric << "\n"
      << "overlaps_dropped_repeat_pair\t" << r.overlaps_dropped_repeat_pair << "\n"
      << "overlaps_kept\t" << r.overlaps_kept << "\n"
      << "unclassified_reads\t" << r.unclassified.size() << "\n";
}

inline void write_blacklist(std::ostream& out, std::span<const std::string> ids) {
  for (const auto& id : ids) out << id << '\n';
}

inline std::vector<std::string> read_blacklist(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

struct ContigStats {
  std::int64_t n_contigs = 0;
  std::optional<std::int64_t> ng50;  // empty when the contigs cover less than half the genome
};

/// Sort descending; NG50 is the length at which the running sum first
/// reaches half the genome length (2 * sum >= G, integer arithmetic).
inline ContigStats ng50(std::span<const std::int64_t> lengths, std::int64_t genome_length) {
  if (genome_length <= 0) throw std::invalid_argument("[rsft::ng50] error: genome length must be positive");
  for (auto l : lengths) {
    if (l <= 0) throw std::invalid_argument("[rsft::ng50] error: contig lengths must be positive");
  }
  std::vector<std::int64_t> sorted(lengths.begin(), lengths.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  ContigStats s;
  s.n_contigs = static_cast<std::int64_t>(sorted.size());
  std::int64_t cum = 0;
  for (auto l : sorted) {
    cum += l;
    if (2 * cum >= genome_length) {
      s.ng50 = l;
      break;
    }
  }
  return s;
}

/// Contig lengths from FASTA (sequence lengths) or one integer per line.
inline std::vector<std::int64_t> read_contig_lengths(std::istream& in) {
  std::vector<std::int64_t> out;
  std::string line;
  int line_no = 0;
  bool fasta = false, in_record = false;
  std::int64_t current = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && !line.empty() && line[0] == '>') fasta = true;
    if (fasta) {
      if (!line.empty() && line[0] == '>') {
        if (in_record) out.push_back(current);
        in_record = true;
        current = 0;
      } else {
        for (char c : line) {
          if (!std::isspace(static_cast<unsigned char>(c))) ++current;
        }
      }
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(line, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < line.size() && std::isspace(static_cast<unsigned char>(line[used]))) ++used;
    if (used != line.size() || v <= 0) {
      throw DataError("[rsft::read_contig_lengths] error: line " + std::to_string(line_no) +
                      ": expected a positive integer length");
    }
    out.push_back(v);
  }
  if (fasta && in_record) out.push_back(current);
  for (auto l : out) {
    if (l <= 0) throw DataError("[rsft::read_contig_lengths] error: empty FASTA record");
  }
  return out;
}

}  // namespace rsft

#endif  // RSFT_ASSEMBLY_FILTER_HPP_
