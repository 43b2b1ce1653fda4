#ifndef RSFT_OVERLAP_IO_HPP_
#define RSFT_OVERLAP_IO_HPP_

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rsft/read_class.hpp"

namespace rsft {

/// One pairwise overlap, i.e. the 12 mandatory PAF columns. Coordinates are
/// 0-based half-open. Columns beyond the twelfth are dropped on parse.
struct OverlapRecord {
  std::string qname;
  std::int64_t qlen = 0;
  std::int64_t qstart = 0;
  std::int64_t qend = 0;
  char strand = '+';
  std::string tname;
  std::int64_t tlen = 0;
  std::int64_t tstart = 0;
  std::int64_t tend = 0;
  std::int64_t nmatch = 0;
  std::int64_t alnlen = 0;
  int mapq = 0;

  bool is_self() const { return qname == tname; }

  friend bool operator==(const OverlapRecord&, const OverlapRecord&) = default;
};

/// read-id -> length in bases; ordered so iteration is deterministic.
using ReadTable = std::map<std::string, std::int64_t>;

struct PafData {
  std::vector<OverlapRecord> records;
  ReadTable reads;
};

// Returns an empty string when the record is valid, otherwise the reason.
inline std::string check_record(const OverlapRecord& r) {
  if (r.qname.empty() || r.tname.empty()) return "empty read name";
  if (r.strand != '+' && r.strand != '-') return "strand must be '+' or '-'";
  if (!(0 <= r.qstart && r.qstart < r.qend && r.qend <= r.qlen)) {
    return "query coordinates out of range";
  }
  if (!(0 <= r.tstart && r.tstart < r.tend && r.tend <= r.tlen)) {
    return "target coordinates out of range";
  }
  if (r.mapq < 0 || r.mapq > 255) return "mapping quality out of range";
  if (r.nmatch < 0 || r.alnlen < 0 || r.nmatch > r.alnlen) {
    return "residue matches exceed alignment length";
  }
  return {};
}

namespace detail {

inline std::int64_t parse_int_field(std::string_view field, std::size_t line_no,
                                    const char* what) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw DataError("[rsft::parse_paf] error: line " + std::to_string(line_no) +
                    ": non-integer " + what + " '" + std::string(field) + "'");
  }
  return value;
}

inline void register_length(ReadTable& reads, const std::string& name,
                            std::int64_t length, std::size_t line_no) {
  auto [it, inserted] = reads.emplace(name, length);
  if (!inserted && it->second != length) {
    throw DataError("[rsft::parse_paf] error: line " + std::to_string(line_no) +
                    ": length conflict for read '" + name + "' (" +
                    std::to_string(it->second) + " vs " + std::to_string(length) + ")");
  }
}

}  // namespace detail

/// Parses PAF text. Blank lines are skipped; every other line must carry at
/// least 12 tab-separated fields.
inline PafData parse_paf(std::istream& in) {
  PafData out;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    fields.clear();
    std::string_view rest(line);
    while (fields.size() < 13) {
      auto tab = rest.find('\t');
      fields.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (fields.size() < 12) {
      throw DataError("[rsft::parse_paf] error: line " + std::to_string(line_no) +
                      ": expected at least 12 fields, found " +
                      std::to_string(fields.size()));
    }

    OverlapRecord r;
    r.qname = std::string(fields[0]);
    r.qlen = detail::parse_int_field(fields[1], line_no, "query length");
    r.qstart = detail::parse_int_field(fields[2], line_no, "query start");
    r.qend = detail::parse_int_field(fields[3], line_no, "query end");
    if (fields[4].size() != 1) {
      throw DataError("[rsft::parse_paf] error: line " + std::to_string(line_no) +
                      ": invalid strand '" + std::string(fields[4]) + "'");
    }
    r.strand = fields[4][0];
    r.tname = std::string(fields[5]);
    r.tlen = detail::parse_int_field(fields[6], line_no, "target length");
    r.tstart = detail::parse_int_field(fields[7], line_no, "target start");
    r.tend = detail::parse_int_field(fields[8], line_no, "target end");
    r.nmatch = detail::parse_int_field(fields[9], line_no, "residue matches");
    r.alnlen = detail::parse_int_field(fields[10], line_no, "alignment length");
    r.mapq = static_cast<int>(detail::parse_int_field(fields[11], line_no, "mapping quality"));

    if (auto reason = check_record(r); !reason.empty()) {
      throw DataError("[rsft::parse_paf] error: line " + std::to_string(line_no) + ": " +
                      reason);
    }
    detail::register_length(out.reads, r.qname, r.qlen, line_no);
    detail::register_length(out.reads, r.tname, r.tlen, line_no);
    out.records.push_back(std::move(r));
  }
  return out;
}

inline void write_paf(std::ostream& out, std::span<const OverlapRecord> records) {
  for (const auto& r : records) {
    out << r.qname << '\t' << r.qlen << '\t' << r.qstart << '\t' << r.qend << '\t'
        << r.strand << '\t' << r.tname << '\t' << r.tlen << '\t' << r.tstart << '\t'
        << r.tend << '\t' << r.nmatch << '\t' << r.alnlen << '\t' << r.mapq << '\n';
  }
}

}  // namespace rsft

#endif  // RSFT_OVERLAP_IO_HPP_
