#ifndef RSFT_COVERAGE_HPP_
#define RSFT_COVERAGE_HPP_

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rsft/overlap_io.hpp"

namespace rsft {

/// Per-base overlap depth of one read.
struct CoverageGraph {
  std::string read_id;
  std::vector<std::int32_t> depth;

  friend bool operator==(const CoverageGraph&, const CoverageGraph&) = default;
};

using CoverageMap = std::map<std::string, CoverageGraph>;

namespace detail {

inline CoverageMap empty_coverage(const ReadTable& reads) {
  CoverageMap out;
  for (const auto& [name, length] : reads) {
    out.emplace(name, CoverageGraph{name, std::vector<std::int32_t>(length, 0)});
  }
  return out;
}

inline void check_known(const ReadTable& reads, const OverlapRecord& r,
                        const char* caller) {
  auto q = reads.find(r.qname);
  auto t = reads.find(r.tname);
  if (q == reads.end() || t == reads.end()) {
    throw DataError(std::string("[rsft::") + caller + "] error: record references read '" +
                    (q == reads.end() ? r.qname : r.tname) + "' absent from read table");
  }
  if (q->second != r.qlen || t->second != r.tlen) {
    throw DataError(std::string("[rsft::") + caller + "] error: record " + r.qname + "/" +
                    r.tname + " disagrees with read table lengths");
  }
}

}  // namespace detail

/// Counts, for every base of every read, the non-self overlaps covering it.
/// Difference array plus prefix sum, linear in bases + records.
inline CoverageMap build_coverage(std::span<const OverlapRecord> records,
                                  const ReadTable& reads) {
  std::map<std::string, std::vector<std::int64_t>> diff;
  for (const auto& [name, length] : reads) {
    diff.emplace(name, std::vector<std::int64_t>(length + 1, 0));
  }
  for (const auto& r : records) {
    detail::check_known(reads, r, "build_coverage");
    if (r.is_self()) continue;
    auto& dq = diff.at(r.qname);
    ++dq[r.qstart];
    --dq[r.qend];
    auto& dt = diff.at(r.tname);
    ++dt[r.tstart];
    --dt[r.tend];
  }

  CoverageMap out;
  for (auto& [name, d] : diff) {
    CoverageGraph g{name, std::vector<std::int32_t>(d.size() - 1)};
    std::int64_t running = 0;
    for (std::size_t i = 0; i + 1 < d.size(); ++i) {
      running += d[i];
      g.depth[i] = static_cast<std::int32_t>(running);
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

/// Naive per-position counting, O(bases x records). Reference for tests.
inline CoverageMap coverage_oracle(std::span<const OverlapRecord> records,
                                   const ReadTable& reads) {
  auto out = detail::empty_coverage(reads);
  for (const auto& r : records) detail::check_known(reads, r, "coverage_oracle");
  for (auto& [name, g] : out) {
    for (std::size_t i = 0; i < g.depth.size(); ++i) {
      auto pos = static_cast<std::int64_t>(i);
      std::int32_t count = 0;
      for (const auto& r : records) {
        if (r.is_self()) continue;
        if (r.qname == name && r.qstart <= pos && pos < r.qend) ++count;
        if (r.tname == name && r.tstart <= pos && pos < r.tend) ++count;
      }
      g.depth[i] = count;
    }
  }
  return out;
}

/// "read_id<TAB>d0,d1,...,dn-1" per line.
inline void write_coverage(std::ostream& out, const CoverageMap& coverage) {
  for (const auto& [name, g] : coverage) {
    out << name << '\t';
    for (std::size_t i = 0; i < g.depth.size(); ++i) {
      if (i) out << ',';
      out << g.depth[i];
    }
    out << '\n';
  }
}

inline CoverageMap read_coverage(std::istream& in) {
  CoverageMap out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError("[rsft::read_coverage] error: line " + std::to_string(line_no) +
                      ": expected 'read_id<TAB>depths'");
    }
    CoverageGraph g{line.substr(0, tab), {}};
    std::string_view rest(line);
    rest.remove_prefix(tab + 1);
    while (!rest.empty()) {
      auto comma = rest.find(',');
      auto field = rest.substr(0, comma);
      std::int32_t v = 0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || v < 0) {
        throw DataError("[rsft::read_coverage] error: line " + std::to_string(line_no) +
                        ": invalid depth '" + std::string(field) + "'");
      }
      g.depth.push_back(v);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    auto name = g.read_id;
    if (!out.emplace(name, std::move(g)).second) {
      throw DataError("[rsft::read_coverage] error: duplicate read '" + name + "'");
    }
  }
  return out;
}

}  // namespace rsft

#endif  // RSFT_COVERAGE_HPP_
