#ifndef RSFT_TSV_IO_HPP_
#define RSFT_TSV_IO_HPP_

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rsft/read_class.hpp"
#include "rsft/signal_prep.hpp"

namespace rsft {

using LabelMap = std::map<std::string, ReadClass>;

// Reals are written with 9 significant digits.
inline std::string format_real(double v) {
  char buf[32];
  int n = std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::string(buf, n);
}

inline double parse_real(std::string_view field, const std::string& context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty() ||
      !std::isfinite(v)) {
    throw DataError(context + ": invalid real '" + std::string(field) + "'");
  }
  return v;
}

inline std::vector<double> parse_real_list(std::string_view text, const std::string& context) {
  std::vector<double> out;
  while (!text.empty()) {
    auto comma = text.find(',');
    out.push_back(parse_real(text.substr(0, comma), context));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

inline void write_vector_row(std::ostream& out, const std::string& id,
                             std::span<const double> values) {
  out << id << '\t';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ',';
    out << format_real(values[i]);
  }
  out << '\n';
}

/// "read_id<TAB>v0,v1,...,vL-1"
inline void write_signals(std::ostream& out, std::span<const Signal> signals) {
  for (const auto& s : signals) write_vector_row(out, s.read_id, s.values);
}

/// Also used for latent feature files, which share the layout.
inline std::vector<Signal> read_signals(std::istream& in) {
  std::vector<Signal> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto context = "[rsft::read_signals] error: line " + std::to_string(line_no);
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError(context + ": expected 'read_id<TAB>values'");
    }
    Signal s{line.substr(0, tab), parse_real_list(std::string_view(line).substr(tab + 1), context)};
    if (s.values.empty()) throw DataError(context + ": no values");
    if (width == 0) width = s.values.size();
    if (s.values.size() != width) {
      throw DataError(context + ": inconsistent signal length");
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// "read_id<TAB>label"
inline void write_labels(std::ostream& out, const LabelMap& labels) {
  for (const auto& [id, c] : labels) out << id << '\t' << to_string(c) << '\n';
}

inline LabelMap read_labels(std::istream& in) {
  LabelMap out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    auto context = "[rsft::read_labels] error: line " + std::to_string(line_no);
    if (tab == std::string::npos || tab == 0) {
      throw DataError(context + ": expected 'read_id<TAB>label'");
    }
    auto label_text = std::string_view(line).substr(tab + 1);
    if (auto extra = label_text.find('\t'); extra != std::string_view::npos) {
      label_text = label_text.substr(0, extra);
    }
    auto c = parse_read_class(label_text);
    if (!c) throw DataError(context + ": unknown label '" + std::string(label_text) + "'");
    if (!out.emplace(line.substr(0, tab), *c).second) {
      throw DataError(context + ": duplicate read '" + line.substr(0, tab) + "'");
    }
  }
  return out;
}

}  // namespace rsft

#endif  // RSFT_TSV_IO_HPP_
