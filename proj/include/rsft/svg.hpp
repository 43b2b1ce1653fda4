#ifndef RSFT_SVG_HPP_
#define RSFT_SVG_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsft/read_class.hpp"

namespace rsft::svg {

// Same class order as ReadClass: chimeric, left, right, regular.
inline std::string class_color(ReadClass c) {
  switch (c) {
    case ReadClass::kChimeric: return "red";
    case ReadClass::kLeftRepeat: return "green";
    case ReadClass::kRightRepeat: return "blue";
    case ReadClass::kRegular: return "yellow";
  }
  return "black";
}

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> p = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
                                             "#e377c2", "#7f7f7f"};
  return p;
}

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;  // empty = palette
};

struct ChartOptions {
  int width = 640;
  int height = 420;
  std::string title;
  std::string x_label;
  std::string y_label;
  // Fixed axis ranges; NaN = fit to data.
  double x_min = NAN, x_max = NAN, y_min = NAN, y_max = NAN;
  double point_radius = 3.0;
  bool legend = true;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;  // data range
  double left = 60, right = 20, top = 36, bottom = 48;
  double w = 0, h = 0;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (w - left - right); }
  double py(double y) const { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); }
};

inline void fit_range(double& lo, double& hi, double data_lo, double data_hi) {
  if (std::isnan(lo)) lo = data_lo;
  if (std::isnan(hi)) hi = data_hi;
  if (!(hi > lo)) {
    double pad = std::abs(lo) > 0 ? std::abs(lo) * 0.5 : 0.5;
    lo -= pad;
    hi += pad;
  }
}

inline Frame make_frame(std::span<const Series> series, const ChartOptions& opt) {
  double xl = INFINITY, xh = -INFINITY, yl = INFINITY, yh = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("[rsft::svg] error: series '" + s.name + "' x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        throw std::invalid_argument("[rsft::svg] error: non-finite value in series '" + s.name + "'");
      }
      xl = std::min(xl, s.x[i]);
      xh = std::max(xh, s.x[i]);
      yl = std::min(yl, s.y[i]);
      yh = std::max(yh, s.y[i]);
    }
  }
  Frame f;
  f.x0 = opt.x_min;
  f.x1 = opt.x_max;
  f.y0 = opt.y_min;
  f.y1 = opt.y_max;
  fit_range(f.x0, f.x1, xl, xh);
  fit_range(f.y0, f.y1, yl, yh);
  f.w = opt.width;
  f.h = opt.height;
  return f;
}

inline void axes(std::ostringstream& o, const Frame& f, const ChartOptions& opt) {
  o << "<rect x=\"0\" y=\"0\" width=\"" << opt.width << "\" height=\"" << opt.height << "\" fill=\"white\"/>\n";
  if (!opt.title.empty()) {
    o << "<text x=\"" << num(f.w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(opt.title)
      << "</text>\n";
  }
  const double xa = f.left, xb = f.w - f.right, ya = f.top, yb = f.h - f.bottom;
  o << "<g stroke=\"black\" stroke-width=\"1\">\n";
  o << "<line x1=\"" << num(xa) << "\" y1=\"" << num(yb) << "\" x2=\"" << num(xb) << "\" y2=\"" << num(yb) << "\"/>\n";
  o << "<line x1=\"" << num(xa) << "\" y1=\"" << num(ya) << "\" x2=\"" << num(xa) << "\" y2=\"" << num(yb) << "\"/>\n";
  o << "</g>\n<g font-size=\"11\">\n";
  for (int t = 0; t <= 4; ++t) {
    double xv = f.x0 + (f.x1 - f.x0) * t / 4, yv = f.y0 + (f.y1 - f.y0) * t / 4;
    o << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(yb + 16) << "\" text-anchor=\"middle\">" << num(xv)
      << "</text>\n";
    o << "<text x=\"" << num(xa - 6) << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << num(yv)
      << "</text>\n";
  }
  o << "</g>\n";
  if (!opt.x_label.empty()) {
    o << "<text x=\"" << num((xa + xb) / 2) << "\" y=\"" << num(f.h - 10) << "\" text-anchor=\"middle\" font-size=\"12\">"
      << escape(opt.x_label) << "</text>\n";
  }
  if (!opt.y_label.empty()) {
    o << "<text x=\"14\" y=\"" << num((ya + yb) / 2) << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
      << num((ya + yb) / 2) << ")\">" << escape(opt.y_label) << "</text>\n";
  }
}

inline std::string color_of(const Series& s, std::size_t i) {
  return s.color.empty() ? palette()[i % palette().size()] : s.color;
}

inline void legend(std::ostringstream& o, std::span<const Series> series, const Frame& f, bool points) {
  double y = f.top + 6;
  const double x = f.w - f.right - 130;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].name.empty()) continue;
    o << "<g class=\"legend-entry\">";
    if (points) {
      o << "<circle cx=\"" << num(x + 6) << "\" cy=\"" << num(y) << "\" r=\"4\" fill=\"" << color_of(series[i], i)
        << "\" stroke=\"black\" stroke-width=\"0.5\"/>";
    } else {
      o << "<line x1=\"" << num(x) << "\" y1=\"" << num(y) << "\" x2=\"" << num(x + 14) << "\" y2=\"" << num(y)
        << "\" stroke=\"" << color_of(series[i], i) << "\" stroke-width=\"2\"/>";
    }
    o << "<text x=\"" << num(x + 20) << "\" y=\"" << num(y + 4) << "\" font-size=\"11\">" << escape(series[i].name)
      << "</text></g>\n";
    y += 16;
  }
}

inline std::string open(const ChartOptions& opt) {
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
    << "\" viewBox=\"0 0 " << opt.width << " " << opt.height << "\" font-family=\"sans-serif\">\n";
  return o.str();
}

}  // namespace detail

/// One polyline per series.
inline std::string line_chart(std::span<const Series> series, const ChartOptions& opt = {}) {
  if (series.empty()) throw std::invalid_argument("[rsft::svg::line_chart] error: nothing to plot");
  for (const auto& s : series) {
    if (s.x.empty()) throw std::invalid_argument("[rsft::svg::line_chart] error: series '" + s.name + "' is empty");
  }
  auto f = detail::make_frame(series, opt);
  std::ostringstream o;
  o << detail::open(opt);
  detail::axes(o, f, opt);
  for (std::size_t i = 0; i < series.size(); ++i) {
    o << "<polyline fill=\"none\" stroke=\"" << detail::color_of(series[i], i) << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < series[i].x.size(); ++k) {
      if (k) o << ' ';
      o << detail::num(f.px(series[i].x[k])) << ',' << detail::num(f.py(series[i].y[k]));
    }
    o << "\"/>\n";
  }
  if (opt.legend) detail::legend(o, series, f, false);
  o << "</svg>\n";
  return o.str();
}

/// Circles, one group per series.
inline std::string scatter_chart(std::span<const Series> series, const ChartOptions& opt = {}) {
  if (series.empty()) throw std::invalid_argument("[rsft::svg::scatter_chart] error: nothing to plot");
  auto f = detail::make_frame(series, opt);
  std::ostringstream o;
  o << detail::open(opt);
  detail::axes(o, f, opt);
  for (std::size_t i = 0; i < series.size(); ++i) {
    o << "<g fill=\"" << detail::color_of(series[i], i) << "\" stroke=\"black\" stroke-width=\"0.4\">\n";
    for (std::size_t k = 0; k < series[i].x.size(); ++k) {
      o << "<circle cx=\"" << detail::num(f.px(series[i].x[k])) << "\" cy=\"" << detail::num(f.py(series[i].y[k]))
        << "\" r=\"" << detail::num(opt.point_radius) << "\"/>\n";
    }
    o << "</g>\n";
  }
  if (opt.legend) detail::legend(o, series, f, true);
  o << "</svg>\n";
  return o.str();
}

}  // namespace rsft::svg

#endif  // RSFT_SVG_HPP_
