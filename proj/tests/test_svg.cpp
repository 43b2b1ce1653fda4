#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rsft/svg.hpp"

#ifndef RSFT_TEST_DATA
#error "RSFT_TEST_DATA must point at tests/data"
#endif

namespace rsft::svg {
namespace {

int count(const std::string& s, const std::string& needle) {
  int n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

std::vector<Series> class_series() {
  std::vector<Series> out;
  int k = 0;
  for (auto c : kAllClasses) {
    Series s{to_string(c), {}, {}, class_color(c)};
    for (int i = 0; i < 3; ++i) {
      s.x.push_back(k + 0.5 * i);
      s.y.push_back(k * k - i);
    }
    out.push_back(s);
    ++k;
  }
  return out;
}

// Set RSFT_WRITE_GOLDEN=1 to regenerate after an intentional format change.
void check_golden(const std::string& name, const std::string& got) {
  const std::string path = std::string(RSFT_TEST_DATA) + "/" + name;
  if (std::getenv("RSFT_WRITE_GOLDEN")) {
    std::ofstream(path) << got;
  }
  std::ifstream in(path);
  ASSERT_TRUE(in) << "missing golden file " << path;
  std::stringstream want;
  want << in.rdbuf();
  EXPECT_EQ(got, want.str());
}

TEST(Svg, ScatterGolden) {
  ChartOptions opt;
  opt.title = "latent <z1> & classes";
  opt.x_label = "x";
  opt.y_label = "y";
  auto s = class_series();
  auto out = scatter_chart(s, opt);
  EXPECT_EQ(count(out, "class=\"legend-entry\""), 4);
  EXPECT_EQ(count(out, "<circle"), 12 + 4);
  EXPECT_NE(out.find("latent &lt;z1&gt; &amp; classes"), std::string::npos);
  for (auto c : {"red", "green", "blue", "yellow"}) EXPECT_NE(out.find(std::string("fill=\"") + c), std::string::npos);
  check_golden("scatter.svg", out);
}

TEST(Svg, LineGolden) {
  std::vector<Series> s = {{"mean", {0, 0.5, 1}, {1, 0.8, 0.4}, ""}, {"ff", {0, 1}, {0.9, 0.2}, ""}};
  ChartOptions opt;
  opt.x_min = 0;
  opt.x_max = 1;
  opt.y_min = 0;
  opt.y_max = 1;
  auto out = line_chart(s, opt);
  EXPECT_EQ(count(out, "<polyline"), 2);
  EXPECT_EQ(count(out, "class=\"legend-entry\""), 2);
  check_golden("line.svg", out);
}

TEST(Svg, Rejections) {
  std::vector<Series> none;
  EXPECT_THROW(line_chart(none), std::invalid_argument);
  EXPECT_THROW(scatter_chart(none), std::invalid_argument);
  std::vector<Series> empty = {{"e", {}, {}, ""}};
  EXPECT_THROW(line_chart(empty), std::invalid_argument);
  std::vector<Series> ragged = {{"r", {1, 2}, {1}, ""}};
  EXPECT_THROW(scatter_chart(ragged), std::invalid_argument);
  std::vector<Series> nan = {{"n", {1}, {NAN}, ""}};
  EXPECT_THROW(scatter_chart(nan), std::invalid_argument);
}

TEST(Svg, DegenerateRangeIsPadded) {
  std::vector<Series> one = {{"p", {2}, {2}, ""}};
  auto out = scatter_chart(one);
  EXPECT_EQ(out.find("nan"), std::string::npos);
  EXPECT_EQ(out.find("inf"), std::string::npos);
}

}  // namespace
}  // namespace rsft::svg
