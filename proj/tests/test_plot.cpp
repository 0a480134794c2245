#include <regex>

#include "doctest.h"
#include "inbed/plot.hpp"

using namespace inbed;

namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("plot") {
  TEST_CASE("one point still renders") {
    const std::string svg = render_svg({{"only", {{10.0, 42.0}}}});
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(count(svg, "<polyline") == 0);
    CHECK(count(svg, "<circle") == 1);
    CHECK(svg.find(">only<") != std::string::npos);
  }

  TEST_CASE("three variants over five fractions") {
    std::vector<PlotSeries> s;
    for (const char* name : {"sim_only", "sim_finetune", "scratch"}) {
      PlotSeries p{name, {}};
      for (double x : {0.0, 10.0, 25.0, 50.0, 100.0}) p.points.emplace_back(x, 100.0 - 0.3 * x + s.size());
      s.push_back(p);
    }
    const std::string svg = render_svg(s);
    CHECK(count(svg, "<polyline") == 3);
    CHECK(count(svg, "<circle") == 15);
    CHECK(svg == render_svg(s));
    // Every coordinate stays inside the canvas.
    const std::regex attr("(?:cx|cy)=\"([-0-9.]+)\"");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), attr); it != std::sregex_iterator(); ++it) {
      const double v = std::stod((*it)[1]);
      CHECK(v >= 0.0);
      CHECK(v <= 640.0);
    }
  }

  TEST_CASE("text is escaped and NaN points are skipped") {
    PlotOptions opt;
    opt.title = "a<b & c";
    const std::string svg = render_svg({{"x", {{0.0, 1.0}, {1.0, std::nan("")}, {2.0, 3.0}}}}, opt);
    CHECK(svg.find("a&lt;b &amp; c") != std::string::npos);
    CHECK(svg.find("nan") == std::string::npos);
    CHECK(count(svg, "<circle") == 2);
  }

  TEST_CASE("nothing to draw") {
    CHECK_THROWS_AS(render_svg({}), std::invalid_argument);
    CHECK_THROWS_AS(render_svg({{"empty", {}}}), std::invalid_argument);
  }
}
