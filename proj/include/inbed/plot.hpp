#pragma once

// Deterministic SVG line charts (no external renderer, fixed number formatting).

#include <string>
#include <vector>

#include "inbed/eval.hpp"

namespace inbed {

struct PlotOptions {
  std::string title = "Impact of real-data scarcity";
  std::string x_label = "real training data (%)";
  std::string y_label = "MPJPE (mm)";
  int width = 640;
  int height = 420;
};

// One polyline with markers per series. Throws std::invalid_argument when no
// series has a point.
std::string render_svg(const std::vector<PlotSeries>& series, const PlotOptions& opt = {});

}  // namespace inbed
