#pragma once

#include <cstddef>
#include <vector>

namespace inbed {

// Overhead depth map: metres from the camera plane, row-major, rows run
// along the bed length (row 0 at the foot end).
struct DepthImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  DepthImage() = default;
  DepthImage(int h, int w, float fill) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

  float& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  float at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
  bool operator==(const DepthImage&) const = default;
};

}  // namespace inbed
