#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace earseg {

// Per-pixel 2-class label image: 0 = non-ear, 1 = ear. Used for ground truth,
// raw predictions and postprocessed output alike.
struct LabelMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;  // row-major, strictly {0, 1}

  LabelMask() = default;
  LabelMask(int w, int h) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("LabelMask: dimensions must be positive");
    values.assign(static_cast<std::size_t>(w) * h, 0);
  }

  std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

  std::size_t pixel_count() const { return values.size(); }

  std::size_t ear_pixels() const {
    std::size_t k = 0;
    for (auto v : values) k += (v != 0);
    return k;
  }

  bool is_binary() const {
    for (auto v : values) {
      if (v > 1) return false;
    }
    return true;
  }

  bool same_size(const LabelMask& o) const { return width == o.width && height == o.height; }
};

// Axis-aligned rectangle in pixel units.
struct BoundingBox {
  int left = 0;
  int top = 0;
  int width = 1;
  int height = 1;

  int right() const { return left + width; }    // exclusive
  int bottom() const { return top + height; }   // exclusive
};

enum class Connectivity : int { Four = 4, Eight = 8 };

}  // namespace earseg
