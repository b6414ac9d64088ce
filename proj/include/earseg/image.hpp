#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "earseg/mask.hpp"
#include "earseg/tensor.hpp"

namespace earseg {

// Interleaved 8-bit RGB raster.
struct ImageU8 {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // height*width*3, row-major, R,G,B per pixel

  ImageU8() = default;
  ImageU8(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("image dimensions must be positive");
  }

  std::uint8_t& at(int y, int x, int c) {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

// (1,3,h,w) tensor with channels scaled to [0,1].
template <typename T = float>
Tensor<T> image_to_tensor(const ImageU8& img) {
  Tensor<T> t(1, 3, img.height, img.width);
  const T scale = T(1) / T(255);
  for (int c = 0; c < 3; ++c) {
    T* dst = t.plane(0, c);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        dst[static_cast<std::size_t>(y) * img.width + x] = scale * T(img.at(y, x, c));
      }
    }
  }
  return t;
}

template <typename T = float>
Tensor<std::uint8_t> mask_to_tensor(const LabelMask& mask) {
  Tensor<std::uint8_t> t(1, 1, mask.height, mask.width);
  std::copy(mask.values.begin(), mask.values.end(), t.data());
  return t;
}

inline LabelMask tensor_to_mask(const Tensor<std::uint8_t>& t, int batch = 0) {
  if (t.c() != 1) throw std::invalid_argument("tensor_to_mask: expected a single channel");
  LabelMask m(t.w(), t.h());
  const std::uint8_t* src = t.plane(batch, 0);
  std::copy(src, src + m.values.size(), m.values.begin());
  return m;
}

// Bilinear resampling with half-pixel-centered coordinates: destination
// pixel (x,y) samples source position ((x+0.5)*sx - 0.5, (y+0.5)*sy - 0.5).
// A no-op when the size already matches (weights collapse to identity).
inline ImageU8 resize_bilinear(const ImageU8& src, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) throw std::invalid_argument("resize: target dims must be positive");
  if (out_w == src.width && out_h == src.height) return src;
  ImageU8 dst(out_w, out_h);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.height - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = std::clamp(fy - static_cast<double>(y0), 0.0, 1.0);
    for (int x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.width - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = std::clamp(fx - static_cast<double>(x0), 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c);
        const double bot = (1.0 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c);
        const double v = (1.0 - wy) * top + wy * bot;
        dst.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return dst;
}

// Nearest-neighbor resampling; preserves the binary label set by
// construction. Same half-pixel convention as resize_bilinear.
inline LabelMask resize_nearest(const LabelMask& src, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) throw std::invalid_argument("resize: target dims must be positive");
  if (out_w == src.width && out_h == src.height) return src;
  LabelMask dst(out_w, out_h);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const int sy_i = std::clamp(static_cast<int>(std::floor((y + 0.5) * sy)), 0, src.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx_i = std::clamp(static_cast<int>(std::floor((x + 0.5) * sx)), 0, src.width - 1);
      dst.values[static_cast<std::size_t>(y) * out_w + x] = src.at(sy_i, sx_i);
    }
  }
  return dst;
}

}  // namespace earseg
