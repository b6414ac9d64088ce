#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "earseg/mask.hpp"
#include "earseg/tensor.hpp"

namespace earseg {

struct Region {
  int id = 0;                    // 1-based, assigned by raster order of first pixel
  std::size_t pixel_count = 0;
  BoundingBox bbox{0, 0, 0, 0};  // tight extents
  int first_x = 0, first_y = 0;  // raster-order first (top-left-most) pixel
};

struct RegionLabeling {
  int width = 0, height = 0;
  std::vector<std::int32_t> ids;  // per pixel; 0 = background, regions are 1..K
  std::vector<Region> regions;    // regions[i] has id i+1

  std::int32_t id_at(int y, int x) const { return ids[static_cast<std::size_t>(y) * width + x]; }
};

// Two-pass connected-component labeling with union-find. Region ids are
// contiguous 1..K in raster order of each region's first pixel, which makes
// the labeling deterministic and platform-independent.
inline RegionLabeling connected_components(const LabelMask& mask,
                                           Connectivity connectivity = Connectivity::Eight) {
  if (connectivity != Connectivity::Four && connectivity != Connectivity::Eight) {
    throw std::invalid_argument("connected_components: connectivity must be 4 or 8");
  }
  const int w = mask.width, h = mask.height;
  RegionLabeling out;
  out.width = w;
  out.height = h;
  out.ids.assign(static_cast<std::size_t>(w) * h, 0);

  // Pass 1: provisional labels + union with previously-scanned neighbors.
  std::vector<std::int32_t> parent;  // parent[p] for provisional label p (0-based)
  parent.reserve(64);
  auto find = [&parent](std::int32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];  // path halving
      x = parent[x];
    }
    return x;
  };
  auto unite = [&parent, &find](std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a > b) std::swap(a, b);
    parent[b] = a;  // keep the smaller (earlier) label as root
  };

  std::vector<std::int32_t> prov(static_cast<std::size_t>(w) * h, -1);
  const bool eight = (connectivity == Connectivity::Eight);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      std::int32_t label = -1;
      auto consider = [&](int ny, int nx) {
        if (ny < 0 || nx < 0 || nx >= w) return;
        const std::int32_t nl = prov[static_cast<std::size_t>(ny) * w + nx];
        if (nl < 0) return;
        if (label < 0) {
          label = find(nl);
        } else {
          unite(label, nl);
          label = find(label);
        }
      };
      consider(y, x - 1);                    // W
      consider(y - 1, x);                    // N
      if (eight) {
        consider(y - 1, x - 1);              // NW
        consider(y - 1, x + 1);              // NE
      }
      if (label < 0) {
        label = static_cast<std::int32_t>(parent.size());
        parent.push_back(label);
      }
      prov[i] = label;
    }
  }

  // Pass 2: resolve roots, then hand out final ids in raster order of first
  // appearance (= the region's first pixel) while collecting the table.
  std::vector<std::int32_t> final_of_root(parent.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (prov[i] < 0) continue;
      const std::int32_t root = find(prov[i]);
      std::int32_t id = final_of_root[root];
      if (id == 0) {
        id = static_cast<std::int32_t>(out.regions.size()) + 1;
        final_of_root[root] = id;
        Region r;
        r.id = id;
        r.first_x = x;
        r.first_y = y;
        r.bbox = {x, y, 1, 1};
        out.regions.push_back(r);
      }
      out.ids[i] = id;
      Region& r = out.regions[id - 1];
      ++r.pixel_count;
      const int right = std::max(r.bbox.right(), x + 1);
      const int bottom = std::max(r.bbox.bottom(), y + 1);
      r.bbox.left = std::min(r.bbox.left, x);
      r.bbox.top = std::min(r.bbox.top, y);
      r.bbox.width = right - r.bbox.left;
      r.bbox.height = bottom - r.bbox.top;
    }
  }
  return out;
}

// Keeps at most the two largest regions by pixel count; size ties go to the
// region whose first pixel comes earlier in raster order (equivalently, the
// smaller id). Everything else becomes background.
inline LabelMask keep_two_largest(const RegionLabeling& labeling) {
  LabelMask out(labeling.width, labeling.height);
  if (labeling.regions.empty()) return out;

  std::vector<int> order(labeling.regions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& ra = labeling.regions[a];
    const auto& rb = labeling.regions[b];
    if (ra.pixel_count != rb.pixel_count) return ra.pixel_count > rb.pixel_count;
    return ra.id < rb.id;  // ids are already in raster order of first pixel
  });

  std::vector<bool> keep_id(labeling.regions.size() + 1, false);
  for (std::size_t k = 0; k < order.size() && k < 2; ++k) {
    keep_id[order[k] + 1] = true;
  }
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = keep_id[labeling.ids[i]] ? 1 : 0;
  }
  return out;
}

// Thresholds the ear-probability channel: a pixel is ear iff p(ear) > 0.5,
// so an exact tie resolves to non-ear.
template <typename T>
LabelMask threshold_probabilities(const Tensor<T>& probabilities) {
  if (probabilities.n() != 1 || probabilities.c() != 2) {
    throw std::invalid_argument("threshold: expected a (1,2,h,w) probability map, got " +
                                probabilities.shape_str());
  }
  LabelMask out(probabilities.w(), probabilities.h());
  const T* ear = probabilities.plane(0, 1);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = (ear[i] > T(0.5)) ? 1 : 0;
  }
  return out;
}

// Full postprocessing: threshold at p(ear) > 0.5, label the candidate
// regions, and retain only the two largest.
template <typename T>
LabelMask postprocess(const Tensor<T>& probabilities,
                      Connectivity connectivity = Connectivity::Eight) {
  return keep_two_largest(connected_components(threshold_probabilities(probabilities),
                                               connectivity));
}

inline LabelMask postprocess_mask(const LabelMask& raw,
                                  Connectivity connectivity = Connectivity::Eight) {
  return keep_two_largest(connected_components(raw, connectivity));
}

}  // namespace earseg
