#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "earseg/covariates.hpp"
#include "earseg/image.hpp"
#include "earseg/mask.hpp"
#include "earseg/rng.hpp"

namespace earseg {

struct SampleRecord {
  std::string id;
  ImageU8 image;
  LabelMask mask{1, 1};
  Covariates covariates;
  std::string split = "train";  // "train" | "test"
};

inline constexpr int kDefaultTargetWidth = 480;
inline constexpr int kDefaultTargetHeight = 360;

// Resamples image (bilinear) and mask (nearest) to the target size.
inline SampleRecord resize_record(const SampleRecord& rec, int target_w = kDefaultTargetWidth,
                                  int target_h = kDefaultTargetHeight) {
  SampleRecord out = rec;
  out.image = resize_bilinear(rec.image, target_w, target_h);
  out.mask = resize_nearest(rec.mask, target_w, target_h);
  return out;
}

// Seeded random partition: a Fisher-Yates shuffle of the id order, the
// first `train_count` drawn as "train", the rest as "test". The same seed
// over the same id list always produces the same assignment.
inline std::map<std::string, std::string> split_assignment(const std::vector<std::string>& ids,
                                                           std::size_t train_count,
                                                           std::uint64_t seed) {
  if (train_count > ids.size()) {
    throw std::invalid_argument("split: train count " + std::to_string(train_count) +
                                " exceeds record count " + std::to_string(ids.size()));
  }
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, "split"));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  std::map<std::string, std::string> assign;
  for (std::size_t k = 0; k < order.size(); ++k) {
    assign[ids[order[k]]] = k < train_count ? "train" : "test";
  }
  return assign;
}

inline std::map<std::string, std::string> split_assignment(
    const std::vector<SampleRecord>& records, std::size_t train_count, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.id);
  return split_assignment(ids, train_count, seed);
}

inline void apply_split(std::vector<SampleRecord>& records,
                        const std::map<std::string, std::string>& assignment) {
  for (auto& r : records) {
    auto it = assignment.find(r.id);
    if (it == assignment.end()) {
      throw std::invalid_argument("split: no assignment for sample '" + r.id + "'");
    }
    r.split = it->second;
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpus.

struct SynthConfig {
  int width = 128, height = 96;
  double ear_fraction_low = 0.01;   // per-image ear-pixel share band
  double ear_fraction_high = 0.03;
  std::string id_prefix = "synth";
};

namespace detail {

struct Ellipse {
  double cx, cy, a, b, cos_t, sin_t;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = cos_t * dx + sin_t * dy;
    const double v = -sin_t * dx + cos_t * dy;
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
  double radius() const { return std::max(a, b); }
};

inline std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

inline std::string pick(Rng& rng, const std::vector<std::string>& options) {
  return options[rng.uniform_index(options.size())];
}

}  // namespace detail

// Draws 1-2 disjoint high-contrast elliptical blobs over a textured
// background, with an exact mask and randomized covariate labels. Blob
// placement keeps a >=3-pixel gap, so masks have at most two connected
// components even under 8-connectivity. The per-image ear-pixel share is
// corrected into the configured band after rasterization.
inline SampleRecord generate_synthetic_sample(int index, const SynthConfig& cfg,
                                              std::uint64_t seed) {
  if (cfg.width < 32 || cfg.height < 32) {
    throw std::invalid_argument("synthetic: image size must be at least 32x32");
  }
  if (!(cfg.ear_fraction_low > 0.0) || cfg.ear_fraction_high < cfg.ear_fraction_low ||
      cfg.ear_fraction_high >= 0.5) {
    throw std::invalid_argument("synthetic: ear fraction band must satisfy 0 < low <= high < 0.5");
  }
  Rng rng(derive_seed(seed, "synth." + std::to_string(index)));
  const int w = cfg.width, h = cfg.height;
  const double total_px = static_cast<double>(w) * h;

  const int blob_count = 1 + static_cast<int>(rng.uniform_index(2));
  const double lo = cfg.ear_fraction_low, hi = cfg.ear_fraction_high;
  const double margin = 0.15 * (hi - lo);
  const double target_fraction = rng.uniform(lo + margin, hi - margin);

  // Blob area shares and shapes; axes later rescaled to hit the band.
  std::vector<double> shares;
  if (blob_count == 1) {
    shares = {1.0};
  } else {
    const double r = rng.uniform(0.35, 0.65);
    shares = {r, 1.0 - r};
  }

  std::vector<detail::Ellipse> blobs;
  for (int bi = 0; bi < blob_count; ++bi) {
    const double area = shares[bi] * target_fraction * total_px;
    const double aspect = rng.uniform(1.2, 2.5);  // taller than wide
    double a = std::sqrt(area / (3.14159265358979323846 * aspect));
    double b = aspect * a;
    a = std::max(a, 1.2);
    b = std::max(b, 1.2);
    const double theta = rng.uniform(-0.5, 0.5);
    detail::Ellipse e{0, 0, a, b, std::cos(theta), std::sin(theta)};

    const double pad = e.radius() + 2.0;
    const double cx_lo = pad, cx_hi = w - pad, cy_lo = pad, cy_hi = h - pad;
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      if (cx_hi <= cx_lo || cy_hi <= cy_lo) break;  // blob too large for the frame
      e.cx = rng.uniform(cx_lo, cx_hi);
      e.cy = rng.uniform(cy_lo, cy_hi);
      placed = true;
      for (const auto& other : blobs) {
        const double dx = e.cx - other.cx, dy = e.cy - other.cy;
        const double need = e.radius() + other.radius() + 3.0;
        if (dx * dx + dy * dy < need * need) {
          placed = false;
          break;
        }
      }
    }
    if (placed) blobs.push_back(e);
  }
  if (blobs.empty()) {
    // Degenerate frame (tiny image, oversized blob): fall back to a small
    // centered ellipse that always fits a >=32x32 image.
    blobs.push_back({w / 2.0, h / 2.0, 2.0, 3.0, 1.0, 0.0});
  }

  // Rasterize, then rescale axes until the pixel share lands in the band.
  LabelMask mask(w, h);
  auto rasterize = [&]() -> std::size_t {
    std::fill(mask.values.begin(), mask.values.end(), std::uint8_t(0));
    for (const auto& e : blobs) {
      const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - e.radius() - 1)));
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(e.cx + e.radius() + 1)));
      const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - e.radius() - 1)));
      const int y1 = std::min(h - 1, static_cast<int>(std::ceil(e.cy + e.radius() + 1)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          if (e.contains(x + 0.5, y + 0.5)) {
            mask.values[static_cast<std::size_t>(y) * w + x] = 1;
          }
        }
      }
    }
    return mask.ear_pixels();
  };

  std::size_t ear = rasterize();
  for (int fix = 0; fix < 6; ++fix) {
    const double frac = static_cast<double>(ear) / total_px;
    if (ear > 0 && frac >= lo && frac <= hi) break;
    const double want = (frac <= 0.0) ? 2.0 : std::sqrt(target_fraction / frac);
    for (auto& e : blobs) {
      e.a = std::max(e.a * want, 1.2);
      e.b = std::max(e.b * want, 1.2);
    }
    ear = rasterize();
  }

  // Paint: low-frequency gradient + noise background, bright blobs.
  SampleRecord rec;
  rec.image = ImageU8(w, h);
  rec.mask = std::move(mask);
  double bg_base[3], blob_base[3];
  for (int c = 0; c < 3; ++c) bg_base[c] = rng.uniform(30.0, 110.0);
  for (int c = 0; c < 3; ++c) blob_base[c] = rng.uniform(170.0, 250.0);
  const double gx = rng.uniform(-0.15, 0.15), gy = rng.uniform(-0.15, 0.15);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool is_ear = rec.mask.at(y, x) != 0;
      for (int c = 0; c < 3; ++c) {
        double v;
        if (is_ear) {
          v = blob_base[c] + rng.uniform(-10.0, 10.0);
        } else {
          v = bg_base[c] + gx * x + gy * y + rng.uniform(-15.0, 15.0);
        }
        rec.image.at(y, x, c) = detail::clamp_u8(v);
      }
    }
  }

  std::ostringstream id;
  id << cfg.id_prefix << "_" << std::setfill('0') << std::setw(4) << index;
  rec.id = id.str();

  const std::vector<std::string> pose = {"neutral", "mild", "severe"};
  const std::vector<std::string> occl = {"none", "mild", "severe"};
  const std::vector<std::string> gender = {"female", "male"};
  const std::vector<std::string> ethnicity = {"asian", "black", "caucasian", "hispanic", "other"};
  rec.covariates.pitch = detail::pick(rng, pose);
  rec.covariates.roll = detail::pick(rng, pose);
  rec.covariates.yaw = detail::pick(rng, pose);
  rec.covariates.occlusion = detail::pick(rng, occl);
  rec.covariates.gender = detail::pick(rng, gender);
  rec.covariates.ethnicity = rng.uniform() < 0.1 ? "unknown" : detail::pick(rng, ethnicity);
  return rec;
}

// Bit-reproducible synthetic corpus; each sample derives its own stream from
// (seed, index), so a shorter run is a prefix of a longer one.
inline std::vector<SampleRecord> generate_synthetic(int count, const SynthConfig& cfg,
                                                    std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("synthetic: count must be at least 1");
  std::vector<SampleRecord> records;
  records.reserve(count);
  for (int i = 0; i < count; ++i) {
    records.push_back(generate_synthetic_sample(i + 1, cfg, seed));
  }
  return records;
}

}  // namespace earseg
