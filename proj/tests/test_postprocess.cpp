#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "earseg/postprocess.hpp"
#include "earseg/rng.hpp"
#include "earseg/tensor.hpp"
#include "oracles.hpp"

using namespace earseg;

namespace {

LabelMask from_rows(const std::vector<std::string>& rows) {
  LabelMask m(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()));
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) m.at(y, x) = rows[y][x] == '#' ? 1 : 0;
  }
  return m;
}

void paint_rect(LabelMask& m, int left, int top, int w, int h) {
  for (int y = top; y < top + h; ++y) {
    for (int x = left; x < left + w; ++x) m.at(y, x) = 1;
  }
}

}  // namespace

TEST_CASE("an all-background mask has zero regions") {
  const LabelMask empty(16, 12);
  for (auto conn : {Connectivity::Four, Connectivity::Eight}) {
    const RegionLabeling lab = connected_components(empty, conn);
    REQUIRE(lab.regions.empty());
    for (auto id : lab.ids) REQUIRE(id == 0);
    const LabelMask kept = keep_two_largest(lab);
    REQUIRE(kept.ear_pixels() == 0);
  }
}

TEST_CASE("diagonal neighbors merge under 8-connectivity but not 4") {
  const LabelMask m = from_rows({
      "#...",
      ".#..",
      "....",
  });
  REQUIRE(connected_components(m, Connectivity::Eight).regions.size() == 1);
  REQUIRE(connected_components(m, Connectivity::Four).regions.size() == 2);
}

TEST_CASE("region ids are contiguous and ordered by raster-first pixel") {
  const LabelMask m = from_rows({
      "..##....#",
      "..##....#",
      ".........",
      "#####....",
  });
  const RegionLabeling lab = connected_components(m, Connectivity::Eight);
  REQUIRE(lab.regions.size() == 3);
  for (std::size_t i = 0; i < lab.regions.size(); ++i) {
    REQUIRE(lab.regions[i].id == static_cast<int>(i) + 1);
  }
  // First pixels in raster order: (2,0) block, (8,0) column, (0,3) bar.
  REQUIRE(lab.regions[0].first_x == 2);
  REQUIRE(lab.regions[0].first_y == 0);
  REQUIRE(lab.regions[1].first_x == 8);
  REQUIRE(lab.regions[1].first_y == 0);
  REQUIRE(lab.regions[2].first_x == 0);
  REQUIRE(lab.regions[2].first_y == 3);

  REQUIRE(lab.regions[0].pixel_count == 4);
  REQUIRE(lab.regions[1].pixel_count == 2);
  REQUIRE(lab.regions[2].pixel_count == 5);

  REQUIRE(lab.regions[0].bbox.left == 2);
  REQUIRE(lab.regions[0].bbox.top == 0);
  REQUIRE(lab.regions[0].bbox.width == 2);
  REQUIRE(lab.regions[0].bbox.height == 2);
  REQUIRE(lab.regions[2].bbox.width == 5);
  REQUIRE(lab.regions[2].bbox.height == 1);
}

TEST_CASE("labeling matches the flood-fill oracle on random masks") {
  Rng rng(9001);
  for (int trial = 0; trial < 200; ++trial) {
    const double density = rng.uniform(0.1, 0.7);
    const LabelMask m = oracle::random_mask(rng, 32, 32, density);
    for (auto conn : {Connectivity::Four, Connectivity::Eight}) {
      const RegionLabeling lab = connected_components(m, conn);
      const std::vector<int> ref = oracle::flood_fill_labels(m, static_cast<int>(conn));
      const int ref_regions = ref.empty() ? 0 : *std::max_element(ref.begin(), ref.end());
      REQUIRE(static_cast<int>(lab.regions.size()) == ref_regions);
      // Both assign ids by raster order of first pixel, so they agree exactly.
      for (std::size_t i = 0; i < ref.size(); ++i) {
        REQUIRE(lab.ids[i] == ref[i]);
      }
    }
  }
}

TEST_CASE("region table entries survive a per-pixel recount") {
  Rng rng(9002);
  for (int trial = 0; trial < 25; ++trial) {
    const LabelMask m = oracle::random_mask(rng, 24, 19, 0.4);
    const RegionLabeling lab = connected_components(m, Connectivity::Eight);
    for (const Region& r : lab.regions) {
      std::size_t count = 0;
      int min_x = m.width, min_y = m.height, max_x = -1, max_y = -1;
      int first_x = -1, first_y = -1;
      for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
          if (lab.id_at(y, x) != r.id) continue;
          if (first_y < 0) {
            first_x = x;
            first_y = y;
          }
          ++count;
          min_x = std::min(min_x, x);
          min_y = std::min(min_y, y);
          max_x = std::max(max_x, x);
          max_y = std::max(max_y, y);
        }
      }
      REQUIRE(count == r.pixel_count);
      REQUIRE(first_x == r.first_x);
      REQUIRE(first_y == r.first_y);
      REQUIRE(min_x == r.bbox.left);
      REQUIRE(min_y == r.bbox.top);
      REQUIRE(max_x - min_x + 1 == r.bbox.width);
      REQUIRE(max_y - min_y + 1 == r.bbox.height);
    }
  }
}

TEST_CASE("keep_two_largest retains the 100 and 50 pixel regions, drops the 5") {
  LabelMask m(40, 30);
  paint_rect(m, 1, 1, 10, 10);    // 100 px
  paint_rect(m, 20, 1, 10, 5);    // 50 px
  paint_rect(m, 33, 20, 5, 1);    // 5 px
  const LabelMask kept = keep_two_largest(connected_components(m, Connectivity::Eight));
  REQUIRE(kept.ear_pixels() == 150);
  REQUIRE(kept.at(2, 2) == 1);
  REQUIRE(kept.at(3, 22) == 1);
  REQUIRE(kept.at(20, 34) == 0);
}

TEST_CASE("a single region passes through unchanged") {
  LabelMask m(15, 15);
  paint_rect(m, 3, 4, 6, 5);
  const LabelMask kept = postprocess_mask(m);
  REQUIRE(kept.values == m.values);
}

TEST_CASE("two regions pass through unchanged") {
  LabelMask m(20, 10);
  paint_rect(m, 1, 1, 4, 4);
  paint_rect(m, 10, 3, 6, 3);
  const LabelMask kept = postprocess_mask(m);
  REQUIRE(kept.values == m.values);
}

TEST_CASE("equal-size ties keep the raster-earliest regions") {
  LabelMask m(30, 10);
  paint_rect(m, 20, 0, 2, 2);  // first pixel (20, 0)  -> kept
  paint_rect(m, 4, 2, 2, 2);   // first pixel (4, 2)   -> kept
  paint_rect(m, 12, 6, 2, 2);  // first pixel (12, 6)  -> dropped
  const LabelMask kept = keep_two_largest(connected_components(m, Connectivity::Eight));
  REQUIRE(kept.ear_pixels() == 8);
  REQUIRE(kept.at(0, 20) == 1);
  REQUIRE(kept.at(2, 4) == 1);
  REQUIRE(kept.at(6, 12) == 0);
}

TEST_CASE("postprocessing matches the flood-fill + sort oracle on random masks") {
  Rng rng(9003);
  for (int trial = 0; trial < 150; ++trial) {
    const int w = 8 + static_cast<int>(rng.uniform_index(40));
    const int h = 8 + static_cast<int>(rng.uniform_index(40));
    const LabelMask m = oracle::random_mask(rng, w, h, rng.uniform(0.05, 0.6));
    for (auto conn : {Connectivity::Four, Connectivity::Eight}) {
      const LabelMask got = postprocess_mask(m, conn);
      const LabelMask want = oracle::keep_two_largest_reference(m, static_cast<int>(conn));
      REQUIRE(got.values == want.values);
    }
  }
}

TEST_CASE("postprocessed output is a subset with at most two components") {
  Rng rng(9004);
  for (int trial = 0; trial < 60; ++trial) {
    const LabelMask m = oracle::random_mask(rng, 31, 27, 0.35);
    const LabelMask kept = postprocess_mask(m, Connectivity::Eight);
    REQUIRE(connected_components(kept, Connectivity::Eight).regions.size() <= 2);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      if (kept.values[i]) REQUIRE(m.values[i] == 1);
    }
  }
}

TEST_CASE("thresholding is strict: p(ear) must exceed one half") {
  Tensor<float> probs(1, 2, 1, 3);
  probs.plane(0, 1)[0] = 0.5f;   // exact tie -> non-ear
  probs.plane(0, 1)[1] = 0.51f;  // ear
  probs.plane(0, 1)[2] = 0.49f;  // non-ear
  for (int i = 0; i < 3; ++i) probs.plane(0, 0)[i] = 1.0f - probs.plane(0, 1)[i];
  const LabelMask m = threshold_probabilities(probs);
  REQUIRE(m.at(0, 0) == 0);
  REQUIRE(m.at(0, 1) == 1);
  REQUIRE(m.at(0, 2) == 0);
}

TEST_CASE("speckle cleanup keeps the dominant blob bit-identical") {
  // A large blob plus scattered single-pixel false positives; postprocessing
  // must erase the speckles and leave the blob untouched.
  LabelMask noisy(64, 48);
  paint_rect(noisy, 20, 12, 14, 18);
  LabelMask speck_free = noisy;
  const int speck_x[] = {2, 55, 40, 5, 60, 10};
  const int speck_y[] = {3, 5, 40, 44, 30, 25};
  for (int k = 0; k < 6; ++k) noisy.at(speck_y[k], speck_x[k]) = 1;

  // One extra 2x2 companion survives alongside the dominant blob.
  paint_rect(noisy, 50, 44, 2, 2);
  paint_rect(speck_free, 50, 44, 2, 2);

  const LabelMask kept = postprocess_mask(noisy, Connectivity::Eight);
  REQUIRE(kept.values == speck_free.values);
}

TEST_CASE("postprocess thresholds and prunes in one call") {
  const int w = 16, h = 12;
  Tensor<double> probs(1, 2, h, w);
  for (std::size_t i = 0; i < probs.plane_size(); ++i) {
    probs.plane(0, 0)[i] = 0.9;
    probs.plane(0, 1)[i] = 0.1;
  }
  auto set_ear = [&](int y, int x, double p) {
    probs.plane(0, 1)[static_cast<std::size_t>(y) * w + x] = p;
    probs.plane(0, 0)[static_cast<std::size_t>(y) * w + x] = 1.0 - p;
  };
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) set_ear(y, x, 0.8);      // 16 px blob
  for (int y = 8; y < 10; ++y)
    for (int x = 10; x < 13; ++x) set_ear(y, x, 0.7);    // 6 px blob
  set_ear(0, 15, 0.95);                                  // lone pixel, pruned

  const LabelMask m = postprocess(probs);
  REQUIRE(m.ear_pixels() == 22);
  REQUIRE(m.at(0, 15) == 0);
  REQUIRE(m.at(3, 3) == 1);
  REQUIRE(m.at(8, 11) == 1);
}

TEST_CASE("threshold rejects malformed probability tensors") {
  Tensor<float> bad_channels(1, 3, 4, 4);
  REQUIRE_THROWS_AS(threshold_probabilities(bad_channels), std::invalid_argument);
  Tensor<float> bad_batch(2, 2, 4, 4);
  REQUIRE_THROWS_AS(threshold_probabilities(bad_batch), std::invalid_argument);
}
