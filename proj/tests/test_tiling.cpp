#include <doctest.h>

#include <cstring>

#include "beds/tiling.hpp"
#include "test_util.hpp"

using namespace beds;

TEST_SUITE("tiling") {

TEST_CASE("plan_tiles: image equal to patch yields a single origin") {
  const TileGrid g = plan_tiles(256, 256, 256, 20);
  CHECK(g.x_origins == std::vector<int>{0});
  CHECK(g.y_origins == std::vector<int>{0});
  CHECK(g.size() == 1);
}

TEST_CASE("plan_tiles: 1000px axis at 256/20 gives the clamped 5-origin plan") {
  const TileGrid g = plan_tiles(1000, 1000, 256, 20);
  CHECK(g.x_origins == std::vector<int>{0, 236, 472, 708, 744});
  CHECK(g.y_origins == std::vector<int>{0, 236, 472, 708, 744});
  CHECK(g.size() == 25);
}

TEST_CASE("plan_tiles: 512px axis clamps the third origin to 256") {
  const TileGrid g = plan_tiles(512, 512, 256, 20);
  CHECK(g.x_origins == std::vector<int>{0, 236, 256});
  CHECK(g.size() == 9);
}

TEST_CASE("plan_tiles rejects bad configurations") {
  CHECK_THROWS_AS(plan_tiles(200, 300, 256, 20), std::invalid_argument);
  CHECK_THROWS_AS(plan_tiles(300, 200, 256, 20), std::invalid_argument);
  CHECK_THROWS_AS(plan_tiles(300, 300, 256, 256), std::invalid_argument);
  CHECK_THROWS_AS(plan_tiles(300, 300, 256, -1), std::invalid_argument);
}

TEST_CASE("coverage: every pixel lies in at least one patch") {
  beds::Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const int p = 4 + static_cast<int>(rng.below(60));
    const int o = static_cast<int>(rng.below(p));
    const int w = p + static_cast<int>(rng.below(200));
    const int h = p + static_cast<int>(rng.below(200));
    const TileGrid g = plan_tiles(w, h, p, o);

    std::vector<int> cover_x(w, 0), cover_y(h, 0);
    for (int ox : g.x_origins) {
      REQUIRE(ox >= 0);
      REQUIRE(ox + p <= w);
      for (int x = ox; x < ox + p; ++x) ++cover_x[x];
    }
    for (int oy : g.y_origins) {
      REQUIRE(oy >= 0);
      REQUIRE(oy + p <= h);
      for (int y = oy; y < oy + p; ++y) ++cover_y[y];
    }
    for (int x = 0; x < w; ++x) REQUIRE(cover_x[x] >= 1);
    for (int y = 0; y < h; ++y) REQUIRE(cover_y[y] >= 1);

    // adjacent non-clamped origins share exactly `o` pixels
    for (std::size_t i = 0; i + 2 < g.x_origins.size(); ++i)
      CHECK(g.x_origins[i + 1] - g.x_origins[i] == p - o);
  }
}

TEST_CASE("extract_patch basics") {
  const RgbImage img = testutil::random_image(300, 280, 7);
  const TileGrid g = plan_tiles(300, 280, 64, 16);

  const RgbImage first = extract_patch(img, g, 0);
  CHECK(first.width == 64);
  CHECK(first.height == 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      REQUIRE(std::memcmp(first.px(x, y), img.px(x, y), 3) == 0);

  // last patch's bottom-right corner is the image's bottom-right corner
  const RgbImage last = extract_patch(img, g, g.size() - 1);
  CHECK(std::memcmp(last.px(63, 63), img.px(299, 279), 3) == 0);

  CHECK_THROWS_AS(extract_patch(img, g, g.size()), std::out_of_range);
}

TEST_CASE("extract_patch of a constant image is constant") {
  RgbImage img(100, 100);
  std::fill(img.data.begin(), img.data.end(), std::uint8_t{77});
  const TileGrid g = plan_tiles(100, 100, 32, 8);
  for (std::size_t t = 0; t < g.size(); ++t) {
    const RgbImage patch = extract_patch(img, g, t);
    for (auto v : patch.data) REQUIRE(v == 77);
  }
}

TEST_CASE("merge_tiles: single patch passthrough and AND semantics") {
  {
    const TileGrid g = plan_tiles(32, 32, 32, 4);
    const BinaryMask m = testutil::random_mask(32, 32, 3);
    CHECK(merge_tiles({m}, g) == m);
  }
  {
    // two patches sharing a 4-wide band: ones AND zeros -> zeros in the band
    const TileGrid g = plan_tiles(12, 8, 8, 4);
    REQUIRE(g.x_origins == std::vector<int>{0, 4});
    BinaryMask ones(8, 8, 1), zeros(8, 8, 0);
    const BinaryMask merged = merge_tiles({ones, zeros}, g);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 12; ++x) {
        const int expect = x < 4 ? 1 : 0;  // band [4,8) is AND(1,0)=0, tail [8,12) is patch 2
        REQUIRE(merged.at(x, y) == expect);
      }
    }
  }
  {
    const TileGrid g = plan_tiles(50, 50, 16, 6);
    std::vector<BinaryMask> all_ones(g.size(), BinaryMask(16, 16, 1));
    const BinaryMask merged = merge_tiles(all_ones, g);
    for (auto v : merged.data) REQUIRE(v == 1);
  }
}

TEST_CASE("merge_tiles validates inputs") {
  const TileGrid g = plan_tiles(32, 32, 16, 4);
  std::vector<BinaryMask> too_few(2, BinaryMask(16, 16));
  CHECK_THROWS_AS(merge_tiles(too_few, g), std::invalid_argument);
  std::vector<BinaryMask> wrong_size(g.size(), BinaryMask(8, 8));
  CHECK_THROWS_AS(merge_tiles(wrong_size, g), std::invalid_argument);
}

TEST_CASE("merge after per-patch prediction commutes with full-image prediction") {
  // predictor that is a pure function of the single pixel's color
  auto predict = [](const RgbImage& img) {
    BinaryMask m(img.width, img.height);
    for (std::size_t i = 0; i < m.data.size(); ++i)
      m.data[i] = img.data[i * 3] > img.data[i * 3 + 2] ? 1 : 0;  // r > b
    return m;
  };
  beds::Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const int w = 64 + static_cast<int>(rng.below(64));
    const int h = 64 + static_cast<int>(rng.below(64));
    const RgbImage img = testutil::random_image(w, h, 100 + trial);
    const TileGrid g = plan_tiles(w, h, 32, 5);
    std::vector<BinaryMask> patch_masks;
    for (std::size_t t = 0; t < g.size(); ++t)
      patch_masks.push_back(predict(extract_patch(img, g, t)));
    CHECK(merge_tiles(patch_masks, g) == predict(img));
  }
}

TEST_CASE("merged output never exceeds any covering patch") {
  beds::Rng rng(21);
  const TileGrid g = plan_tiles(40, 40, 16, 7);
  std::vector<BinaryMask> masks;
  for (std::size_t t = 0; t < g.size(); ++t)
    masks.push_back(testutil::random_mask(16, 16, 1000 + t, 0.7));
  const BinaryMask merged = merge_tiles(masks, g);
  const std::size_t nx = g.x_origins.size();
  for (std::size_t t = 0; t < g.size(); ++t) {
    const int ox = g.x_origins[t % nx], oy = g.y_origins[t / nx];
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        REQUIRE(merged.at(ox + x, oy + y) <= masks[t].at(x, y));
  }
}

}  // TEST_SUITE
