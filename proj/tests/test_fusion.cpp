#include <doctest.h>

#include "beds/fusion.hpp"
#include "beds/serial.hpp"
#include "test_util.hpp"

using namespace beds;

namespace {

BinaryMask px(int v) {
  BinaryMask m(1, 1);
  m.data[0] = static_cast<std::uint8_t>(v);
  return m;
}

// grid of 1x1 masks from row-major values
MaskGrid grid_1px(int stains, int models, const std::vector<int>& values) {
  MaskGrid g(stains, models);
  for (int p = 0; p < stains; ++p)
    for (int q = 0; q < models; ++q) g.at(p, q) = px(values[p * models + q]);
  return g;
}

MaskGrid random_grid(int stains, int models, int w, int h, std::uint64_t seed) {
  MaskGrid g(stains, models);
  for (int p = 0; p < stains; ++p)
    for (int q = 0; q < models; ++q)
      g.at(p, q) = testutil::random_mask(w, h, seed * 1000 + p * 100 + q);
  return g;
}

MaskGrid transpose(const MaskGrid& g) {
  MaskGrid t(g.models, g.stains);
  for (int p = 0; p < g.stains; ++p)
    for (int q = 0; q < g.models; ++q) t.at(q, p) = g.at(p, q);
  return t;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("strict majority over 231 masks: 116 wins, 115 loses") {
  // m=6, n=33 -> (m+1)n = 231, threshold 115.5
  for (int ones : {116, 115}) {
    std::vector<BinaryMask> masks;
    for (int i = 0; i < 231; ++i) masks.push_back(px(i < ones ? 1 : 0));
    const BinaryMask out = majority_vote(masks);
    CHECK(int(out.data[0]) == (ones == 116 ? 1 : 0));
  }
}

TEST_CASE("exact ties go to background") {
  std::vector<BinaryMask> masks = {px(1), px(1), px(0), px(0)};
  CHECK(majority_vote(masks).data[0] == 0);
}

TEST_CASE("majority vote of k copies is the identity") {
  const BinaryMask m = testutil::random_mask(17, 13, 77);
  for (int k : {1, 2, 5}) {
    std::vector<BinaryMask> masks(k, m);
    CHECK(majority_vote(masks) == m);
  }
}

TEST_CASE("majority vote input validation") {
  CHECK_THROWS_AS(majority_vote({}), std::invalid_argument);
  std::vector<BinaryMask> mixed = {BinaryMask(2, 2), BinaryMask(3, 2)};
  CHECK_THROWS_AS(majority_vote(mixed), std::invalid_argument);
}

TEST_CASE("1x1 grid fusion is the identity") {
  MaskGrid g(1, 1);
  g.at(0, 0) = testutil::random_mask(9, 9, 5);
  CHECK(fuse_all(g) == g.at(0, 0));
  CHECK(fuse_model_stain(g) == g.at(0, 0));
  CHECK(fuse_stain_model(g) == g.at(0, 0));
}

TEST_CASE("hand-counted 3x3 grid: flat and model-stain fusion disagree") {
  // stain rows (1,1,0), (1,1,0), (0,0,0): 4 of 9 ones
  const MaskGrid g = grid_1px(3, 3, {1, 1, 0, 1, 1, 0, 0, 0, 0});
  CHECK(fuse_all(g).data[0] == 0);         // 4 <= 4.5
  CHECK(fuse_model_stain(g).data[0] == 1); // row votes 1,1,0 -> majority 1
}

TEST_CASE("hand-counted 3x3 grid: stain-model column case") {
  // model columns (1,1,0), (1,0,0), (1,0,0)
  const MaskGrid g = grid_1px(3, 3, {1, 1, 1, 1, 0, 0, 0, 0, 0});
  CHECK(fuse_stain_model(g).data[0] == 0);  // column votes 1,0,0
  CHECK(fuse_all(g).data[0] == 0);          // 4 of 9
}

TEST_CASE("grid of identical masks fuses to that mask") {
  const BinaryMask m = testutil::random_mask(11, 7, 3);
  MaskGrid g(3, 4);
  for (auto& slot : g.masks) slot = m;
  CHECK(fuse_all(g) == m);
  CHECK(fuse_model_stain(g) == m);
  CHECK(fuse_stain_model(g) == m);
}

TEST_CASE("degenerate single-row and single-column grids") {
  MaskGrid row(1, 5);
  for (int q = 0; q < 5; ++q) row.at(0, q) = testutil::random_mask(8, 8, q);
  std::vector<BinaryMask> row_masks(row.masks);
  CHECK(fuse_model_stain(row) == majority_vote(row_masks));
  CHECK(fuse_all(row) == majority_vote(row_masks));

  MaskGrid col(5, 1);
  for (int p = 0; p < 5; ++p) col.at(p, 0) = testutil::random_mask(8, 8, 10 + p);
  std::vector<BinaryMask> col_masks(col.masks);
  CHECK(fuse_stain_model(col) == majority_vote(col_masks));
}

TEST_CASE("transpose symmetry of the two hierarchies") {
  for (int trial = 0; trial < 20; ++trial) {
    const MaskGrid g = random_grid(2 + trial % 3, 2 + (trial / 3) % 4, 6, 5, trial);
    CHECK(fuse_stain_model(g) == fuse_model_stain(transpose(g)));
  }
}

TEST_CASE("fuse_all is invariant to any relabeling of grid slots") {
  beds::Rng rng(4);
  const MaskGrid g = random_grid(3, 4, 5, 5, 9);
  MaskGrid shuffled = g;
  std::vector<int> perm(12);
  for (int i = 0; i < 12; ++i) perm[i] = i;
  rng.shuffle(perm);
  for (int i = 0; i < 12; ++i) shuffled.masks[i] = g.masks[perm[i]];
  CHECK(fuse_all(shuffled) == fuse_all(g));
}

TEST_CASE("hierarchies are invariant to within-level permutations") {
  beds::Rng rng(6);
  const MaskGrid g = random_grid(3, 5, 4, 4, 21);
  // permute models within each stain row
  MaskGrid perm_models = g;
  std::vector<int> mp(5);
  for (int i = 0; i < 5; ++i) mp[i] = i;
  rng.shuffle(mp);
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 5; ++q) perm_models.at(p, q) = g.at(p, mp[q]);
  CHECK(fuse_model_stain(perm_models) == fuse_model_stain(g));
  // permute stain rows
  MaskGrid perm_stains = g;
  std::vector<int> sp = {2, 0, 1};
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 5; ++q) perm_stains.at(p, q) = g.at(sp[p], q);
  CHECK(fuse_model_stain(perm_stains) == fuse_model_stain(g));
}

TEST_CASE("monotonicity: flipping an input pixel up never flips an output down") {
  beds::Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    MaskGrid g = random_grid(3, 3, 4, 4, 100 + trial);
    const BinaryMask base_all = fuse_all(g);
    const BinaryMask base_ms = fuse_model_stain(g);
    const BinaryMask base_sm = fuse_stain_model(g);
    // flip one random zero to one
    const int slot = static_cast<int>(rng.below(9));
    const int pix = static_cast<int>(rng.below(16));
    if (g.masks[slot].data[pix] == 1) continue;
    g.masks[slot].data[pix] = 1;
    const BinaryMask up_all = fuse_all(g);
    const BinaryMask up_ms = fuse_model_stain(g);
    const BinaryMask up_sm = fuse_stain_model(g);
    for (int i = 0; i < 16; ++i) {
      REQUIRE(up_all.data[i] >= base_all.data[i]);
      REQUIRE(up_ms.data[i] >= base_ms.data[i]);
      REQUIRE(up_sm.data[i] >= base_sm.data[i]);
    }
  }
}

TEST_CASE("unanimity: agreeing pixels pass through every topology") {
  MaskGrid g = random_grid(3, 4, 6, 6, 33);
  // force agreement at a few pixels
  for (auto& m : g.masks) {
    m.data[0] = 1;
    m.data[1] = 0;
  }
  for (const BinaryMask& fused : {fuse_all(g), fuse_model_stain(g), fuse_stain_model(g)}) {
    CHECK(fused.data[0] == 1);
    CHECK(fused.data[1] == 0);
  }
}

TEST_CASE("all topologies match the literal per-pixel counting reference") {
  beds::Rng rng(55);
  for (int trial = 0; trial < 1000; ++trial) {
    const int stains = 1 + static_cast<int>(rng.below(4));
    const int models = 1 + static_cast<int>(rng.below(5));
    const MaskGrid g = random_grid(stains, models, 4, 4, 7000 + trial);
    REQUIRE(fuse_all(g) == serial::fuse_all(g));
    REQUIRE(fuse_model_stain(g) == serial::fuse_model_stain(g));
    REQUIRE(fuse_stain_model(g) == serial::fuse_stain_model(g));
    std::vector<BinaryMask> flat(g.masks);
    REQUIRE(majority_vote(flat) == serial::majority_vote(flat));
  }
}

}  // TEST_SUITE
