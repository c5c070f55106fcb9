#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "beds/ensemble.hpp"
#include "beds/metrics.hpp"
#include "test_util.hpp"

using namespace beds;

namespace {

// crisp two-color task: nuclei strictly darker in blue OD than background
void render_separable(RgbImage& img, BinaryMask& mask, int w, int h, std::uint64_t seed) {
  img = RgbImage(w, h);
  mask = BinaryMask(w, h);
  beds::Rng rng(seed);
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    img.data[i * 3] = 235;
    img.data[i * 3 + 1] = 160;
    img.data[i * 3 + 2] = 185;
  }
  const int blobs = 3 + static_cast<int>(rng.below(3));
  for (int k = 0; k < blobs; ++k) {
    const double cx = rng.uniform(10, w - 10), cy = rng.uniform(10, h - 10);
    const double r = rng.uniform(9, 16);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) {
          mask.at(x, y) = 1;
          std::uint8_t* p = img.px(x, y);
          p[0] = 110;
          p[1] = 85;
          p[2] = 150;
        }
  }
}

std::vector<PatchPair> separable_patches(int count, int size, std::uint64_t seed) {
  std::vector<PatchPair> out;
  for (int i = 0; i < count; ++i) {
    RgbImage img;
    BinaryMask mask;
    render_separable(img, mask, size, size, seed + i);
    out.emplace_back(std::move(img), std::move(mask));
  }
  return out;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.patch_size = 64;
  cfg.max_epochs = 20;
  cfg.pixels_per_patch = 1200;
  return cfg;
}

class ConstSegmenter final : public Segmenter {
 public:
  explicit ConstSegmenter(float p) : p_(p) {}
  std::vector<float> predict_patch(const RgbImage& patch) const override {
    return std::vector<float>(patch.pixels(), p_);
  }

 private:
  float p_;
};

// pure function of the single pixel's color
class ColorSegmenter final : public Segmenter {
 public:
  std::vector<float> predict_patch(const RgbImage& patch) const override {
    std::vector<float> probs(patch.pixels());
    for (std::size_t i = 0; i < probs.size(); ++i)
      probs[i] = patch.data[i * 3 + 2] < 160 ? 0.9f : 0.1f;
    return probs;
  }
};

}  // namespace

TEST_SUITE("ensemble") {

TEST_CASE("subset plan: the paper-scale split gives 904 of 1356") {
  const SubsetPlan plan = sample_subsets(1356, 33, 2.0 / 3.0, 42);
  REQUIRE(plan.subsets.size() == 33);
  for (const auto& s : plan.subsets) {
    REQUIRE(s.size() == 904);
    REQUIRE(std::is_sorted(s.begin(), s.end()));
    std::set<int> distinct(s.begin(), s.end());
    REQUIRE(distinct.size() == s.size());
    REQUIRE(s.front() >= 0);
    REQUIRE(s.back() < 1356);
  }
  // at least two subsets differ
  CHECK(plan.subsets[0] != plan.subsets[1]);
  // reproducible from the master seed
  const SubsetPlan again = sample_subsets(1356, 33, 2.0 / 3.0, 42);
  CHECK(plan.subsets == again.subsets);
}

TEST_CASE("subset plan: fraction one selects everything") {
  const SubsetPlan plan = sample_subsets(10, 3, 1.0, 7);
  for (const auto& s : plan.subsets) {
    REQUIRE(s.size() == 10);
    for (int i = 0; i < 10; ++i) REQUIRE(s[i] == i);
  }
}

TEST_CASE("subset plan: tiny datasets still sample distinct indices") {
  const SubsetPlan plan = sample_subsets(3, 2, 2.0 / 3.0, 5);
  for (const auto& s : plan.subsets) {
    REQUIRE(s.size() == 2);
    REQUIRE(s[0] != s[1]);
    for (int v : s) REQUIRE((v >= 0 && v < 3));
  }
}

TEST_CASE("subset plan input validation") {
  CHECK_THROWS_AS(sample_subsets(10, 3, 0.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(sample_subsets(10, 3, 1.5, 0), std::invalid_argument);
  CHECK_THROWS_AS(sample_subsets(10, 0, 0.5, 0), std::invalid_argument);
  CHECK_THROWS_AS(sample_subsets(2, 1, 0.4, 0), std::invalid_argument);  // empty subset
}

TEST_CASE("training solves a linearly separable task") {
  const auto train = separable_patches(3, 64, 100);
  const auto val = separable_patches(1, 64, 200);
  const LinearPixelSegmenter model = train_reference_segmenter(train, val, 1, small_config());
  CHECK(model.meta.val_dsc >= 0.95);
  CHECK(model.meta.epochs_run <= 20);
}

TEST_CASE("all-background task predicts all-background with DSC 1") {
  std::vector<PatchPair> data;
  RgbImage img(64, 64);
  for (auto& v : img.data) v = 220;
  data.emplace_back(img, BinaryMask(64, 64));
  const LinearPixelSegmenter model = train_reference_segmenter(data, data, 3, small_config());
  CHECK(model.meta.val_dsc == doctest::Approx(1.0));
  PredictOptions opt;
  opt.patch_size = 64;
  const BinaryMask pred = predict_image(model, img, opt);
  for (auto v : pred.data) REQUIRE(v == 0);
}

TEST_CASE("same seed trains bit-identical models") {
  const auto train = separable_patches(2, 64, 300);
  const auto val = separable_patches(1, 64, 400);
  const LinearPixelSegmenter a = train_reference_segmenter(train, val, 9, small_config());
  const LinearPixelSegmenter b = train_reference_segmenter(train, val, 9, small_config());
  CHECK(a.weights == b.weights);
  CHECK(a.feature_mean == b.feature_mean);
  CHECK(a.meta.val_dsc == b.meta.val_dsc);
  CHECK(a.meta.best_epoch == b.meta.best_epoch);

  const LinearPixelSegmenter c = train_reference_segmenter(train, val, 10, small_config());
  CHECK(a.weights != c.weights);  // seed actually matters
}

TEST_CASE("checkpoint selection returns at least the first epoch's score") {
  const auto train = separable_patches(2, 64, 500);
  const auto val = separable_patches(1, 64, 600);
  TrainConfig cfg = small_config();
  cfg.max_epochs = 6;
  const LinearPixelSegmenter model = train_reference_segmenter(train, val, 4, cfg);
  CHECK(model.meta.best_epoch >= 1);
  CHECK(model.meta.val_dsc > 0.0);
  REQUIRE(!model.meta.epoch_val_dsc.empty());
  CHECK(model.meta.val_dsc >= model.meta.epoch_val_dsc.front());
  for (double d : model.meta.epoch_val_dsc) CHECK(model.meta.val_dsc >= d);
  // training loss stays finite every epoch
  REQUIRE(model.meta.epoch_train_loss.size() == model.meta.epoch_val_dsc.size());
  for (double loss : model.meta.epoch_train_loss) REQUIRE(std::isfinite(loss));
}

TEST_CASE("train_stack trains one model per subset, deterministically") {
  const auto dataset = separable_patches(6, 64, 700);
  const auto val = separable_patches(1, 64, 800);
  const SubsetPlan plan = sample_subsets(6, 3, 2.0 / 3.0, 21);
  const ModelStack stack = train_stack(dataset, val, plan, small_config());
  REQUIRE(stack.models.size() == 3);
  std::set<int> subset_ids;
  for (const auto& m : stack.models) subset_ids.insert(m.meta.subset_id);
  CHECK(subset_ids == std::set<int>{0, 1, 2});
  CHECK(stack.selection_scores.size() == 3);

  const ModelStack again = train_stack(dataset, val, plan, small_config());
  for (int q = 0; q < 3; ++q) REQUIRE(stack.models[q].weights == again.models[q].weights);
}

TEST_CASE("train_stack rejects a mismatched plan") {
  const auto dataset = separable_patches(4, 64, 900);
  const SubsetPlan plan = sample_subsets(6, 2, 0.5, 0);
  CHECK_THROWS_AS(train_stack(dataset, dataset, plan, small_config()), std::invalid_argument);
}

TEST_CASE("predict_image with constant classifiers") {
  RgbImage img = testutil::random_image(160, 120, 1);
  PredictOptions opt;
  opt.patch_size = 64;
  opt.overlap = 16;

  const BinaryMask ones = predict_image(ConstSegmenter(1.0f), img, opt);
  CHECK(ones.width == 160);
  CHECK(ones.height == 120);
  for (auto v : ones.data) REQUIRE(v == 1);

  const BinaryMask zeros = predict_image(ConstSegmenter(0.4f), img, opt);
  for (auto v : zeros.data) REQUIRE(v == 0);
}

TEST_CASE("predict_image rejects undersized images") {
  PredictOptions opt;
  opt.patch_size = 64;
  CHECK_THROWS_WITH_AS(predict_image(ConstSegmenter(1.0f), RgbImage(32, 80), opt),
                       doctest::Contains("smaller than the patch size"), std::invalid_argument);
}

TEST_CASE("tiled prediction with a color-only segmenter equals the full-image pass") {
  const ColorSegmenter seg;
  PredictOptions opt;
  opt.patch_size = 64;
  opt.overlap = 20;
  for (int trial = 0; trial < 3; ++trial) {
    const RgbImage img = testutil::random_image(200, 170, 50 + trial);
    const BinaryMask tiled = predict_image(seg, img, opt);
    const std::vector<float> full = seg.predict_patch(img);
    BinaryMask direct(img.width, img.height);
    for (std::size_t i = 0; i < direct.data.size(); ++i)
      direct.data[i] = full[i] > opt.threshold ? 1 : 0;
    REQUIRE(tiled == direct);
  }
}

TEST_CASE("stack-wide prediction equals per-model prediction") {
  const auto dataset = separable_patches(4, 64, 1000);
  const auto val = separable_patches(1, 64, 1100);
  const SubsetPlan plan = sample_subsets(4, 2, 0.75, 31);
  const ModelStack stack = train_stack(dataset, val, plan, small_config());

  RgbImage img;
  BinaryMask mask;
  render_separable(img, mask, 150, 130, 77);
  PredictOptions opt;
  opt.patch_size = 64;

  std::vector<const LinearPixelSegmenter*> models;
  for (const auto& m : stack.models) models.push_back(&m);
  const std::vector<BinaryMask> batch = predict_image_stack(models, img, opt);
  REQUIRE(batch.size() == 2);
  for (std::size_t q = 0; q < models.size(); ++q)
    REQUIRE(batch[q] == predict_image(*models[q], img, opt));
  // and the weak models actually segment the easy task
  CHECK(dsc(batch[0], mask) > 0.9);
}

TEST_CASE("stack save/load round trip preserves predictions") {
  testutil::TempDir tmp;
  const auto dataset = separable_patches(3, 64, 1200);
  const SubsetPlan plan = sample_subsets(3, 2, 1.0, 3);
  const ModelStack stack = train_stack(dataset, dataset, plan, small_config());
  save_stack(stack, tmp.str("stack"));
  const ModelStack back = load_stack(tmp.str("stack"));
  REQUIRE(back.models.size() == stack.models.size());
  CHECK(back.plan.subsets == stack.plan.subsets);
  for (std::size_t q = 0; q < stack.models.size(); ++q) {
    REQUIRE(back.models[q].weights == stack.models[q].weights);
    REQUIRE(back.models[q].meta.subset_id == stack.models[q].meta.subset_id);
    REQUIRE(back.models[q].meta.val_dsc == stack.models[q].meta.val_dsc);
  }
}

TEST_CASE("ingest_external_masks reads a complete grid") {
  testutil::TempDir tmp;
  std::vector<BinaryMask> originals;
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 3; ++q) {
      const BinaryMask m = testutil::random_mask(8, 8, p * 10 + q);
      originals.push_back(m);
      save_mask(m, tmp.str("stain" + std::to_string(p) + "_model" + std::to_string(q) + ".png"));
    }
  const MaskGrid grid = ingest_external_masks(tmp.str(), 2, 3);
  CHECK(grid.stains == 2);
  CHECK(grid.models == 3);
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 3; ++q) REQUIRE(grid.at(p, q) == originals[p * 3 + q]);

  // single-cell grid passthrough
  const MaskGrid single = ingest_external_masks(tmp.str(), 1, 1);
  CHECK(single.at(0, 0) == originals[0]);
}

TEST_CASE("ingest_external_masks names the missing file") {
  testutil::TempDir tmp;
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 2; ++q) {
      if (p == 1 && q == 1) continue;
      save_mask(testutil::random_mask(6, 6, q),
                tmp.str("stain" + std::to_string(p) + "_model" + std::to_string(q) + ".png"));
    }
  CHECK_THROWS_WITH_AS(ingest_external_masks(tmp.str(), 2, 2),
                       doctest::Contains("stain1_model1.png"), std::runtime_error);
}

TEST_CASE("ingest_external_masks names dimension mismatches") {
  testutil::TempDir tmp;
  save_mask(testutil::random_mask(6, 6, 0), tmp.str("stain0_model0.png"));
  save_mask(testutil::random_mask(7, 6, 1), tmp.str("stain0_model1.png"));
  CHECK_THROWS_WITH_AS(ingest_external_masks(tmp.str(), 1, 2),
                       doctest::Contains("stain0_model1.png"), std::runtime_error);
}

}  // TEST_SUITE
