#include "beds/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "beds/rng.hpp"

namespace fs = std::filesystem;

namespace beds {

SubsetPlan sample_subsets(int dataset_size, int n, double fraction, std::uint64_t master_seed) {
  if (dataset_size < 1) throw std::invalid_argument("sample_subsets: empty dataset");
  if (n < 1) throw std::invalid_argument("sample_subsets: n must be >= 1");
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("sample_subsets: fraction must be in (0, 1]");
  const int size = static_cast<int>(std::floor(fraction * dataset_size));
  if (size < 1)
    throw std::invalid_argument("sample_subsets: fraction " + std::to_string(fraction) +
                                " of " + std::to_string(dataset_size) + " rows is empty");

  SubsetPlan plan;
  plan.n = n;
  plan.dataset_size = dataset_size;
  plan.fraction = fraction;
  plan.master_seed = master_seed;
  plan.subsets.resize(n);
  for (int q = 0; q < n; ++q) {
    Rng rng(hash_key(master_seed, static_cast<std::uint64_t>(q)));
    plan.subsets[q] = rng.sample_without_replacement(dataset_size, size);
    std::sort(plan.subsets[q].begin(), plan.subsets[q].end());
  }
  return plan;
}

namespace {

void check_patches(const std::vector<PatchPair>& patches, int patch_size, const char* who) {
  if (patches.empty()) throw std::invalid_argument(std::string(who) + ": empty patch set");
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto& [img, mask] = patches[i];
    if (img.width != patch_size || img.height != patch_size)
      throw std::invalid_argument(std::string(who) + ": patch " + std::to_string(i) + " is " +
                                  std::to_string(img.width) + "x" + std::to_string(img.height) +
                                  ", expected " + std::to_string(patch_size) + "x" +
                                  std::to_string(patch_size));
    if (mask.width != img.width || mask.height != img.height)
      throw std::invalid_argument(std::string(who) + ": patch " + std::to_string(i) +
                                  " mask dimensions differ from its image");
  }
}

ValidationSet build_validation(const std::vector<PatchPair>& val_patches) {
  ValidationSet val;
  val.features.reserve(val_patches.size());
  val.masks.reserve(val_patches.size());
  for (const auto& [img, mask] : val_patches) {
    val.features.push_back(compute_pixel_features(img));
    val.masks.push_back(&mask);
  }
  return val;
}

}  // namespace

LinearPixelSegmenter train_reference_segmenter(const std::vector<PatchPair>& train_patches,
                                               const std::vector<PatchPair>& val_patches,
                                               std::uint64_t seed, const TrainConfig& config) {
  check_patches(train_patches, config.patch_size, "train_reference_segmenter(train)");
  check_patches(val_patches, config.patch_size, "train_reference_segmenter(val)");

  std::vector<PatchSample> owned;
  owned.reserve(train_patches.size());
  for (std::size_t i = 0; i < train_patches.size(); ++i)
    owned.push_back(sample_patch_features(train_patches[i].first, train_patches[i].second,
                                          config.pixels_per_patch,
                                          hash_key(seed, i, "pixsample")));
  std::vector<const PatchSample*> samples;
  for (const auto& s : owned) samples.push_back(&s);

  const ValidationSet val = build_validation(val_patches);
  return train_on_samples(samples, val, seed, config);
}

ModelStack train_stack(const std::vector<PatchPair>& dataset,
                       const std::vector<PatchPair>& val_patches, const SubsetPlan& plan,
                       const TrainConfig& config) {
  if (plan.dataset_size != static_cast<int>(dataset.size()))
    throw std::invalid_argument("train_stack: plan covers " + std::to_string(plan.dataset_size) +
                                " rows but dataset has " + std::to_string(dataset.size()));
  check_patches(dataset, config.patch_size, "train_stack(dataset)");
  check_patches(val_patches, config.patch_size, "train_stack(val)");

  // pixel samples are keyed by dataset row, not by model, so models sharing a
  // row share its cached sample and the stack is order-independent
  std::vector<PatchSample> row_samples(dataset.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(dataset.size()); ++i)
    row_samples[i] = sample_patch_features(dataset[i].first, dataset[i].second,
                                           config.pixels_per_patch,
                                           hash_key(plan.master_seed, i, "pixsample"));

  const ValidationSet val = build_validation(val_patches);

  ModelStack stack;
  stack.plan = plan;
  stack.models.resize(plan.n);
  stack.selection_scores.resize(plan.n);
#pragma omp parallel for schedule(dynamic)
  for (int q = 0; q < plan.n; ++q) {
    std::vector<const PatchSample*> samples;
    samples.reserve(plan.subsets[q].size());
    for (int row : plan.subsets[q]) samples.push_back(&row_samples[row]);
    LinearPixelSegmenter model =
        train_on_samples(samples, val, hash_key(plan.master_seed, q, "train"), config);
    model.meta.subset_id = q;
    stack.selection_scores[q] = model.meta.val_dsc;
    stack.models[q] = std::move(model);
  }
  return stack;
}

BinaryMask predict_image(const Segmenter& model, const RgbImage& image,
                         const PredictOptions& options) {
  if (image.width < options.patch_size || image.height < options.patch_size)
    throw std::invalid_argument("predict_image: image " + std::to_string(image.width) + "x" +
                                std::to_string(image.height) + " is smaller than the patch size " +
                                std::to_string(options.patch_size));
  const TileGrid grid =
      plan_tiles(image.width, image.height, options.patch_size, options.overlap);
  std::vector<BinaryMask> patch_masks(grid.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(grid.size()); ++t) {
    const RgbImage patch = extract_patch(image, grid, t);
    const std::vector<float> probs = model.predict_patch(patch);
    BinaryMask m(options.patch_size, options.patch_size);
    for (std::size_t i = 0; i < m.data.size(); ++i)
      m.data[i] = probs[i] > options.threshold ? 1 : 0;
    patch_masks[t] = std::move(m);
  }
  return merge_tiles(patch_masks, grid);
}

std::vector<BinaryMask> predict_image_stack(
    const std::vector<const LinearPixelSegmenter*>& models, const RgbImage& image,
    const PredictOptions& options) {
  if (models.empty()) throw std::invalid_argument("predict_image_stack: no models");
  if (image.width < options.patch_size || image.height < options.patch_size)
    throw std::invalid_argument("predict_image_stack: image is smaller than the patch size");
  const TileGrid grid =
      plan_tiles(image.width, image.height, options.patch_size, options.overlap);

  std::vector<std::vector<BinaryMask>> per_model(models.size());
  for (auto& v : per_model) v.resize(grid.size());

#pragma omp parallel for schedule(dynamic)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(grid.size()); ++t) {
    const RgbImage patch = extract_patch(image, grid, t);
    const PixelFeatureMap fm = compute_pixel_features(patch);
    for (std::size_t m = 0; m < models.size(); ++m) {
      const std::vector<float> probs = models[m]->predict_features(fm);
      BinaryMask mask(options.patch_size, options.patch_size);
      for (std::size_t i = 0; i < mask.data.size(); ++i)
        mask.data[i] = probs[i] > options.threshold ? 1 : 0;
      per_model[m][t] = std::move(mask);
    }
  }

  std::vector<BinaryMask> out;
  out.reserve(models.size());
  for (std::size_t m = 0; m < models.size(); ++m)
    out.push_back(merge_tiles(per_model[m], grid));
  return out;
}

MaskGrid ingest_external_masks(const std::string& dir, int stains, int models) {
  if (stains < 1 || models < 1)
    throw std::invalid_argument("ingest_external_masks: need at least one stain and one model");
  MaskGrid grid(stains, models);
  int w = -1, h = -1;
  for (int p = 0; p < stains; ++p) {
    for (int q = 0; q < models; ++q) {
      const std::string name = "stain" + std::to_string(p) + "_model" + std::to_string(q) + ".png";
      const fs::path path = fs::path(dir) / name;
      if (!fs::exists(path))
        throw std::runtime_error("ingest_external_masks: missing mask file " + name + " in " +
                                 dir);
      BinaryMask mask = load_mask(path.string());
      if (w < 0) {
        w = mask.width;
        h = mask.height;
      } else if (mask.width != w || mask.height != h) {
        throw std::runtime_error("ingest_external_masks: " + name + " is " +
                                 std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                                 " but earlier masks are " + std::to_string(w) + "x" +
                                 std::to_string(h));
      }
      grid.at(p, q) = std::move(mask);
    }
  }
  return grid;
}

void save_stack(const ModelStack& stack, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json j;
  j["n"] = stack.plan.n;
  j["dataset_size"] = stack.plan.dataset_size;
  j["fraction"] = stack.plan.fraction;
  j["master_seed"] = stack.plan.master_seed;
  j["subsets"] = stack.plan.subsets;
  j["selection_scores"] = stack.selection_scores;
  std::ofstream out(fs::path(dir) / "stack.json");
  if (!out) throw std::runtime_error("cannot write stack manifest in " + dir);
  out << j.dump(2) << "\n";

  char name[32];
  for (std::size_t q = 0; q < stack.models.size(); ++q) {
    std::snprintf(name, sizeof(name), "model_%03zu", q);
    save_segmenter(stack.models[q], (fs::path(dir) / name).string());
  }
}

ModelStack load_stack(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "stack.json");
  if (!in) throw std::runtime_error("cannot read stack manifest in " + dir);
  nlohmann::json j;
  in >> j;

  ModelStack stack;
  stack.plan.n = j.at("n").get<int>();
  stack.plan.dataset_size = j.at("dataset_size").get<int>();
  stack.plan.fraction = j.at("fraction").get<double>();
  stack.plan.master_seed = j.at("master_seed").get<std::uint64_t>();
  stack.plan.subsets = j.at("subsets").get<std::vector<std::vector<int>>>();
  stack.selection_scores = j.at("selection_scores").get<std::vector<double>>();

  char name[32];
  stack.models.reserve(stack.plan.n);
  for (int q = 0; q < stack.plan.n; ++q) {
    std::snprintf(name, sizeof(name), "model_%03d", q);
    stack.models.push_back(load_segmenter((fs::path(dir) / name).string()));
  }
  return stack;
}

}  // namespace beds
