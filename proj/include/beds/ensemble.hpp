#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "beds/fusion.hpp"
#include "beds/segmenter.hpp"
#include "beds/tiling.hpp"

namespace beds {

// Bootstrap subsets: n index lists of floor(fraction * N) distinct rows,
// each drawn without replacement from its own seed stream so the plan is
// reproducible and order-independent.
struct SubsetPlan {
  int n = 0;
  int dataset_size = 0;
  double fraction = 2.0 / 3.0;
  std::uint64_t master_seed = 0;
  std::vector<std::vector<int>> subsets;  // sorted ascending
};

SubsetPlan sample_subsets(int dataset_size, int n, double fraction, std::uint64_t master_seed);

struct ModelStack {
  std::vector<LinearPixelSegmenter> models;
  SubsetPlan plan;
  std::vector<double> selection_scores;  // best validation DSC per model
};

using PatchPair = std::pair<RgbImage, BinaryMask>;

// Train one reference segmenter: sample pixels from the training patches,
// run SGD, keep the epoch with the best mean validation DSC.
LinearPixelSegmenter train_reference_segmenter(const std::vector<PatchPair>& train_patches,
                                               const std::vector<PatchPair>& val_patches,
                                               std::uint64_t seed,
                                               const TrainConfig& config = {});

// Train plan.n models on their subsets. Per-model seeds are keyed by
// (master_seed, model index), so training order and concurrency do not
// affect the result.
ModelStack train_stack(const std::vector<PatchPair>& dataset,
                       const std::vector<PatchPair>& val_patches, const SubsetPlan& plan,
                       const TrainConfig& config = {});

struct PredictOptions {
  double threshold = 0.5;
  int patch_size = 256;
  int overlap = 20;
};

// Tile, predict per patch, threshold, merge with bitwise AND.
BinaryMask predict_image(const Segmenter& model, const RgbImage& image,
                         const PredictOptions& options = {});

// Same result as calling predict_image per model, but the per-patch feature
// maps are computed once and shared across the stack.
std::vector<BinaryMask> predict_image_stack(const std::vector<const LinearPixelSegmenter*>& models,
                                            const RgbImage& image,
                                            const PredictOptions& options = {});

// Directory of stain{p}_model{q}.png masks -> fully populated MaskGrid.
MaskGrid ingest_external_masks(const std::string& dir, int stains, int models);

void save_stack(const ModelStack& stack, const std::string& dir);
ModelStack load_stack(const std::string& dir);

}  // namespace beds
