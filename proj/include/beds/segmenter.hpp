#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "beds/image.hpp"

namespace beds {

// Per-pixel feature planes for one image: RGB and OD values, Gaussian blurs
// of each at sigma 1/2/4, and local 5x5 mean/std of each. 36 planes, all
// roughly unit-scaled.
inline constexpr int kPixelFeatureCount = 36;

struct PixelFeatureMap {
  int width = 0;
  int height = 0;
  std::vector<float> planes;  // plane-major, kPixelFeatureCount * width * height

  PixelFeatureMap() = default;
  PixelFeatureMap(int w, int h)
      : width(w), height(h),
        planes(static_cast<std::size_t>(kPixelFeatureCount) * w * h, 0.0f) {}
  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  const float* plane(int c) const { return &planes[c * pixels()]; }
  float* plane(int c) { return &planes[c * pixels()]; }
};

PixelFeatureMap compute_pixel_features(const RgbImage& image);

// Anything that maps a patch to per-pixel foreground probabilities.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  // probability raster in [0,1], same dimensions as the patch
  virtual std::vector<float> predict_patch(const RgbImage& patch) const = 0;
};

struct SegmenterMeta {
  std::uint64_t seed = 0;
  int subset_id = -1;
  double val_dsc = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  std::vector<double> epoch_val_dsc;     // mean validation DSC after each epoch
  std::vector<double> epoch_train_loss;  // mean cross-entropy per epoch
};

// Logistic regression over the pixel features, standardized per feature.
// Deliberately a weak learner: strong enough to segment, noisy enough that
// bagging has variance to remove.
class LinearPixelSegmenter final : public Segmenter {
 public:
  LinearPixelSegmenter() = default;
  std::vector<float> predict_patch(const RgbImage& patch) const override;
  std::vector<float> predict_features(const PixelFeatureMap& features) const;

  std::vector<double> weights;  // kPixelFeatureCount + 1, bias last
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
  SegmenterMeta meta;
};

struct TrainConfig {
  int max_epochs = 30;
  int patience = 5;            // epochs without validation improvement before stopping
  int batch_size = 256;
  int pixels_per_patch = 1500; // training pixels sampled per patch
  double learning_rate = 0.25;
  double threshold = 0.5;      // probability threshold for validation DSC
  int patch_size = 256;
};

// Pre-extracted training pixels for one patch.
struct PatchSample {
  std::vector<float> x;       // row-major, count * kPixelFeatureCount
  std::vector<std::uint8_t> y;
  int count = 0;
};

PatchSample sample_patch_features(const RgbImage& patch, const BinaryMask& mask,
                                  int pixels_per_patch, std::uint64_t seed);

// Feature maps + labels for the validation set, shareable across models.
struct ValidationSet {
  std::vector<PixelFeatureMap> features;
  std::vector<const BinaryMask*> masks;
};

// Mini-batch SGD on pixel-wise cross-entropy; returns the weights of the
// epoch with the best mean validation DSC.
LinearPixelSegmenter train_on_samples(const std::vector<const PatchSample*>& samples,
                                      const ValidationSet& val, std::uint64_t seed,
                                      const TrainConfig& config);

void save_segmenter(const LinearPixelSegmenter& model, const std::string& path_prefix);
LinearPixelSegmenter load_segmenter(const std::string& path_prefix);

}  // namespace beds
