#pragma once

#include <vector>

#include "beds/fusion.hpp"
#include "beds/image.hpp"
#include "beds/metrics.hpp"
#include "beds/segmenter.hpp"
#include "beds/stain.hpp"
#include "beds/tiling.hpp"

// Single-threaded reference implementations of the parallel kernels. They are
// written as literal transcriptions of the definitions (per-pixel counting,
// plain loops) and are kept independent of the production code paths, so the
// test suite can check the OpenMP kernels against them and the benchmark can
// measure the speedup.
namespace beds::serial {

BinaryMask majority_vote(const std::vector<BinaryMask>& masks);
BinaryMask fuse_all(const MaskGrid& grid);
BinaryMask fuse_model_stain(const MaskGrid& grid);
BinaryMask fuse_stain_model(const MaskGrid& grid);

double dsc(const BinaryMask& pred, const BinaryMask& gt);

OdImage rgb_to_od(const RgbImage& image, double i0 = 255.0);

ConcentrationMap solve_concentrations(const RgbImage& image, const StainModel& model);

PixelFeatureMap compute_pixel_features(const RgbImage& image);

BinaryMask merge_tiles(const std::vector<BinaryMask>& patch_masks, const TileGrid& grid);

// brute-force nearest-background search; O(n^2), small masks only
std::vector<double> squared_distance_transform_brute(const BinaryMask& mask);

}  // namespace beds::serial
