#pragma once

#include <vector>

#include "beds/image.hpp"

namespace beds {

// The (m+1) x n array of predicted masks for one test image: stain style p
// (row, p=0 is the original image) by ensemble model q (column).
struct MaskGrid {
  int stains = 0;
  int models = 0;
  std::vector<BinaryMask> masks;  // row-major, masks[p * models + q]

  MaskGrid() = default;
  MaskGrid(int s, int n) : stains(s), models(n), masks(static_cast<std::size_t>(s) * n) {}
  BinaryMask& at(int p, int q) { return masks[static_cast<std::size_t>(p) * models + q]; }
  const BinaryMask& at(int p, int q) const {
    return masks[static_cast<std::size_t>(p) * models + q];
  }
};

void validate_grid(const MaskGrid& grid);

// Pixel-wise majority vote: output 1 iff strictly more than half of the
// inputs are 1; exact ties go to background.
BinaryMask majority_vote(const std::vector<BinaryMask>& masks);

// One vote over all (m+1)*n masks at once.
BinaryMask fuse_all(const MaskGrid& grid);

// Vote over models within each stain row, then vote the per-stain results.
BinaryMask fuse_model_stain(const MaskGrid& grid);

// Vote over stains within each model column, then vote the per-model results.
BinaryMask fuse_stain_model(const MaskGrid& grid);

}  // namespace beds
