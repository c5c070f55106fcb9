#pragma once

#include <vector>

#include "beds/image.hpp"

namespace beds {

// Deterministic tiling plan: fixed-size overlapping patches covering the
// whole canvas. Origins advance at stride (patch_size - overlap); the final
// origin per axis is clamped to dim - patch_size so the last patch ends
// exactly at the border (the clamped patch overlaps its neighbour by more
// than `overlap`).
struct TileGrid {
  int patch_size = 256;
  int overlap = 20;
  int source_width = 0;
  int source_height = 0;
  std::vector<int> x_origins;
  std::vector<int> y_origins;

  std::size_t size() const { return x_origins.size() * y_origins.size(); }
  // index is row-major over (y, x) origin pairs
  int origin_x(std::size_t index) const {
    return x_origins[index % x_origins.size()];
  }
  int origin_y(std::size_t index) const {
    return y_origins[index / x_origins.size()];
  }
};

TileGrid plan_tiles(int width, int height, int patch_size = 256, int overlap = 20);

RgbImage extract_patch(const RgbImage& image, const TileGrid& grid, std::size_t index);

// Full-size mask from per-patch masks; overlapping pixels combine with
// bitwise AND over all covering patches.
BinaryMask merge_tiles(const std::vector<BinaryMask>& patch_masks, const TileGrid& grid);

}  // namespace beds
