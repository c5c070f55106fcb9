#include "beds/tiling.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

namespace beds {

namespace {

std::vector<int> axis_origins(int dim, int patch, int stride) {
  std::vector<int> origins;
  int x = 0;
  while (true) {
    if (x + patch >= dim) {
      origins.push_back(dim - patch);
      break;
    }
    origins.push_back(x);
    x += stride;
  }
  return origins;
}

}  // namespace

TileGrid plan_tiles(int width, int height, int patch_size, int overlap) {
  if (patch_size < 1)
    throw std::invalid_argument("plan_tiles: patch_size must be positive");
  if (patch_size > width || patch_size > height)
    throw std::invalid_argument("plan_tiles: patch_size " + std::to_string(patch_size) +
                                " exceeds image dimensions " + std::to_string(width) + "x" +
                                std::to_string(height));
  if (overlap < 0 || overlap >= patch_size)
    throw std::invalid_argument("plan_tiles: overlap must be in [0, patch_size)");

  TileGrid grid;
  grid.patch_size = patch_size;
  grid.overlap = overlap;
  grid.source_width = width;
  grid.source_height = height;
  const int stride = patch_size - overlap;
  grid.x_origins = axis_origins(width, patch_size, stride);
  grid.y_origins = axis_origins(height, patch_size, stride);
  return grid;
}

RgbImage extract_patch(const RgbImage& image, const TileGrid& grid, std::size_t index) {
  if (index >= grid.size())
    throw std::out_of_range("extract_patch: index " + std::to_string(index) +
                            " out of range (grid has " + std::to_string(grid.size()) +
                            " patches)");
  const int p = grid.patch_size;
  const int ox = grid.origin_x(index);
  const int oy = grid.origin_y(index);
  RgbImage patch(p, p);
  for (int y = 0; y < p; ++y) {
    const std::uint8_t* src = image.px(ox, oy + y);
    std::memcpy(&patch.data[static_cast<std::size_t>(y) * p * 3], src,
                static_cast<std::size_t>(p) * 3);
  }
  return patch;
}

BinaryMask merge_tiles(const std::vector<BinaryMask>& patch_masks, const TileGrid& grid) {
  if (patch_masks.size() != grid.size())
    throw std::invalid_argument("merge_tiles: got " + std::to_string(patch_masks.size()) +
                                " masks for a grid of " + std::to_string(grid.size()) +
                                " patches");
  const int p = grid.patch_size;
  for (std::size_t i = 0; i < patch_masks.size(); ++i) {
    if (patch_masks[i].width != p || patch_masks[i].height != p)
      throw std::invalid_argument("merge_tiles: mask " + std::to_string(i) +
                                  " is not patch-sized");
  }

  BinaryMask out(grid.source_width, grid.source_height, 1);
  const std::size_t nx = grid.x_origins.size();

#pragma omp parallel for schedule(static)
  for (int y = 0; y < grid.source_height; ++y) {
    std::uint8_t* row = &out.data[static_cast<std::size_t>(y) * grid.source_width];
    for (std::size_t gy = 0; gy < grid.y_origins.size(); ++gy) {
      const int oy = grid.y_origins[gy];
      if (y < oy || y >= oy + p) continue;
      for (std::size_t gx = 0; gx < nx; ++gx) {
        const int ox = grid.x_origins[gx];
        const BinaryMask& m = patch_masks[gy * nx + gx];
        const std::uint8_t* src = &m.data[static_cast<std::size_t>(y - oy) * p];
        for (int x = 0; x < p; ++x) row[ox + x] &= src[x];
      }
    }
  }
  return out;
}

}  // namespace beds
