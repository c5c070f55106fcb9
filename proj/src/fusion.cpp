#include "beds/fusion.hpp"

#include <stdexcept>
#include <string>

namespace beds {

namespace {

void check_uniform(const std::vector<BinaryMask>& masks) {
  if (masks.empty()) throw std::invalid_argument("majority_vote: empty mask list");
  const int w = masks[0].width, h = masks[0].height;
  for (std::size_t i = 1; i < masks.size(); ++i)
    if (masks[i].width != w || masks[i].height != h)
      throw std::invalid_argument("majority_vote: mask " + std::to_string(i) +
                                  " dimensions differ from mask 0");
}

}  // namespace

void validate_grid(const MaskGrid& grid) {
  if (grid.stains < 1 || grid.models < 1)
    throw std::invalid_argument("mask grid must have at least one stain and one model");
  if (grid.masks.size() != static_cast<std::size_t>(grid.stains) * grid.models)
    throw std::invalid_argument("mask grid storage does not match stains x models");
  check_uniform(grid.masks);
}

BinaryMask majority_vote(const std::vector<BinaryMask>& masks) {
  check_uniform(masks);
  const int k = static_cast<int>(masks.size());
  const std::int64_t n = static_cast<std::int64_t>(masks[0].pixels());
  BinaryMask out(masks[0].width, masks[0].height);
  const int threshold2 = k;  // vote wins iff 2 * count > k
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    int count = 0;
    for (int j = 0; j < k; ++j) count += masks[j].data[i];
    out.data[i] = (2 * count > threshold2) ? 1 : 0;
  }
  return out;
}

BinaryMask fuse_all(const MaskGrid& grid) {
  validate_grid(grid);
  return majority_vote(grid.masks);
}

BinaryMask fuse_model_stain(const MaskGrid& grid) {
  validate_grid(grid);
  std::vector<BinaryMask> per_stain;
  per_stain.reserve(grid.stains);
  for (int p = 0; p < grid.stains; ++p) {
    std::vector<BinaryMask> row(grid.masks.begin() + static_cast<std::size_t>(p) * grid.models,
                                grid.masks.begin() + static_cast<std::size_t>(p + 1) * grid.models);
    per_stain.push_back(majority_vote(row));
  }
  return majority_vote(per_stain);
}

BinaryMask fuse_stain_model(const MaskGrid& grid) {
  validate_grid(grid);
  std::vector<BinaryMask> per_model;
  per_model.reserve(grid.models);
  for (int q = 0; q < grid.models; ++q) {
    std::vector<BinaryMask> col;
    col.reserve(grid.stains);
    for (int p = 0; p < grid.stains; ++p) col.push_back(grid.at(p, q));
    per_model.push_back(majority_vote(col));
  }
  return majority_vote(per_model);
}

}  // namespace beds
