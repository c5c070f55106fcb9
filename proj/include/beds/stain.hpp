#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "beds/image.hpp"

namespace beds {

// Per-channel optical density raster (Beer-Lambert space). Stains combine
// linearly here, which is what makes the factorization meaningful.
struct OdImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // width * height * 3, all >= 0

  OdImage() = default;
  OdImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0) {}
  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
};

// Two-stain dictionary: rows are unit-L2-norm OD color vectors, first row is
// the stain with the larger blue-channel weight (hematoxylin by convention).
struct StainModel {
  std::array<std::array<double, 3>, 2> stains{};  // stains[s] = (r, g, b) OD vector
  std::array<double, 2> c_percentile{};           // 99th percentile concentration per stain
  double lambda = 0.1;   // sparsity weight of the concentration solve
  double beta = 0.15;    // background OD threshold (tissue = max-channel OD > beta)
  double i0 = 255.0;     // transmitted-light white level
  bool converged = true;
};

// Row-major (hematoxylin, eosin) concentration pairs, all >= 0.
struct ConcentrationMap {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // width * height * 2

  ConcentrationMap() = default;
  ConcentrationMap(int w, int h)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 2, 0.0) {}
  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
};

struct StainFitOptions {
  double lambda = 0.1;
  double beta = 0.15;
  double i0 = 255.0;
  int max_outer_iters = 200;
  double rel_tol = 1e-6;  // relative objective change declaring convergence
  std::uint64_t seed = 0;
  int min_tissue_pixels = 100;
};

// Objective value after each outer iteration, for convergence diagnostics.
struct StainFitTrace {
  std::vector<double> objective;
  int iterations = 0;
};

// od = -ln((intensity + 1) / (i0 + 1)) per channel
OdImage rgb_to_od(const RgbImage& image, double i0 = 255.0);

// intensity = clamp(round((i0 + 1) * exp(-od) - 1), 0, 255)
RgbImage od_to_rgb(const OdImage& od, double i0 = 255.0);

// Sparse NMF of the tissue-pixel OD matrix: alternating per-pixel coordinate
// descent on concentrations and per-column projected least squares on the
// dictionary, columns kept non-negative and unit-norm. Single-threaded;
// concurrent fits on different images are safe.
StainModel fit_stain_model(const RgbImage& image, const StainFitOptions& options = {},
                           StainFitTrace* trace = nullptr);

// Per-pixel argmin over h >= 0 of ||v - Wh||^2 + lambda * ||h||_1.
// Parallel over pixels; result is independent of worker count.
ConcentrationMap solve_concentrations(const RgbImage& image, const StainModel& model);

// Re-render `source` under the template dictionary: solve concentrations with
// the source model, match per-stain 99th-percentile scale, reconstruct OD
// with the template stains.
RgbImage normalize_stain(const RgbImage& source, const StainModel& source_model,
                         const StainModel& template_model);

// JSON persistence: {w: [[r,g,b],[r,g,b]], c_percentile: [h,e], lambda, beta,
// i0, converged}
void save_stain_model(const StainModel& model, const std::string& path);
StainModel load_stain_model(const std::string& path);

// Single-pixel concentration solve, exposed for oracle tests. Coordinate
// descent from h = 0 until the largest coordinate update is below tol.
std::array<double, 2> solve_pixel_concentration(const StainModel& model,
                                                const std::array<double, 3>& od,
                                                double tol = 1e-10, int max_sweeps = 500);

}  // namespace beds
