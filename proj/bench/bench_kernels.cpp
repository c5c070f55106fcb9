// Timing comparison of the OpenMP kernels against their single-threaded
// references, plus a result-equality check on every pair.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "beds/rng.hpp"
#include "beds/serial.hpp"

using namespace beds;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  // warm-up
  fn();
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto end = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(end - start).count() / reps;
}

void row(const std::string& name, double serial_ms, double parallel_ms, bool equal) {
  std::printf("%-26s %10.2f ms %10.2f ms %8.2fx   %s\n", name.c_str(), serial_ms, parallel_ms,
              serial_ms / parallel_ms, equal ? "match" : "MISMATCH");
}

RgbImage random_image(int w, int h, std::uint64_t seed) {
  RgbImage img(w, h);
  Rng rng(seed);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

BinaryMask random_mask(int w, int h, std::uint64_t seed, double p) {
  BinaryMask m(w, h);
  Rng rng(seed);
  for (auto& v : m.data) v = rng.next_double() < p ? 1 : 0;
  return m;
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; both columns run serial code\n");
#endif
  std::printf("%-26s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

  {
    // the paper-scale fusion: 231 masks of 1000x1000
    std::vector<BinaryMask> masks;
    for (int i = 0; i < 231; ++i) masks.push_back(random_mask(1000, 1000, i, 0.4));
    BinaryMask out_p, out_s;
    const double tp = time_ms([&] { out_p = majority_vote(masks); }, 3);
    const double ts = time_ms([&] { out_s = serial::majority_vote(masks); }, 3);
    row("majority_vote 231x1000^2", ts, tp, out_p == out_s);
  }
  {
    StainModel model;
    model.stains = {{{0.6497, 0.7007, 0.2901}, {0.0921, 0.9542, 0.2843}}};
    const RgbImage img = random_image(512, 512, 7);
    ConcentrationMap cp, cs;
    const double tp = time_ms([&] { cp = solve_concentrations(img, model); }, 3);
    const double ts = time_ms([&] { cs = serial::solve_concentrations(img, model); }, 3);
    row("solve_concentrations 512^2", ts, tp, cp.data == cs.data);
  }
  {
    const RgbImage img = random_image(512, 512, 9);
    PixelFeatureMap fp, fs;
    const double tp = time_ms([&] { fp = compute_pixel_features(img); }, 3);
    const double ts = time_ms([&] { fs = serial::compute_pixel_features(img); }, 3);
    row("pixel_features 512^2", ts, tp, fp.planes == fs.planes);
  }
  {
    const BinaryMask a = random_mask(1000, 1000, 1, 0.3);
    const BinaryMask b = random_mask(1000, 1000, 2, 0.3);
    double dp = 0, ds = 0;
    const double tp = time_ms([&] { dp = dsc(a, b); }, 20);
    const double ts = time_ms([&] { ds = serial::dsc(a, b); }, 20);
    row("dsc 1000^2", ts, tp, dp == ds);
  }
  {
    const RgbImage img = random_image(512, 512, 13);
    OdImage op, os;
    const double tp = time_ms([&] { op = rgb_to_od(img); }, 10);
    const double ts = time_ms([&] { os = serial::rgb_to_od(img); }, 10);
    row("rgb_to_od 512^2", ts, tp, op.data == os.data);
  }
  {
    const TileGrid grid = plan_tiles(1000, 1000, 256, 20);
    std::vector<BinaryMask> masks;
    for (std::size_t t = 0; t < grid.size(); ++t)
      masks.push_back(random_mask(256, 256, 100 + t, 0.6));
    BinaryMask mp, ms;
    const double tp = time_ms([&] { mp = merge_tiles(masks, grid); }, 10);
    const double ts = time_ms([&] { ms = serial::merge_tiles(masks, grid); }, 10);
    row("merge_tiles 25x256^2", ts, tp, mp == ms);
  }
  return 0;
}
