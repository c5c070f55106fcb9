#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "beds/image.hpp"

namespace beds {

// Desk-scale stand-in for an H&E corpus: elliptical hematoxylin-heavy nuclei
// on a textured eosin background, with per-image stain jitter emulating the
// appearance drift across labs. Fully determined by the seed.
struct SyntheticSpec {
  int width = 512;
  int height = 512;
  // nuclei count range, expressed per 256x256 tile of image area; the drawn
  // count scales with (width*height)/256^2
  int nuclei_min = 12;
  int nuclei_max = 20;
  double radius_min = 5.0;
  double radius_max = 10.0;
  double stain_jitter = 0.22;       // relative per-channel OD vector perturbation
  double intensity_jitter = 0.35;   // global concentration scale jitter
  double background_texture_scale = 64.0;  // pixels per texture cell
  double noise_sigma = 6.0;         // additive RGB noise
  std::uint64_t seed = 0;
};

std::vector<std::pair<RgbImage, BinaryMask>> gen_synthetic(const SyntheticSpec& spec,
                                                           int count);

// Write images/<id>.png and masks/<id>.png under `dir`; ids are img000...
std::vector<std::string> write_synthetic_corpus(const SyntheticSpec& spec, int count,
                                                const std::string& dir);

}  // namespace beds
