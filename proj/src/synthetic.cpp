#include "beds/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "beds/rng.hpp"

namespace fs = std::filesystem;

namespace beds {

namespace {

// bilinear value noise on a coarse seeded lattice, in [0, 1]
struct ValueNoise {
  int gw, gh;
  double cell;
  std::vector<double> grid;

  ValueNoise(int width, int height, double cell_size, Rng& rng) : cell(cell_size) {
    gw = static_cast<int>(std::ceil(width / cell)) + 2;
    gh = static_cast<int>(std::ceil(height / cell)) + 2;
    grid.resize(static_cast<std::size_t>(gw) * gh);
    for (auto& g : grid) g = rng.next_double();
  }

  double at(double x, double y) const {
    const double gx = x / cell, gy = y / cell;
    const int x0 = static_cast<int>(gx), y0 = static_cast<int>(gy);
    const double fx = gx - x0, fy = gy - y0;
    auto g = [&](int xi, int yi) {
      return grid[static_cast<std::size_t>(std::min(yi, gh - 1)) * gw + std::min(xi, gw - 1)];
    };
    const double top = g(x0, y0) * (1 - fx) + g(x0 + 1, y0) * fx;
    const double bot = g(x0, y0 + 1) * (1 - fx) + g(x0 + 1, y0 + 1) * fx;
    return top * (1 - fy) + bot * fy;
  }
};

struct Ellipse {
  double cx, cy, rx, ry, cos_t, sin_t;
  double hema;  // hematoxylin concentration inside

  // squared normalized radius; <= 1 means inside
  double rho2(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = (dx * cos_t + dy * sin_t) / rx;
    const double v = (-dx * sin_t + dy * cos_t) / ry;
    return u * u + v * v;
  }
};

void normalize3(double v[3]) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  for (int c = 0; c < 3; ++c) v[c] /= n;
}

}  // namespace

std::vector<std::pair<RgbImage, BinaryMask>> gen_synthetic(const SyntheticSpec& spec,
                                                           int count) {
  // reference H&E OD directions (hematoxylin carries the blue weight, eosin
  // barely any); each image perturbs them multiplicatively so the channel
  // ratios, and with them the hematoxylin-first ordering, stay intact
  static const double kHema[3] = {0.650, 0.704, 0.286};
  static const double kEosin[3] = {0.070, 0.990, 0.105};

  std::vector<std::pair<RgbImage, BinaryMask>> out;
  out.reserve(count);
  const int w = spec.width, h = spec.height;
  const double tiles = static_cast<double>(w) * h / (256.0 * 256.0);

  for (int img_idx = 0; img_idx < count; ++img_idx) {
    Rng rng(hash_key(spec.seed, static_cast<std::uint64_t>(img_idx), "synth"));

    double hema[3], eosin[3];
    for (int c = 0; c < 3; ++c) {
      hema[c] = kHema[c] * (1.0 + rng.uniform(-spec.stain_jitter, spec.stain_jitter));
      eosin[c] = kEosin[c] * (1.0 + rng.uniform(-spec.stain_jitter, spec.stain_jitter));
    }
    normalize3(hema);
    normalize3(eosin);
    const double gain = 1.0 + rng.uniform(-spec.intensity_jitter, spec.intensity_jitter);

    ValueNoise bg_noise(w, h, spec.background_texture_scale, rng);
    ValueNoise fine_noise(w, h, spec.background_texture_scale / 4.0, rng);

    const int n_range = spec.nuclei_max - spec.nuclei_min + 1;
    const int per_tile = spec.nuclei_min + static_cast<int>(rng.below(n_range));
    const int n_nuclei = static_cast<int>(std::lround(per_tile * tiles));
    std::vector<Ellipse> nuclei;
    nuclei.reserve(n_nuclei);
    for (int k = 0; k < n_nuclei; ++k) {
      Ellipse e;
      e.cx = rng.uniform(0.0, w);
      e.cy = rng.uniform(0.0, h);
      e.rx = rng.uniform(spec.radius_min, spec.radius_max);
      e.ry = rng.uniform(spec.radius_min, spec.radius_max);
      const double theta = rng.uniform(0.0, 3.14159265358979323846);
      e.cos_t = std::cos(theta);
      e.sin_t = std::sin(theta);
      e.hema = rng.uniform(0.50, 1.35);  // faint nuclei included
      nuclei.push_back(e);
    }
    // eosin-dense distractor blobs, not part of the ground truth; their
    // hematoxylin tint overlaps the faint end of the nuclei range
    const int n_distract = n_nuclei;
    std::vector<Ellipse> distractors;
    distractors.reserve(n_distract);
    for (int k = 0; k < n_distract; ++k) {
      Ellipse e;
      e.cx = rng.uniform(0.0, w);
      e.cy = rng.uniform(0.0, h);
      e.rx = rng.uniform(spec.radius_min, 1.6 * spec.radius_max);
      e.ry = rng.uniform(spec.radius_min, 1.6 * spec.radius_max);
      const double theta = rng.uniform(0.0, 3.14159265358979323846);
      e.cos_t = std::cos(theta);
      e.sin_t = std::sin(theta);
      e.hema = rng.uniform(0.15, 0.42);
      distractors.push_back(e);
    }

    RgbImage image(w, h);
    BinaryMask mask(w, h);
    std::vector<double> c_hema(static_cast<std::size_t>(w) * h);
    std::vector<double> c_eosin(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        c_hema[i] = 0.04 + 0.08 * fine_noise.at(x, y);  // faint hematoxylin haze
        c_eosin[i] = 0.18 + 0.35 * bg_noise.at(x, y);   // eosin background
      }
    }
    auto for_each_inside = [&](const Ellipse& e, auto&& body) {
      const double r = std::max(e.rx, e.ry);
      const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - r)));
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(e.cx + r)));
      const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - r)));
      const int y1 = std::min(h - 1, static_cast<int>(std::ceil(e.cy + r)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double rho2 = e.rho2(x + 0.5, y + 0.5);
          if (rho2 <= 1.0) body(x, y, rho2);
        }
    };
    for (const Ellipse& e : distractors) {
      for_each_inside(e, [&](int x, int y, double rho2) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double edge = std::min(1.0, (1.0 - rho2) / 0.3);
        c_eosin[i] *= 1.0 + 0.9 * edge;
        c_hema[i] = std::max(c_hema[i], e.hema * edge);
      });
    }
    for (const Ellipse& e : nuclei) {
      for_each_inside(e, [&](int x, int y, double rho2) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        mask.data[i] = 1;
        // soft rim: concentration ramps down over the outer band, so the
        // boundary pixels are genuinely ambiguous
        const double edge = std::min(1.0, (1.0 - rho2) / 0.45);
        c_hema[i] =
            std::max(c_hema[i], e.hema * edge * (0.85 + 0.3 * fine_noise.at(x, y)));
        c_eosin[i] *= 1.0 - 0.5 * edge;
      });
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        for (int c = 0; c < 3; ++c) {
          const double od = gain * (c_hema[i] * hema[c] + c_eosin[i] * eosin[c]);
          double v = std::round(256.0 * std::exp(-od) - 1.0);
          v += spec.noise_sigma * rng.normal();
          image.px(x, y)[c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
      }
    }
    out.emplace_back(std::move(image), std::move(mask));
  }
  return out;
}

std::vector<std::string> write_synthetic_corpus(const SyntheticSpec& spec, int count,
                                                const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  auto corpus = gen_synthetic(spec, count);
  std::vector<std::string> ids;
  ids.reserve(count);
  char name[32];
  for (int i = 0; i < count; ++i) {
    std::snprintf(name, sizeof(name), "img%03d", i);
    ids.emplace_back(name);
    save_image(corpus[i].first, (fs::path(dir) / "images" / (ids.back() + ".png")).string());
    save_mask(corpus[i].second, (fs::path(dir) / "masks" / (ids.back() + ".png")).string());
  }
  return ids;
}

}  // namespace beds
