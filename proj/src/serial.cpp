#include "beds/serial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace beds::serial {

BinaryMask majority_vote(const std::vector<BinaryMask>& masks) {
  if (masks.empty()) throw std::invalid_argument("serial::majority_vote: empty mask list");
  const int w = masks[0].width, h = masks[0].height;
  BinaryMask out(w, h);
  const std::size_t total = masks.size();
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    std::size_t votes = 0;
    for (const BinaryMask& m : masks) votes += m.data[i];
    out.data[i] = (votes > total / 2.0) ? 1 : 0;
  }
  return out;
}

BinaryMask fuse_all(const MaskGrid& grid) {
  const BinaryMask& first = grid.masks[0];
  BinaryMask out(first.width, first.height);
  const double half = grid.stains * grid.models / 2.0;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    int sum = 0;
    for (int p = 0; p < grid.stains; ++p)
      for (int q = 0; q < grid.models; ++q) sum += grid.at(p, q).data[i];
    out.data[i] = sum > half ? 1 : 0;
  }
  return out;
}

BinaryMask fuse_model_stain(const MaskGrid& grid) {
  const BinaryMask& first = grid.masks[0];
  BinaryMask out(first.width, first.height);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    int stain_votes = 0;
    for (int p = 0; p < grid.stains; ++p) {
      int model_votes = 0;
      for (int q = 0; q < grid.models; ++q) model_votes += grid.at(p, q).data[i];
      if (model_votes > grid.models / 2.0) ++stain_votes;
    }
    out.data[i] = stain_votes > grid.stains / 2.0 ? 1 : 0;
  }
  return out;
}

BinaryMask fuse_stain_model(const MaskGrid& grid) {
  const BinaryMask& first = grid.masks[0];
  BinaryMask out(first.width, first.height);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    int model_votes = 0;
    for (int q = 0; q < grid.models; ++q) {
      int stain_votes = 0;
      for (int p = 0; p < grid.stains; ++p) stain_votes += grid.at(p, q).data[i];
      if (stain_votes > grid.stains / 2.0) ++model_votes;
    }
    out.data[i] = model_votes > grid.models / 2.0 ? 1 : 0;
  }
  return out;
}

double dsc(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw std::invalid_argument("serial::dsc: mask dimensions differ");
  std::int64_t inter = 0, a = 0, b = 0;
  for (int y = 0; y < pred.height; ++y) {
    for (int x = 0; x < pred.width; ++x) {
      const int pv = pred.at(x, y), gv = gt.at(x, y);
      if (pv && gv) ++inter;
      if (pv) ++a;
      if (gv) ++b;
    }
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

OdImage rgb_to_od(const RgbImage& image, double i0) {
  OdImage od(image.width, image.height);
  for (std::size_t i = 0; i < image.pixels() * 3; ++i)
    od.data[i] = -std::log((image.data[i] + 1.0) / (i0 + 1.0));
  return od;
}

ConcentrationMap solve_concentrations(const RgbImage& image, const StainModel& model) {
  ConcentrationMap out(image.width, image.height);
  for (std::size_t i = 0; i < image.pixels(); ++i) {
    std::array<double, 3> od;
    for (int c = 0; c < 3; ++c)
      od[c] = -std::log((image.data[i * 3 + c] + 1.0) / (model.i0 + 1.0));
    const auto h = solve_pixel_concentration(model, od);
    out.data[i * 2] = h[0];
    out.data[i * 2 + 1] = h[1];
  }
  return out;
}

PixelFeatureMap compute_pixel_features(const RgbImage& image) {
  constexpr double kOdMax = 5.545177444479562;
  const int w = image.width, h = image.height;
  PixelFeatureMap fm(w, h);
  const std::size_t n = fm.pixels();

  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = image.data[i * 3 + c];
      fm.plane(c)[i] = static_cast<float>(v / 255.0);
      fm.plane(3 + c)[i] = static_cast<float>(-std::log((v + 1.0) / 256.0) / kOdMax);
    }
  }

  static const double kSigmas[3] = {1.0, 2.0, 4.0};
  std::vector<float> tmp(n);
  for (int s = 0; s < 3; ++s) {
    const double sigma = kSigmas[s];
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      const double kv = std::exp(-0.5 * (i * i) / (sigma * sigma));
      kernel[i + radius] = static_cast<float>(kv);
      sum += kv;
    }
    for (auto& k : kernel) k = static_cast<float>(k / sum);

    for (int c = 0; c < 6; ++c) {
      const float* src = fm.plane(c);
      float* dst = fm.plane(6 + s * 6 + c);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          float acc = 0.0f;
          for (int i = -radius; i <= radius; ++i)
            acc += kernel[i + radius] * src[static_cast<std::size_t>(y) * w +
                                            std::clamp(x + i, 0, w - 1)];
          tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          float acc = 0.0f;
          for (int i = -radius; i <= radius; ++i)
            acc += kernel[i + radius] *
                   tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
          dst[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
  }

  for (int c = 0; c < 6; ++c) {
    const float* src = fm.plane(c);
    float* mean_out = fm.plane(24 + c);
    float* std_out = fm.plane(30 + c);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float s = 0.0f, s2 = 0.0f;
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx) {
            const float v = src[static_cast<std::size_t>(std::clamp(y + dy, 0, h - 1)) * w +
                                std::clamp(x + dx, 0, w - 1)];
            s += v;
            s2 += v * v;
          }
        const float m = s / 25.0f;
        mean_out[static_cast<std::size_t>(y) * w + x] = m;
        std_out[static_cast<std::size_t>(y) * w + x] =
            std::sqrt(std::max(0.0f, s2 / 25.0f - m * m));
      }
  }
  return fm;
}

BinaryMask merge_tiles(const std::vector<BinaryMask>& patch_masks, const TileGrid& grid) {
  BinaryMask out(grid.source_width, grid.source_height, 1);
  const int p = grid.patch_size;
  const std::size_t nx = grid.x_origins.size();
  for (std::size_t t = 0; t < grid.size(); ++t) {
    const int ox = grid.x_origins[t % nx];
    const int oy = grid.y_origins[t / nx];
    const BinaryMask& m = patch_masks[t];
    for (int y = 0; y < p; ++y)
      for (int x = 0; x < p; ++x)
        out.at(ox + x, oy + y) = out.at(ox + x, oy + y) & m.at(x, y);
  }
  return out;
}

std::vector<double> squared_distance_transform_brute(const BinaryMask& mask) {
  const int w = mask.width, h = mask.height;
  std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      // image border counts as background one pixel outside
      double best = std::min({x + 1, y + 1, w - x, h - y});
      best *= best;
      for (int by = 0; by < h; ++by)
        for (int bx = 0; bx < w; ++bx)
          if (!mask.at(bx, by)) {
            const double d = double(bx - x) * (bx - x) + double(by - y) * (by - y);
            if (d < best) best = d;
          }
      out[static_cast<std::size_t>(y) * w + x] = best;
    }
  }
  return out;
}

}  // namespace beds::serial
