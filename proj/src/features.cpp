#include "beds/features.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "beds/stain.hpp"

namespace beds {

namespace {

constexpr double kOdMax = 5.545177444479562;  // ln(256), OD of intensity 0 at i0=255
constexpr double kGradMax = 60.0;             // gradient histogram upper edge

inline int clamp_bin(double t, int bins) {
  int b = static_cast<int>(t);
  if (b < 0) b = 0;
  if (b >= bins) b = bins - 1;
  return b;
}

}  // namespace

FeatureVector extract_features(const RgbImage& image, const std::string& image_id) {
  const std::size_t n = image.pixels();
  const OdImage od = rgb_to_od(image);

  double od_hist[3][8] = {};
  double rgb_hist[3][8] = {};
  double rgb_sum[3] = {}, od_sum[3] = {};
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = image.data[i * 3 + c];
      const double o = od.data[i * 3 + c];
      rgb_hist[c][clamp_bin(v / 32.0, 8)] += 1.0;
      od_hist[c][clamp_bin(o / kOdMax * 8.0, 8)] += 1.0;
      rgb_sum[c] += v;
      od_sum[c] += o;
    }
  }
  // two-pass variance so constant channels report an exactly-zero spread
  double rgb_var[3] = {}, od_var[3] = {};
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double dv = image.data[i * 3 + c] - rgb_sum[c] / n;
      const double dod = od.data[i * 3 + c] - od_sum[c] / n;
      rgb_var[c] += dv * dv;
      od_var[c] += dod * dod;
    }
  }

  // gradient magnitude of mean luminance, clamp-to-edge central differences
  double grad_hist[12] = {};
  const int w = image.width, h = image.height;
  auto lum = [&](int x, int y) {
    const std::uint8_t* p = image.px(x, y);
    return (p[0] + p[1] + p[2]) / 3.0;
  };
  for (int y = 0; y < h; ++y) {
    const int ym = y > 0 ? y - 1 : 0, yp = y < h - 1 ? y + 1 : h - 1;
    for (int x = 0; x < w; ++x) {
      const int xm = x > 0 ? x - 1 : 0, xp = x < w - 1 ? x + 1 : w - 1;
      const double gx = (lum(xp, y) - lum(xm, y)) * 0.5;
      const double gy = (lum(x, yp) - lum(x, ym)) * 0.5;
      const double mag = std::sqrt(gx * gx + gy * gy);
      grad_hist[clamp_bin(mag / kGradMax * 12.0, 12)] += 1.0;
    }
  }

  FeatureVector fv;
  fv.image_id = image_id;
  fv.values.reserve(kStyleFeatureLength);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int c = 0; c < 3; ++c)
    for (int b = 0; b < 8; ++b) fv.values.push_back(od_hist[c][b] * inv_n);
  for (int c = 0; c < 3; ++c)
    for (int b = 0; b < 8; ++b) fv.values.push_back(rgb_hist[c][b] * inv_n);
  for (int c = 0; c < 3; ++c) {
    fv.values.push_back(rgb_sum[c] * inv_n / 255.0);
    fv.values.push_back(std::sqrt(rgb_var[c] * inv_n) / 255.0);
  }
  for (int c = 0; c < 3; ++c) {
    fv.values.push_back(od_sum[c] * inv_n / kOdMax);
    fv.values.push_back(std::sqrt(od_var[c] * inv_n) / kOdMax);
  }
  for (int b = 0; b < 12; ++b) fv.values.push_back(grad_hist[b] * inv_n);

  double norm = 0.0;
  for (double v : fv.values) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& v : fv.values) v /= norm;
  return fv;
}

std::vector<FeatureVector> ingest_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest_embeddings: cannot open " + path);

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("ingest_embeddings(" + path + "): no rows");
  // header: image_id, f0, f1, ...
  std::vector<FeatureVector> out;
  std::set<std::string> seen;
  std::size_t width = 0;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    FeatureVector fv;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      // trim surrounding whitespace
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cell = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
      if (col == 0) {
        fv.image_id = cell;
      } else {
        try {
          std::size_t used = 0;
          double v = std::stod(cell, &used);
          if (used != cell.size() || std::isnan(v))
            throw std::invalid_argument("bad cell");
          fv.values.push_back(v);
        } catch (const std::exception&) {
          throw std::runtime_error("ingest_embeddings(" + path + "): non-numeric cell at row " +
                                   std::to_string(row) + ", column " + std::to_string(col));
        }
      }
      ++col;
    }
    if (fv.image_id.empty())
      throw std::runtime_error("ingest_embeddings(" + path + "): empty image_id at row " +
                               std::to_string(row));
    if (width == 0 && out.empty()) {
      width = fv.values.size();
      if (width == 0)
        throw std::runtime_error("ingest_embeddings(" + path + "): row " + std::to_string(row) +
                                 " has no feature columns");
    } else if (fv.values.size() != width) {
      throw std::runtime_error("ingest_embeddings(" + path + "): ragged row " +
                               std::to_string(row) + " (expected " + std::to_string(width) +
                               " features, got " + std::to_string(fv.values.size()) + ")");
    }
    if (!seen.insert(fv.image_id).second)
      throw std::runtime_error("ingest_embeddings(" + path + "): duplicate image_id '" +
                               fv.image_id + "' at row " + std::to_string(row));
    out.push_back(std::move(fv));
  }
  if (out.empty()) throw std::runtime_error("ingest_embeddings(" + path + "): no rows");
  return out;
}

}  // namespace beds
