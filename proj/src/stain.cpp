#include "beds/stain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "beds/rng.hpp"

namespace beds {

namespace {

// coordinate descent for min_{h>=0} ||v - Wh||^2 + lambda*(h0+h1),
// parameterized by a = W^T W and b = W^T v
inline void cd_solve(const double a[2][2], const double b[2], double lambda, double h[2],
                     double tol, int max_sweeps) {
  const double half_lambda = 0.5 * lambda;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double delta = 0.0;
    for (int j = 0; j < 2; ++j) {
      const int k = 1 - j;
      double v = (b[j] - half_lambda - a[j][k] * h[k]) / a[j][j];
      if (v < 0.0) v = 0.0;
      delta = std::max(delta, std::fabs(v - h[j]));
      h[j] = v;
    }
    if (delta < tol) break;
  }
}

inline void od_of_pixel(const std::uint8_t* px, double inv_i0p1, double od[3]) {
  od[0] = -std::log((px[0] + 1.0) * inv_i0p1);
  od[1] = -std::log((px[1] + 1.0) * inv_i0p1);
  od[2] = -std::log((px[2] + 1.0) * inv_i0p1);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * (values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - lo;
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double fit_objective(const std::vector<std::array<double, 3>>& v,
                     const std::array<std::array<double, 3>, 2>& w,
                     const std::vector<std::array<double, 2>>& h, double lambda) {
  double obj = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double r = v[i][c] - w[0][c] * h[i][0] - w[1][c] * h[i][1];
      obj += r * r;
    }
    obj += lambda * (h[i][0] + h[i][1]);
  }
  return obj;
}

}  // namespace

OdImage rgb_to_od(const RgbImage& image, double i0) {
  if (i0 <= 0.0) throw std::invalid_argument("rgb_to_od: i0 must be positive");
  OdImage od(image.width, image.height);
  const double inv = 1.0 / (i0 + 1.0);
  const std::int64_t n = static_cast<std::int64_t>(image.pixels());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    od_of_pixel(&image.data[i * 3], inv, &od.data[i * 3]);
  }
  return od;
}

RgbImage od_to_rgb(const OdImage& od, double i0) {
  RgbImage image(od.width, od.height);
  const std::int64_t n = static_cast<std::int64_t>(od.pixels());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      double v = std::round((i0 + 1.0) * std::exp(-od.data[i * 3 + c]) - 1.0);
      image.data[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return image;
}

std::array<double, 2> solve_pixel_concentration(const StainModel& model,
                                                const std::array<double, 3>& od, double tol,
                                                int max_sweeps) {
  double a[2][2], b[2];
  for (int s = 0; s < 2; ++s) {
    b[s] = model.stains[s][0] * od[0] + model.stains[s][1] * od[1] + model.stains[s][2] * od[2];
    for (int t = 0; t < 2; ++t)
      a[s][t] = model.stains[s][0] * model.stains[t][0] +
                model.stains[s][1] * model.stains[t][1] +
                model.stains[s][2] * model.stains[t][2];
  }
  double h[2] = {0.0, 0.0};
  cd_solve(a, b, model.lambda, h, tol, max_sweeps);
  return {h[0], h[1]};
}

StainModel fit_stain_model(const RgbImage& image, const StainFitOptions& options,
                           StainFitTrace* trace) {
  // Collect tissue-pixel OD vectors
  const double inv = 1.0 / (options.i0 + 1.0);
  std::vector<std::array<double, 3>> v;
  v.reserve(image.pixels() / 2);
  for (std::size_t i = 0; i < image.pixels(); ++i) {
    double od[3];
    od_of_pixel(&image.data[i * 3], inv, od);
    if (std::max({od[0], od[1], od[2]}) > options.beta) v.push_back({od[0], od[1], od[2]});
  }
  if (static_cast<int>(v.size()) < options.min_tissue_pixels)
    throw std::runtime_error("fit_stain_model: only " + std::to_string(v.size()) +
                             " tissue pixels above beta=" + std::to_string(options.beta) +
                             " (need at least " + std::to_string(options.min_tissue_pixels) +
                             ")");

  // W init: uniform positive random columns, unit-normalized
  Rng rng(hash_key(options.seed, "stain-w-init"));
  std::array<std::array<double, 3>, 2> w;
  for (int s = 0; s < 2; ++s) {
    double norm = 0.0;
    for (int c = 0; c < 3; ++c) {
      w[s][c] = rng.next_double() + 1e-3;
      norm += w[s][c] * w[s][c];
    }
    norm = std::sqrt(norm);
    for (int c = 0; c < 3; ++c) w[s][c] /= norm;
  }

  std::vector<std::array<double, 2>> h(v.size(), {0.0, 0.0});
  double prev_obj = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iters = 0;

  for (int outer = 0; outer < options.max_outer_iters; ++outer) {
    // H-step: warm-started coordinate descent per pixel
    double a[2][2], b[2];
    for (int s = 0; s < 2; ++s)
      for (int t = 0; t < 2; ++t)
        a[s][t] = w[s][0] * w[t][0] + w[s][1] * w[t][1] + w[s][2] * w[t][2];
    for (std::size_t i = 0; i < v.size(); ++i) {
      for (int s = 0; s < 2; ++s)
        b[s] = w[s][0] * v[i][0] + w[s][1] * v[i][1] + w[s][2] * v[i][2];
      cd_solve(a, b, options.lambda, h[i].data(), 1e-10, 200);
    }

    // W-step: per-column exact least squares projected onto the
    // non-negative unit ball (keeps the objective non-increasing)
    double g[2][2] = {{0, 0}, {0, 0}};
    double bw[2][3] = {{0, 0, 0}, {0, 0, 0}};
    for (std::size_t i = 0; i < v.size(); ++i) {
      g[0][0] += h[i][0] * h[i][0];
      g[0][1] += h[i][0] * h[i][1];
      g[1][1] += h[i][1] * h[i][1];
      for (int c = 0; c < 3; ++c) {
        bw[0][c] += v[i][c] * h[i][0];
        bw[1][c] += v[i][c] * h[i][1];
      }
    }
    g[1][0] = g[0][1];
    for (int s = 0; s < 2; ++s) {
      if (g[s][s] <= 1e-12) continue;  // unused stain, keep previous vector
      double cand[3];
      double norm2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        cand[c] = (bw[s][c] - w[1 - s][c] * g[1 - s][s]) / g[s][s];
        if (cand[c] < 0.0) cand[c] = 0.0;
        norm2 += cand[c] * cand[c];
      }
      if (norm2 <= 1e-24) continue;
      const double norm = std::sqrt(norm2);
      const double scale = norm > 1.0 ? 1.0 / norm : 1.0;
      for (int c = 0; c < 3; ++c) w[s][c] = cand[c] * scale;
    }

    // renormalize columns to exactly unit norm; the (<= 1) scale factor is
    // absorbed into H, which can only shrink the L1 term
    for (int s = 0; s < 2; ++s) {
      double norm = std::sqrt(w[s][0] * w[s][0] + w[s][1] * w[s][1] + w[s][2] * w[s][2]);
      if (norm <= 1e-12) continue;
      for (int c = 0; c < 3; ++c) w[s][c] /= norm;
      if (std::fabs(norm - 1.0) > 1e-15)
        for (auto& hi : h) hi[s] *= norm;
    }

    const double obj = fit_objective(v, w, h, options.lambda);
    iters = outer + 1;
    if (trace) trace->objective.push_back(obj);
    if (std::isfinite(prev_obj)) {
      const double rel = (prev_obj - obj) / std::max(prev_obj, 1e-300);
      if (rel < options.rel_tol) {
        converged = true;
        prev_obj = obj;
        break;
      }
    }
    prev_obj = obj;
  }
  if (trace) trace->iterations = iters;

  // hematoxylin convention: larger blue-channel weight first
  bool swap = w[0][2] < w[1][2];
  StainModel model;
  model.stains[0] = swap ? w[1] : w[0];
  model.stains[1] = swap ? w[0] : w[1];
  std::vector<double> h0(v.size()), h1(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    h0[i] = h[i][swap ? 1 : 0];
    h1[i] = h[i][swap ? 0 : 1];
  }
  model.c_percentile[0] = percentile(std::move(h0), 0.99);
  model.c_percentile[1] = percentile(std::move(h1), 0.99);
  model.lambda = options.lambda;
  model.beta = options.beta;
  model.i0 = options.i0;
  model.converged = converged;
  return model;
}

ConcentrationMap solve_concentrations(const RgbImage& image, const StainModel& model) {
  ConcentrationMap out(image.width, image.height);
  double a[2][2];
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 2; ++t)
      a[s][t] = model.stains[s][0] * model.stains[t][0] +
                model.stains[s][1] * model.stains[t][1] +
                model.stains[s][2] * model.stains[t][2];
  const double inv = 1.0 / (model.i0 + 1.0);
  const std::int64_t n = static_cast<std::int64_t>(image.pixels());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    double od[3], b[2];
    od_of_pixel(&image.data[i * 3], inv, od);
    for (int s = 0; s < 2; ++s)
      b[s] = model.stains[s][0] * od[0] + model.stains[s][1] * od[1] +
             model.stains[s][2] * od[2];
    double h[2] = {0.0, 0.0};
    cd_solve(a, b, model.lambda, h, 1e-10, 500);
    out.data[i * 2] = h[0];
    out.data[i * 2 + 1] = h[1];
  }
  return out;
}

RgbImage normalize_stain(const RgbImage& source, const StainModel& source_model,
                         const StainModel& template_model) {
  static const char* kStainNames[2] = {"hematoxylin", "eosin"};
  double scale[2];
  for (int s = 0; s < 2; ++s) {
    if (source_model.c_percentile[s] <= 1e-6)
      throw std::runtime_error(
          std::string("normalize_stain: degenerate source concentration percentile for "
                      "stain row ") +
          std::to_string(s) + " (" + kStainNames[s] + ")");
    scale[s] = template_model.c_percentile[s] / source_model.c_percentile[s];
  }

  const ConcentrationMap conc = solve_concentrations(source, source_model);
  RgbImage out(source.width, source.height);
  const double i0p1 = template_model.i0 + 1.0;
  const std::int64_t n = static_cast<std::int64_t>(source.pixels());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const double h0 = conc.data[i * 2] * scale[0];
    const double h1 = conc.data[i * 2 + 1] * scale[1];
    for (int c = 0; c < 3; ++c) {
      const double od = template_model.stains[0][c] * h0 + template_model.stains[1][c] * h1;
      double v = std::round(i0p1 * std::exp(-od) - 1.0);
      out.data[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return out;
}

void save_stain_model(const StainModel& model, const std::string& path) {
  nlohmann::json j;
  j["w"] = {{model.stains[0][0], model.stains[0][1], model.stains[0][2]},
            {model.stains[1][0], model.stains[1][1], model.stains[1][2]}};
  j["c_percentile"] = {model.c_percentile[0], model.c_percentile[1]};
  j["lambda"] = model.lambda;
  j["beta"] = model.beta;
  j["i0"] = model.i0;
  j["converged"] = model.converged;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write stain model: " + path);
  out << j.dump(2) << "\n";
}

StainModel load_stain_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read stain model: " + path);
  nlohmann::json j;
  in >> j;
  StainModel model;
  const auto& w = j.at("w");
  if (w.size() != 2 || w[0].size() != 3 || w[1].size() != 3)
    throw std::runtime_error("stain model " + path + ": w must be 2x3");
  for (int s = 0; s < 2; ++s)
    for (int c = 0; c < 3; ++c) model.stains[s][c] = w[s][c].get<double>();
  const auto& cp = j.at("c_percentile");
  if (cp.size() != 2) throw std::runtime_error("stain model " + path + ": c_percentile must have 2 entries");
  model.c_percentile = {cp[0].get<double>(), cp[1].get<double>()};
  model.lambda = j.at("lambda").get<double>();
  model.beta = j.at("beta").get<double>();
  model.i0 = j.at("i0").get<double>();
  model.converged = j.value("converged", true);
  return model;
}

}  // namespace beds
