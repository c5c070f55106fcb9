#include "beds/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "beds/metrics.hpp"
#include "beds/rng.hpp"

namespace beds {

namespace {

constexpr double kOdMax = 5.545177444479562;  // ln(256)

// horizontal+vertical Gaussian blur with clamped borders
void gaussian_blur(const float* src, float* dst, float* tmp, int w, int h, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[i + radius] = static_cast<float>(v);
    sum += v;
  }
  for (auto& k : kernel) k = static_cast<float>(k / sum);

#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const float* row = &src[static_cast<std::size_t>(y) * w];
    float* out = &tmp[static_cast<std::size_t>(y) * w];
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        const int xi = std::clamp(x + i, 0, w - 1);
        acc += kernel[i + radius] * row[xi];
      }
      out[x] = acc;
    }
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    float* out = &dst[static_cast<std::size_t>(y) * w];
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        const int yi = std::clamp(y + i, 0, h - 1);
        acc += kernel[i + radius] * tmp[static_cast<std::size_t>(yi) * w + x];
      }
      out[x] = acc;
    }
  }
}

// 5x5 box mean and std with clamped borders
void local_stats(const float* src, float* mean_out, float* std_out, int w, int h) {
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float s = 0.0f, s2 = 0.0f;
      for (int dy = -2; dy <= 2; ++dy) {
        const int yi = std::clamp(y + dy, 0, h - 1);
        for (int dx = -2; dx <= 2; ++dx) {
          const int xi = std::clamp(x + dx, 0, w - 1);
          const float v = src[static_cast<std::size_t>(yi) * w + xi];
          s += v;
          s2 += v * v;
        }
      }
      const float m = s / 25.0f;
      const float var = std::max(0.0f, s2 / 25.0f - m * m);
      mean_out[static_cast<std::size_t>(y) * w + x] = m;
      std_out[static_cast<std::size_t>(y) * w + x] = std::sqrt(var);
    }
  }
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

PixelFeatureMap compute_pixel_features(const RgbImage& image) {
  const int w = image.width, h = image.height;
  PixelFeatureMap fm(w, h);
  const std::size_t n = fm.pixels();

  // planes 0..5: r, g, b, od_r, od_g, od_b (unit-scaled)
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = image.data[i * 3 + c];
      fm.plane(c)[i] = static_cast<float>(v / 255.0);
      fm.plane(3 + c)[i] = static_cast<float>(-std::log((v + 1.0) / 256.0) / kOdMax);
    }
  }

  // planes 6..23: blur of each base at sigma 1, 2, 4
  std::vector<float> tmp(n);
  static const double kSigmas[3] = {1.0, 2.0, 4.0};
  for (int s = 0; s < 3; ++s)
    for (int c = 0; c < 6; ++c)
      gaussian_blur(fm.plane(c), fm.plane(6 + s * 6 + c), tmp.data(), w, h, kSigmas[s]);

  // planes 24..35: local 5x5 mean/std of each base
  for (int c = 0; c < 6; ++c)
    local_stats(fm.plane(c), fm.plane(24 + c), fm.plane(30 + c), w, h);

  return fm;
}

std::vector<float> LinearPixelSegmenter::predict_features(const PixelFeatureMap& fm) const {
  const std::size_t n = fm.pixels();
  std::vector<float> probs(n);
  const int nf = kPixelFeatureCount;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    double z = weights[nf];
    for (int c = 0; c < nf; ++c)
      z += weights[c] * ((fm.planes[c * n + i] - feature_mean[c]) / feature_scale[c]);
    probs[i] = static_cast<float>(sigmoid(z));
  }
  return probs;
}

std::vector<float> LinearPixelSegmenter::predict_patch(const RgbImage& patch) const {
  return predict_features(compute_pixel_features(patch));
}

PatchSample sample_patch_features(const RgbImage& patch, const BinaryMask& mask,
                                  int pixels_per_patch, std::uint64_t seed) {
  if (patch.width != mask.width || patch.height != mask.height)
    throw std::invalid_argument("sample_patch_features: image/mask dimension mismatch");
  const PixelFeatureMap fm = compute_pixel_features(patch);
  const std::size_t n = fm.pixels();
  const int k = std::min<std::int64_t>(pixels_per_patch, static_cast<std::int64_t>(n));

  Rng rng(seed);
  std::vector<int> picks = rng.sample_without_replacement(static_cast<int>(n), k);

  PatchSample out;
  out.count = k;
  out.x.resize(static_cast<std::size_t>(k) * kPixelFeatureCount);
  out.y.resize(k);
  for (int r = 0; r < k; ++r) {
    const std::size_t px = static_cast<std::size_t>(picks[r]);
    for (int c = 0; c < kPixelFeatureCount; ++c)
      out.x[static_cast<std::size_t>(r) * kPixelFeatureCount + c] = fm.planes[c * n + px];
    out.y[r] = mask.data[px];
  }
  return out;
}

LinearPixelSegmenter train_on_samples(const std::vector<const PatchSample*>& samples,
                                      const ValidationSet& val, std::uint64_t seed,
                                      const TrainConfig& config) {
  if (samples.empty()) throw std::invalid_argument("train_on_samples: empty training set");
  if (val.features.empty()) throw std::invalid_argument("train_on_samples: empty validation set");

  const int nf = kPixelFeatureCount;
  std::int64_t total = 0;
  for (const PatchSample* s : samples) total += s->count;
  if (total == 0) throw std::invalid_argument("train_on_samples: no training pixels");

  // flatten into one design matrix
  std::vector<float> x(static_cast<std::size_t>(total) * nf);
  std::vector<std::uint8_t> y(total);
  std::int64_t row = 0;
  for (const PatchSample* s : samples) {
    std::copy(s->x.begin(), s->x.end(), x.begin() + row * nf);
    std::copy(s->y.begin(), s->y.end(), y.begin() + row);
    row += s->count;
  }

  LinearPixelSegmenter model;
  model.feature_mean.assign(nf, 0.0);
  model.feature_scale.assign(nf, 1.0);
  for (std::int64_t r = 0; r < total; ++r)
    for (int c = 0; c < nf; ++c) model.feature_mean[c] += x[r * nf + c];
  for (int c = 0; c < nf; ++c) model.feature_mean[c] /= static_cast<double>(total);
  std::vector<double> var(nf, 0.0);
  for (std::int64_t r = 0; r < total; ++r)
    for (int c = 0; c < nf; ++c) {
      const double d = x[r * nf + c] - model.feature_mean[c];
      var[c] += d * d;
    }
  for (int c = 0; c < nf; ++c) {
    const double sd = std::sqrt(var[c] / static_cast<double>(total));
    model.feature_scale[c] = sd > 1e-8 ? sd : 1.0;
  }

  Rng rng(hash_key(seed, "sgd"));
  std::vector<double> w(nf + 1);
  for (int c = 0; c <= nf; ++c) w[c] = 0.01 * rng.normal();

  std::vector<std::int64_t> order(total);
  for (std::int64_t r = 0; r < total; ++r) order[r] = r;
  std::vector<double> grad(nf + 1);

  auto val_dsc = [&](const std::vector<double>& weights) {
    double sum = 0.0;
    for (std::size_t p = 0; p < val.features.size(); ++p) {
      const PixelFeatureMap& fm = val.features[p];
      const std::size_t n = fm.pixels();
      BinaryMask predicted(fm.width, fm.height);
#pragma omp parallel for schedule(static)
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        double z = weights[nf];
        for (int c = 0; c < nf; ++c)
          z += weights[c] * ((fm.planes[c * n + i] - model.feature_mean[c]) /
                             model.feature_scale[c]);
        predicted.data[i] = sigmoid(z) > config.threshold ? 1 : 0;
      }
      sum += dsc(predicted, *val.masks[p]);
    }
    return sum / static_cast<double>(val.features.size());
  };

  std::vector<double> best_w = w;
  double best_dsc = -1.0;
  int best_epoch = 0;
  int epochs_run = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::int64_t start = 0; start < total; start += config.batch_size) {
      const std::int64_t end = std::min<std::int64_t>(start + config.batch_size, total);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::int64_t r = start; r < end; ++r) {
        const std::int64_t idx = order[r];
        double z = w[nf];
        const float* xr = &x[idx * nf];
        for (int c = 0; c < nf; ++c)
          z += w[c] * ((xr[c] - model.feature_mean[c]) / model.feature_scale[c]);
        const double p = sigmoid(z);
        const double err = p - static_cast<double>(y[idx]);
        loss_sum += y[idx] ? -std::log(std::max(p, 1e-300))
                           : -std::log(std::max(1.0 - p, 1e-300));
        for (int c = 0; c < nf; ++c)
          grad[c] += err * ((xr[c] - model.feature_mean[c]) / model.feature_scale[c]);
        grad[nf] += err;
      }
      const double scale = config.learning_rate / static_cast<double>(end - start);
      for (int c = 0; c <= nf; ++c) w[c] -= scale * grad[c];
    }
    epochs_run = epoch;
    model.meta.epoch_train_loss.push_back(loss_sum / static_cast<double>(total));

    const double d = val_dsc(w);
    model.meta.epoch_val_dsc.push_back(d);
    if (d > best_dsc + 1e-12) {
      best_dsc = d;
      best_epoch = epoch;
      best_w = w;
    } else if (epoch - best_epoch >= config.patience) {
      break;
    }
  }

  model.weights = std::move(best_w);
  model.meta.seed = seed;
  model.meta.val_dsc = best_dsc;
  model.meta.best_epoch = best_epoch;
  model.meta.epochs_run = epochs_run;
  return model;
}

void save_segmenter(const LinearPixelSegmenter& model, const std::string& path_prefix) {
  const int nf = kPixelFeatureCount;
  std::vector<double> flat;
  flat.reserve(3 * nf + 1);
  flat.insert(flat.end(), model.weights.begin(), model.weights.end());
  flat.insert(flat.end(), model.feature_mean.begin(), model.feature_mean.end());
  flat.insert(flat.end(), model.feature_scale.begin(), model.feature_scale.end());

  const std::string bin_path = path_prefix + ".bin";
  std::FILE* f = std::fopen(bin_path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write model weights: " + bin_path);
  // weights are stored little-endian; this writes the native layout, which is
  // little-endian on all supported targets
  const std::size_t written = std::fwrite(flat.data(), sizeof(double), flat.size(), f);
  std::fclose(f);
  if (written != flat.size()) throw std::runtime_error("short write: " + bin_path);

  nlohmann::json j;
  j["feature_count"] = nf;
  j["weight_layout"] = "weights+bias, feature_mean, feature_scale";
  j["seed"] = model.meta.seed;
  j["subset_id"] = model.meta.subset_id;
  j["val_dsc"] = model.meta.val_dsc;
  j["best_epoch"] = model.meta.best_epoch;
  j["epochs_run"] = model.meta.epochs_run;
  j["epoch_val_dsc"] = model.meta.epoch_val_dsc;
  j["epoch_train_loss"] = model.meta.epoch_train_loss;
  j["sigmas"] = {1.0, 2.0, 4.0};
  std::ofstream out(path_prefix + ".json");
  if (!out) throw std::runtime_error("cannot write model sidecar: " + path_prefix + ".json");
  out << j.dump(2) << "\n";
}

LinearPixelSegmenter load_segmenter(const std::string& path_prefix) {
  std::ifstream meta_in(path_prefix + ".json");
  if (!meta_in) throw std::runtime_error("cannot read model sidecar: " + path_prefix + ".json");
  nlohmann::json j;
  meta_in >> j;
  const int nf = j.at("feature_count").get<int>();
  if (nf != kPixelFeatureCount)
    throw std::runtime_error("model " + path_prefix + " has " + std::to_string(nf) +
                             " features; this build expects " +
                             std::to_string(kPixelFeatureCount));

  const std::string bin_path = path_prefix + ".bin";
  std::FILE* f = std::fopen(bin_path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot read model weights: " + bin_path);
  std::vector<double> flat(3 * nf + 1);
  const std::size_t read = std::fread(flat.data(), sizeof(double), flat.size(), f);
  std::fclose(f);
  if (read != flat.size())
    throw std::runtime_error("model weights file is truncated: " + bin_path);

  LinearPixelSegmenter model;
  model.weights.assign(flat.begin(), flat.begin() + nf + 1);
  model.feature_mean.assign(flat.begin() + nf + 1, flat.begin() + 2 * nf + 1);
  model.feature_scale.assign(flat.begin() + 2 * nf + 1, flat.end());
  model.meta.seed = j.at("seed").get<std::uint64_t>();
  model.meta.subset_id = j.at("subset_id").get<int>();
  model.meta.val_dsc = j.at("val_dsc").get<double>();
  model.meta.best_epoch = j.at("best_epoch").get<int>();
  model.meta.epochs_run = j.at("epochs_run").get<int>();
  model.meta.epoch_val_dsc = j.value("epoch_val_dsc", std::vector<double>{});
  model.meta.epoch_train_loss = j.value("epoch_train_loss", std::vector<double>{});
  return model;
}

}  // namespace beds
