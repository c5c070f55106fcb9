#pragma once

#include <string>
#include <vector>

#include "beds/image.hpp"

namespace beds {

struct FeatureVector {
  std::string image_id;
  std::vector<double> values;
};

// Built-in 72-dim style descriptor: 8-bin histograms per OD channel (24),
// 8-bin histograms per RGB channel (24), per-channel mean/std in RGB and OD
// (12), 12 gradient-magnitude histogram bins; L2-normalized. A deterministic
// stand-in for a pretrained embedding; externally computed embeddings enter
// through ingest_embeddings instead.
FeatureVector extract_features(const RgbImage& image, const std::string& image_id = "");

inline constexpr int kStyleFeatureLength = 72;

// CSV with header "image_id,f0,f1,..."; one FeatureVector per row, order
// preserved. Ragged rows, non-numeric cells and duplicate ids are errors.
std::vector<FeatureVector> ingest_embeddings(const std::string& path);

}  // namespace beds
