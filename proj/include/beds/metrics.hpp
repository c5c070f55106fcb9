#pragma once

#include <tuple>
#include <vector>

#include "beds/image.hpp"

namespace beds {

// Instance labeling of a binary mask; 0 is background, foreground labels are
// contiguous 1..L.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<int> labels;
  int count = 0;  // L

  LabelMap() = default;
  LabelMap(int w, int h) : width(w), height(h), labels(static_cast<std::size_t>(w) * h, 0) {}
};

struct MatchPair {
  int pred_label = 0;
  int gt_label = 0;
  double iou = 0.0;
};

struct MatchResult {
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  std::vector<MatchPair> pairs;
};

struct ObjectScore {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  MatchResult match;
};

// Dice similarity coefficient 2|A∩B|/(|A|+|B|); both masks empty -> 1.
double dsc(const BinaryMask& pred, const BinaryMask& gt);

// Squared Euclidean distance from each foreground pixel to the nearest
// background pixel; pixels outside the image count as background.
std::vector<double> squared_distance_transform(const BinaryMask& mask);

struct WatershedOptions {
  double min_peak_distance = 5.0;  // Euclidean separation between markers
  double min_peak_value = 2.0;     // distance-map value a marker must reach
};

// Marker-controlled watershed on the negated distance transform, flooding
// within the foreground only. Components with no qualifying peak get one
// marker at their distance maximum, so every component receives a label.
LabelMap instance_labels(const BinaryMask& mask, const WatershedOptions& options = {});

// Object-wise F1: watershed instances on both masks, greedy IoU matching in
// descending IoU, matches below the threshold discarded. Both empty -> 1.
ObjectScore object_f1(const BinaryMask& pred, const BinaryMask& gt,
                      double iou_threshold = 0.5,
                      const WatershedOptions& options = {});

enum class WilcoxonMethod { Auto, Exact, Normal };

struct WilcoxonResult {
  double statistic = 0.0;  // W = min(W+, W-)
  double p_value = 1.0;    // two-sided
  int n_effective = 0;     // pairs remaining after dropping zero differences
};

// Wilcoxon signed-rank test with average ranks for ties. Exact p by
// enumerating all 2^n sign assignments for n_effective <= 20; normal
// approximation with tie and continuity correction otherwise.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    WilcoxonMethod method = WilcoxonMethod::Auto);

}  // namespace beds
