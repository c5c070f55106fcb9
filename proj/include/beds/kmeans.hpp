#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "beds/features.hpp"

namespace beds {

struct KmeansResult {
  std::vector<int> assignments;                // one per input point
  std::vector<std::vector<double>> centroids;  // k vectors
  std::vector<double> inertia_trace;           // sum of squared distances, per Lloyd iteration
  int iterations = 0;
};

// Lloyd's algorithm with seeded k-means++ initialization. Terminates on an
// assignment fixpoint or max_iters; an empty cluster is re-seeded to the
// point farthest from its assigned centroid. Assignment distances are
// computed in parallel; centroid accumulation runs in fixed point order so
// results do not depend on worker count.
KmeansResult kmeans(const std::vector<FeatureVector>& features, int k, std::uint64_t seed,
                    int max_iters = 100);

struct TemplateSet {
  int m = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> template_ids;
  std::vector<std::vector<double>> centroids;
  std::string feature_kind = "builtin-72";
};

// m representative corpus members: k-means the feature vectors, then take
// the image nearest each centroid. Ties break toward the lexicographically
// smallest id; an image already chosen for another cluster is skipped in
// favor of the next-nearest unused one.
TemplateSet select_templates(const std::vector<FeatureVector>& corpus, int m,
                             std::uint64_t seed);

void save_template_set(const TemplateSet& set, const std::string& path);
TemplateSet load_template_set(const std::string& path);

}  // namespace beds
