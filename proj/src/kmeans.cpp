#include "beds/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "beds/rng.hpp"

namespace beds {

namespace {

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

}  // namespace

KmeansResult kmeans(const std::vector<FeatureVector>& features, int k, std::uint64_t seed,
                    int max_iters) {
  const int n = static_cast<int>(features.size());
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (n < k)
    throw std::invalid_argument("kmeans: " + std::to_string(n) + " points is fewer than k=" +
                                std::to_string(k));
  const std::size_t dim = features[0].values.size();
  for (const auto& f : features)
    if (f.values.size() != dim)
      throw std::invalid_argument("kmeans: feature vectors have inconsistent lengths");

  Rng rng(hash_key(seed, "kmeans++"));
  KmeansResult result;
  auto& centroids = result.centroids;
  centroids.reserve(k);

  // k-means++ seeding
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(n, 0);
  int first = static_cast<int>(rng.below(n));
  centroids.push_back(features[first].values);
  chosen[first] = 1;
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], dist2(features[i].values, centroids.back()));
      total += d2[i];
    }
    int pick = -1;
    if (total > 0.0) {
      const double r = rng.next_double() * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = n - 1;
    }
    if (pick < 0 || chosen[pick]) {
      // all remaining mass sits on already-chosen points; take the first
      // unchosen index for a deterministic fallback
      for (int i = 0; i < n; ++i)
        if (!chosen[i]) {
          pick = i;
          break;
        }
    }
    chosen[pick] = 1;
    centroids.push_back(features[pick].values);
  }

  std::vector<int> assign(n, -1), prev_assign(n, -2);
  result.iterations = 0;
  for (int iter = 0; iter < max_iters; ++iter) {
    // assignment step (parallel; ties go to the lowest centroid index)
    double inertia = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : inertia)
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (int c = 0; c < k; ++c) {
        const double d = dist2(features[i].values, centroids[c]);
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      assign[i] = best_c;
      inertia += best;
    }
    result.inertia_trace.push_back(inertia);
    result.iterations = iter + 1;

    // update step, fixed point order
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      ++counts[assign[i]];
      auto& s = sums[assign[i]];
      const auto& f = features[i].values;
      for (std::size_t d = 0; d < dim; ++d) s[d] += f[d];
    }

    bool repaired = false;
    std::vector<char> stolen(n, 0);
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / counts[c];
      } else {
        // empty cluster: move it onto the point farthest from its centroid
        double far_d = -1.0;
        int far_i = 0;
        for (int i = 0; i < n; ++i) {
          if (stolen[i]) continue;
          const double d = dist2(features[i].values, centroids[assign[i]]);
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        centroids[c] = features[far_i].values;
        stolen[far_i] = 1;
        repaired = true;
      }
    }

    if (!repaired && assign == prev_assign) break;
    prev_assign = assign;
  }

  result.assignments = std::move(assign);
  return result;
}

TemplateSet select_templates(const std::vector<FeatureVector>& corpus, int m,
                             std::uint64_t seed) {
  if (static_cast<int>(corpus.size()) < m)
    throw std::invalid_argument("select_templates: corpus of " + std::to_string(corpus.size()) +
                                " images is smaller than m=" + std::to_string(m));
  {
    std::set<std::string> ids;
    for (const auto& f : corpus)
      if (!ids.insert(f.image_id).second)
        throw std::invalid_argument("select_templates: duplicate image_id '" + f.image_id + "'");
  }

  KmeansResult km = kmeans(corpus, m, seed);

  TemplateSet set;
  set.m = m;
  set.seed = seed;
  set.centroids = km.centroids;
  std::set<std::string> used;
  for (int c = 0; c < m; ++c) {
    // order candidates by (distance, id); take the nearest unused image
    std::vector<int> order(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double da = dist2(corpus[a].values, km.centroids[c]);
      const double db = dist2(corpus[b].values, km.centroids[c]);
      if (da != db) return da < db;
      return corpus[a].image_id < corpus[b].image_id;
    });
    for (int idx : order) {
      if (used.count(corpus[idx].image_id)) continue;
      used.insert(corpus[idx].image_id);
      set.template_ids.push_back(corpus[idx].image_id);
      break;
    }
  }
  return set;
}

void save_template_set(const TemplateSet& set, const std::string& path) {
  nlohmann::json j;
  j["m"] = set.m;
  j["seed"] = set.seed;
  j["template_ids"] = set.template_ids;
  j["feature_kind"] = set.feature_kind;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write template set: " + path);
  out << j.dump(2) << "\n";
}

TemplateSet load_template_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read template set: " + path);
  nlohmann::json j;
  in >> j;
  TemplateSet set;
  set.m = j.at("m").get<int>();
  set.seed = j.at("seed").get<std::uint64_t>();
  set.template_ids = j.at("template_ids").get<std::vector<std::string>>();
  set.feature_kind = j.value("feature_kind", std::string("builtin-72"));
  if (static_cast<int>(set.template_ids.size()) != set.m)
    throw std::runtime_error("template set " + path + ": template_ids length does not match m");
  return set;
}

}  // namespace beds
