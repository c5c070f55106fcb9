#include "beds/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>

namespace beds {

namespace {

constexpr double kInf = 1e20;

void check_dims(const BinaryMask& a, const BinaryMask& b, const char* who) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument(std::string(who) + ": mask dimensions differ (" +
                                std::to_string(a.width) + "x" + std::to_string(a.height) +
                                " vs " + std::to_string(b.width) + "x" +
                                std::to_string(b.height) + ")");
}

// 1D squared distance transform, lower envelope of parabolas
void dt1d(const double* f, int n, double* d, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = double(q - v[k]) * (q - v[k]) + f[v[k]];
  }
}

// 8-connected component labels of the foreground (0 = background)
std::vector<int> connected_components(const BinaryMask& mask, int* out_count) {
  const int w = mask.width, h = mask.height;
  std::vector<int> comp(static_cast<std::size_t>(w) * h, 0);
  int count = 0;
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!mask.data[idx] || comp[idx]) continue;
      ++count;
      comp[idx] = count;
      stack.push_back(static_cast<int>(idx));
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int py = p / w, px = p % w;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dx && !dy) continue;
            const int nx = px + dx, ny = py + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
            if (mask.data[nidx] && !comp[nidx]) {
              comp[nidx] = count;
              stack.push_back(static_cast<int>(nidx));
            }
          }
        }
      }
    }
  }
  *out_count = count;
  return comp;
}

}  // namespace

double dsc(const BinaryMask& pred, const BinaryMask& gt) {
  check_dims(pred, gt, "dsc");
  const std::int64_t n = static_cast<std::int64_t>(pred.pixels());
  std::int64_t inter = 0, a = 0, b = 0;
#pragma omp parallel for schedule(static) reduction(+ : inter, a, b)
  for (std::int64_t i = 0; i < n; ++i) {
    inter += pred.data[i] & gt.data[i];
    a += pred.data[i];
    b += gt.data[i];
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

std::vector<double> squared_distance_transform(const BinaryMask& mask) {
  // pad one background pixel all around so the image border acts as background
  const int w = mask.width, h = mask.height;
  const int pw = w + 2, ph = h + 2;
  std::vector<double> f(static_cast<std::size_t>(pw) * ph, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      f[static_cast<std::size_t>(y + 1) * pw + (x + 1)] =
          mask.data[static_cast<std::size_t>(y) * w + x] ? kInf : 0.0;

  // columns
#pragma omp parallel for schedule(static)
  for (int x = 0; x < pw; ++x) {
    std::vector<double> col(ph), d(ph), z(ph + 1);
    std::vector<int> v(ph);
    for (int y = 0; y < ph; ++y) col[y] = f[static_cast<std::size_t>(y) * pw + x];
    dt1d(col.data(), ph, d.data(), v.data(), z.data());
    for (int y = 0; y < ph; ++y) f[static_cast<std::size_t>(y) * pw + x] = d[y];
  }
  // rows
#pragma omp parallel for schedule(static)
  for (int y = 0; y < ph; ++y) {
    std::vector<double> d(pw), z(pw + 1);
    std::vector<int> v(pw);
    dt1d(&f[static_cast<std::size_t>(y) * pw], pw, d.data(), v.data(), z.data());
    for (int x = 0; x < pw; ++x) f[static_cast<std::size_t>(y) * pw + x] = d[x];
  }

  std::vector<double> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<std::size_t>(y) * w + x] = f[static_cast<std::size_t>(y + 1) * pw + (x + 1)];
  return out;
}

LabelMap instance_labels(const BinaryMask& mask, const WatershedOptions& options) {
  const int w = mask.width, h = mask.height;
  LabelMap lm(w, h);
  const std::vector<double> d2 = squared_distance_transform(mask);
  const double min_peak_d2 = options.min_peak_value * options.min_peak_value;
  const double min_sep2 = options.min_peak_distance * options.min_peak_distance;
  const int win = static_cast<int>(std::ceil(options.min_peak_distance));

  // candidate peaks: window-maximal distance values above the floor
  struct Peak {
    double d2;
    int x, y;
  };
  std::vector<Peak> candidates;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = d2[static_cast<std::size_t>(y) * w + x];
      if (v < min_peak_d2) continue;
      bool is_max = true;
      for (int dy = -win; dy <= win && is_max; ++dy) {
        const int ny = y + dy;
        if (ny < 0 || ny >= h) continue;
        for (int dx = -win; dx <= win; ++dx) {
          const int nx = x + dx;
          if (nx < 0 || nx >= w || (!dx && !dy)) continue;
          if (d2[static_cast<std::size_t>(ny) * w + nx] > v) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) candidates.push_back({v, x, y});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Peak& a, const Peak& b) {
    if (a.d2 != b.d2) return a.d2 > b.d2;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  // greedy acceptance with minimum separation
  std::vector<Peak> markers;
  for (const Peak& c : candidates) {
    bool ok = true;
    for (const Peak& m : markers) {
      const double dx = c.x - m.x, dy = c.y - m.y;
      if (dx * dx + dy * dy < min_sep2) {
        ok = false;
        break;
      }
    }
    if (ok) markers.push_back(c);
  }

  // every component must carry at least one marker
  int n_comp = 0;
  std::vector<int> comp = connected_components(mask, &n_comp);
  std::vector<char> comp_has_marker(n_comp + 1, 0);
  for (const Peak& m : markers)
    comp_has_marker[comp[static_cast<std::size_t>(m.y) * w + m.x]] = 1;
  std::vector<Peak> comp_best(n_comp + 1, Peak{-1.0, 0, 0});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int c = comp[static_cast<std::size_t>(y) * w + x];
      if (!c || comp_has_marker[c]) continue;
      const double v = d2[static_cast<std::size_t>(y) * w + x];
      if (v > comp_best[c].d2) comp_best[c] = {v, x, y};
    }
  }
  for (int c = 1; c <= n_comp; ++c)
    if (!comp_has_marker[c] && comp_best[c].d2 >= 0.0) markers.push_back(comp_best[c]);

  lm.count = static_cast<int>(markers.size());
  if (markers.empty()) return lm;

  // flood on the negated distance map: highest ground claimed first;
  // ties resolve by pixel index, so results are fully deterministic
  struct Entry {
    double d2;
    int idx;
    int label;
  };
  auto cmp = [](const Entry& a, const Entry& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;  // max-heap on distance
    if (a.idx != b.idx) return a.idx > b.idx;
    return a.label > b.label;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> pq(cmp);
  for (std::size_t i = 0; i < markers.size(); ++i) {
    const int idx = markers[i].y * w + markers[i].x;
    pq.push({markers[i].d2, idx, static_cast<int>(i + 1)});
  }
  while (!pq.empty()) {
    const Entry e = pq.top();
    pq.pop();
    if (lm.labels[e.idx]) continue;
    lm.labels[e.idx] = e.label;
    const int py = e.idx / w, px = e.idx % w;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (!dx && !dy) continue;
        const int nx = px + dx, ny = py + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int nidx = ny * w + nx;
        if (mask.data[nidx] && !lm.labels[nidx])
          pq.push({d2[nidx], nidx, e.label});
      }
    }
  }
  return lm;
}

ObjectScore object_f1(const BinaryMask& pred, const BinaryMask& gt, double iou_threshold,
                      const WatershedOptions& options) {
  check_dims(pred, gt, "object_f1");
  const LabelMap lp = instance_labels(pred, options);
  const LabelMap lg = instance_labels(gt, options);

  std::vector<std::int64_t> area_p(lp.count + 1, 0), area_g(lg.count + 1, 0);
  std::map<std::pair<int, int>, std::int64_t> inter;
  for (std::size_t i = 0; i < lp.labels.size(); ++i) {
    if (lp.labels[i]) ++area_p[lp.labels[i]];
    if (lg.labels[i]) ++area_g[lg.labels[i]];
    if (lp.labels[i] && lg.labels[i]) ++inter[{lp.labels[i], lg.labels[i]}];
  }

  struct Cand {
    double iou;
    int pl, gl;
  };
  std::vector<Cand> cands;
  cands.reserve(inter.size());
  for (const auto& [key, count] : inter) {
    const double u = static_cast<double>(area_p[key.first] + area_g[key.second] - count);
    cands.push_back({static_cast<double>(count) / u, key.first, key.second});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.pl != b.pl) return a.pl < b.pl;
    return a.gl < b.gl;
  });

  ObjectScore score;
  std::vector<char> used_p(lp.count + 1, 0), used_g(lg.count + 1, 0);
  for (const Cand& c : cands) {
    if (c.iou < iou_threshold) break;
    if (used_p[c.pl] || used_g[c.gl]) continue;
    used_p[c.pl] = used_g[c.gl] = 1;
    score.match.pairs.push_back({c.pl, c.gl, c.iou});
  }
  score.match.true_positives = static_cast<int>(score.match.pairs.size());
  score.match.false_positives = lp.count - score.match.true_positives;
  score.match.false_negatives = lg.count - score.match.true_positives;

  const int tp = score.match.true_positives;
  if (lp.count == 0 && lg.count == 0) {
    score.f1 = score.precision = score.recall = 1.0;
  } else {
    score.precision = lp.count > 0 ? static_cast<double>(tp) / lp.count : 0.0;
    score.recall = lg.count > 0 ? static_cast<double>(tp) / lg.count : 0.0;
    score.f1 = 2.0 * tp / static_cast<double>(2 * tp + score.match.false_positives +
                                              score.match.false_negatives);
  }
  return score;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    WilcoxonMethod method) {
  if (a.size() != b.size())
    throw std::invalid_argument("wilcoxon_signed_rank: sample lengths differ (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                                ")");
  if (a.size() < 5)
    throw std::invalid_argument("wilcoxon_signed_rank: need at least 5 pairs, got " +
                                std::to_string(a.size()));

  std::vector<double> diffs;
  diffs.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  WilcoxonResult result;
  result.n_effective = static_cast<int>(diffs.size());
  if (diffs.empty()) {
    result.statistic = 0.0;
    result.p_value = 1.0;
    return result;
  }
  const int n = result.n_effective;

  // ranks of |d| with average ranks for ties
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return std::fabs(diffs[i]) < std::fabs(diffs[j]); });
  std::vector<double> rank(n, 0.0);
  std::vector<int> tie_sizes;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && std::fabs(diffs[order[j + 1]]) == std::fabs(diffs[order[i]])) ++j;
    const double avg = (i + j) / 2.0 + 1.0;  // 1-based average rank
    for (int t = i; t <= j; ++t) rank[order[t]] = avg;
    tie_sizes.push_back(j - i + 1);
    i = j + 1;
  }

  double w_plus = 0.0;
  for (int t = 0; t < n; ++t)
    if (diffs[t] > 0.0) w_plus += rank[t];
  const double total = n * (n + 1) / 2.0;
  const double w_minus = total - w_plus;
  result.statistic = std::min(w_plus, w_minus);

  const bool exact =
      method == WilcoxonMethod::Exact || (method == WilcoxonMethod::Auto && n <= 20);
  if (exact) {
    // distribution of W+ over all 2^n equally likely sign assignments, in half-rank units
    std::vector<long long> r2(n);
    long long sum2 = 0;
    for (int t = 0; t < n; ++t) {
      r2[t] = std::llround(2.0 * rank[t]);
      sum2 += r2[t];
    }
    std::vector<double> dist(sum2 + 1, 0.0);
    dist[0] = 1.0;
    for (int t = 0; t < n; ++t)
      for (long long s = sum2; s >= r2[t]; --s) dist[s] += dist[s - r2[t]];
    const double denom = std::ldexp(1.0, n);  // 2^n
    const long long w2 = std::llround(2.0 * w_plus);
    double cdf_le = 0.0, cdf_ge = 0.0;
    for (long long s = 0; s <= sum2; ++s) {
      if (s <= w2) cdf_le += dist[s];
      if (s >= w2) cdf_ge += dist[s];
    }
    result.p_value = std::min(1.0, 2.0 * std::min(cdf_le, cdf_ge) / denom);
  } else {
    const double mu = n * (n + 1) / 4.0;
    double tie_corr = 0.0;
    for (int t : tie_sizes) tie_corr += static_cast<double>(t) * t * t - t;
    const double sigma2 = n * (n + 1) * (2.0 * n + 1) / 24.0 - tie_corr / 48.0;
    const double sigma = std::sqrt(sigma2);
    const double z = (result.statistic - mu + 0.5) / sigma;  // continuity correction
    const double phi = 0.5 * std::erfc(-z / std::sqrt(2.0));
    result.p_value = std::min(1.0, 2.0 * phi);
  }
  return result;
}

}  // namespace beds
