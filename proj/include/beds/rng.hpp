#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>
#include <vector>

namespace beds {

// splitmix64 finalizer. All randomness in the pipeline flows through this so
// that results are identical across platforms and worker counts.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_str(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t hash_key(std::uint64_t seed) { return mix64(seed); }
inline std::uint64_t hash_key(std::uint64_t seed, std::uint64_t a) {
  return mix64(mix64(seed) ^ a);
}
inline std::uint64_t hash_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(mix64(seed) ^ a) ^ b);
}
inline std::uint64_t hash_key(std::uint64_t seed, std::uint64_t a, std::string_view tag) {
  return mix64(mix64(mix64(seed) ^ a) ^ hash_str(tag));
}
inline std::uint64_t hash_key(std::uint64_t seed, std::string_view tag) {
  return mix64(mix64(seed) ^ hash_str(tag));
}
inline std::uint64_t hash_key(std::uint64_t seed, std::string_view tag, std::uint64_t a) {
  return mix64(mix64(mix64(seed) ^ hash_str(tag)) ^ a);
}

// Counter-based generator (splitmix64 stream). Cheap to fork per task.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // uniform in [0, bound); bound > 0
  std::uint64_t below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  // standard normal, Box-Muller (second value discarded for statelessness)
  double normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from [0, n), order unspecified
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int i = 0; i < k; ++i) {
      int j = i + static_cast<int>(below(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  std::uint64_t state_;
};

}  // namespace beds
