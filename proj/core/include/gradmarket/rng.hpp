#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

namespace gradmarket {

// splitmix64 finalizer. Used for seed derivation and config hashing.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// FNV-1a over bytes.
constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Deterministic random stream. std::mt19937_64 raw output is fully specified
// by the standard, and all distributions below are implemented by hand, so a
// given seed produces the same sequence on every platform and standard
// library. (std::uniform_int_distribution and friends are deliberately not
// used: their algorithms are implementation-defined.)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased uniform integer in [0, n) by rejection.
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: empty range");
    const std::uint64_t bound = n;
    const std::uint64_t m_mod =
        (std::numeric_limits<std::uint64_t>::max() % bound + 1) % bound;
    std::uint64_t r = next_u64();
    if (m_mod != 0) {
      const std::uint64_t limit = 0 - m_mod;  // 2^64 - (2^64 mod n), wrapped
      while (r >= limit) r = next_u64();
    }
    return static_cast<std::size_t>(r % bound);
  }

  // Standard normal via Box-Muller. One independent pair of uniforms per
  // call; the sine half of the pair is discarded to keep the stream position
  // a pure function of the call count.
  double normal() {
    double u1;
    do {
      u1 = uniform01();
    } while (u1 == 0.0);
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Gamma(shape, 1) via Marsaglia-Tsang squeeze, with the usual boost for
  // shape < 1.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
    if (shape < 1.0) {
      const double u = 1.0 - uniform01();  // (0, 1]
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      const double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

  // Symmetric Dirichlet-style draw from per-component concentrations.
  std::vector<double> dirichlet(const std::vector<double>& alpha) {
    std::vector<double> draw(alpha.size());
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      draw[i] = gamma(alpha[i]);
      total += draw[i];
    }
    if (total <= 0.0) {
      // All gammas underflowed; fall back to the uniform simplex point.
      const double p = 1.0 / static_cast<double>(alpha.size());
      for (double& v : draw) v = p;
      return draw;
    }
    for (double& v : draw) v /= total;
    return draw;
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  // k distinct indices from [0, n), returned in ascending order.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

inline std::vector<std::size_t> Rng::sample_indices(std::size_t n, std::size_t k) {
  if (k > n) throw std::invalid_argument("sample_indices: k exceeds n");
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  // Partial Fisher-Yates: the first k slots become the sample.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(n - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace gradmarket
