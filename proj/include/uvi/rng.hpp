#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "uvi/errors.hpp"

namespace uvi::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a over an arbitrary byte label, then mixed with the parent seed
// through splitmix64. Streams derived under distinct labels are
// independent for every practical purpose and reproducible in isolation.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : label) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = parent ^ h;
  std::uint64_t a = splitmix64(s);
  std::uint64_t b = splitmix64(s);
  return a ^ (b << 1);
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view label, std::uint64_t index) {
  char buf[32];
  int len = 0;
  std::uint64_t v = index;
  do {
    buf[len++] = static_cast<char>('0' + (v % 10));
    v /= 10;
  } while (v != 0);
  std::string lab(label);
  lab.push_back('#');
  for (int i = len - 1; i >= 0; --i) lab.push_back(buf[i]);
  return derive_seed(parent, lab);
}

// Deterministic stream addressed by a seed. Sub-streams derive from the
// seed, not the engine state, so the consumption pattern of one stream
// never leaks into another.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  Stream substream(std::string_view label) const { return Stream(derive_seed(seed_, label)); }
  Stream substream(std::string_view label, std::uint64_t index) const {
    return Stream(derive_seed(seed_, label, index));
  }

  // Uniform on (0,1), both endpoints excluded.
  double uniform() {
    // 53-bit mantissa, shifted off zero.
    std::uint64_t bits = engine_() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, trigonometric form: exactly two uniforms per pair.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Marsaglia-Tsang; handles alpha < 1 by boosting.
  double gamma(double alpha) {
    if (!(alpha > 0.0)) throw InvalidArgument("gamma: shape must be positive");
    if (alpha < 1.0) {
      double u = uniform();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double chi_squared(double df) { return 2.0 * gamma(0.5 * df); }

  // Student t, unit scale.
  double student_t(double df) {
    double z = normal();
    double v = chi_squared(df);
    return z / std::sqrt(v / df);
  }

  std::uint64_t raw() { return engine_(); }

  // Uniform integer in [0, bound) without modulo bias.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw InvalidArgument("below: bound must be positive");
    std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % bound);
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % bound;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Latin hypercube: k points in [0,1)^p, one stratum per coordinate per
// point, stratified positions jittered and independently permuted.
inline std::vector<std::vector<double>> latin_hypercube(int k, int p, Stream& stream) {
  if (k <= 0 || p <= 0) throw InvalidArgument("latin_hypercube: k and p must be positive");
  std::vector<std::vector<double>> pts(k, std::vector<double>(p));
  std::vector<int> perm(k);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < k; ++i) perm[i] = i;
    for (int i = k - 1; i > 0; --i) {
      int swap_at = static_cast<int>(stream.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(perm[i], perm[swap_at]);
    }
    for (int i = 0; i < k; ++i) pts[i][j] = (perm[i] + stream.uniform()) / k;
  }
  return pts;
}

}  // namespace uvi::rng
