#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "uvi/errors.hpp"

namespace uvi::stats {

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.7071067811865475244008443621048490);
}

inline double normal_pdf(double x) {
  return 0.3989422804014326779399460599343819 * std::exp(-0.5 * x * x);
}

// Rational approximation (Acklam-style) polished by one Halley step
// against erfc; absolute error below 1e-14 over (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("normal_quantile: p must lie in (0,1)");
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double e = normal_cdf(x) - p;
  double u = e / normal_pdf(x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

namespace detail {

// Regularized lower incomplete gamma P(a,x): series for x < a+1,
// Lentz continued fraction for the upper tail otherwise.
inline double gamma_p(double a, double x) {
  if (!(a > 0.0)) throw InvalidArgument("gamma_p: a must be positive");
  if (x < 0.0) throw InvalidArgument("gamma_p: x must be nonnegative");
  if (x == 0.0) return 0.0;
  const double lg = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double sum = 1.0 / a;
    double term = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lg);
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  double q = std::exp(-x + a * std::log(x) - lg) * h;
  return 1.0 - q;
}

}  // namespace detail

inline double chi2_cdf(double df, double x) {
  if (!(df > 0.0)) throw InvalidArgument("chi2_cdf: df must be positive");
  if (x <= 0.0) return 0.0;
  return detail::gamma_p(0.5 * df, 0.5 * x);
}

// Wilson-Hilferty start, Newton on the CDF, bisection safeguard.
inline double chi2_quantile(double df, double p) {
  if (!(df > 0.0)) throw InvalidArgument("chi2_quantile: df must be positive");
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("chi2_quantile: p must lie in (0,1)");
  double z = normal_quantile(p);
  double t = 1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df));
  double x = df * t * t * t;
  if (!(x > 0.0)) x = 0.5 * df;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    double f = chi2_cdf(df, x) - p;
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    // Chi2 density at x.
    double pdf = std::exp((0.5 * df - 1.0) * std::log(x) - 0.5 * x -
                          0.6931471805599453094172321214581766 * 0.5 * df - std::lgamma(0.5 * df));
    double step = f / pdf;
    double next = x - step;
    if (!(next > lo && (next < hi))) {
      next = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * x;
    }
    if (std::fabs(next - x) <= 1e-12 * (1.0 + x)) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

// One-sample KS distance against a cdf; sample need not be sorted.
inline double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw InvalidArgument("ks_distance: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double dist = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double f = cdf(sample[i]);
    double hi = (static_cast<double>(i) + 1.0) / n - f;
    double lo = f - static_cast<double>(i) / n;
    dist = std::max(dist, std::max(hi, lo));
  }
  return dist;
}

inline double ks_distance_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("ks_distance_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double dist = 0.0;
  while (i < a.size() && j < b.size()) {
    double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    dist = std::max(dist, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return dist;
}

// Order-statistic index for a simulated (1-alpha) quantile from B draws:
// ceil((1-alpha)(B+1)), clamped to B. One-based.
inline int quantile_rank(int B, double level) {
  if (B < 1) throw InvalidArgument("quantile_rank: B must be positive");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("quantile_rank: level must lie in (0,1)");
  int r = static_cast<int>(std::ceil(level * (B + 1)));
  return std::clamp(r, 1, B);
}

// Value of the order statistic at quantile_rank. Sorts a copy.
inline double empirical_quantile(std::vector<double> sample, double level) {
  if (sample.empty()) throw InvalidArgument("empirical_quantile: empty sample");
  int r = quantile_rank(static_cast<int>(sample.size()), level);
  std::nth_element(sample.begin(), sample.begin() + (r - 1), sample.end());
  return sample[static_cast<std::size_t>(r - 1)];
}

inline double median(std::vector<double> sample) {
  if (sample.empty()) throw InvalidArgument("median: empty sample");
  std::sort(sample.begin(), sample.end());
  std::size_t n = sample.size();
  if (n % 2 == 1) return sample[n / 2];
  return 0.5 * (sample[n / 2 - 1] + sample[n / 2]);
}

}  // namespace uvi::stats
