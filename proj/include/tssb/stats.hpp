#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tssb/errors.hpp"

namespace tssb {

/// Survival function of the Kolmogorov distribution, P(K > x).
inline double kolmogorov_sf(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 0.3) {
    // Jacobi-theta form converges fast for small x.
    const double pi2 = M_PI * M_PI;
    double s = 0.0;
    for (int k = 1; k <= 50; ++k) {
      double t = (2 * k - 1) * (2 * k - 1) * pi2 / (8.0 * x * x);
      s += std::exp(-t);
    }
    return 1.0 - std::sqrt(2.0 * M_PI) / x * s;
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction).
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw invariant_error("ks test needs non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  double en = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d)};
}

/// One-sample test against a continuous CDF.
inline KsResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  if (x.empty()) throw invariant_error("ks test needs a non-empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  double en = std::sqrt(n);
  return {d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d)};
}

inline double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

inline double variance(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  double m = mean(x), s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

}  // namespace tssb
