#include "ctxf/ks.hpp"

#include <algorithm>
#include <cmath>

namespace ctxf {

double ks_statistic_sorted(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return 0.0;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    // Step past every copy of the smallest pending value in both samples so
    // ties are evaluated at the right-continuous CDF.
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_statistic(std::span<double> a, std::span<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return ks_statistic_sorted(a, b);
}

double kolmogorov_q(double lambda) {
  constexpr double kEps1 = 1e-3;
  constexpr double kEps2 = 1e-8;
  const double a2 = -2.0 * lambda * lambda;
  double fac = 2.0, sum = 0.0, prev = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = fac * std::exp(a2 * k * k);
    sum += term;
    if (std::abs(term) <= kEps1 * prev || std::abs(term) <= kEps2 * sum) return std::clamp(sum, 0.0, 1.0);
    fac = -fac;
    prev = std::abs(term);
  }
  return 1.0;
}

double ks_pvalue(double d, std::size_t n1, std::size_t n2, KsCorrection correction) {
  if (n1 == 0 || n2 == 0) return 1.0;
  const double ne = static_cast<double>(n1) * static_cast<double>(n2) / static_cast<double>(n1 + n2);
  const double root = std::sqrt(ne);
  const double factor = correction == KsCorrection::Stephens ? root + 0.12 + 0.11 / root : root;
  return kolmogorov_q(factor * d);
}

}  // namespace ctxf
