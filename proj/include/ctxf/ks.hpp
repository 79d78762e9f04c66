#pragma once

#include <span>

namespace ctxf {

/// Two-sample Kolmogorov-Smirnov statistic: max |F_a(x) - F_b(x)| over the
/// pooled sample values, with F the proportion of samples <= x. Inputs are
/// sorted in place.
double ks_statistic_sorted(std::span<const double> a, std::span<const double> b);
double ks_statistic(std::span<double> a, std::span<double> b);

/// Kolmogorov survival function Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2),
/// clamped to [0,1]; 1 when the series does not converge (tiny lambda).
double kolmogorov_q(double lambda);

enum class KsCorrection {
  None,      // lambda = sqrt(n_e) D
  Stephens,  // lambda = (sqrt(n_e) + 0.12 + 0.11 / sqrt(n_e)) D
};

/// Asymptotic two-sample p-value with n_e = n1 n2 / (n1 + n2).
double ks_pvalue(double d, std::size_t n1, std::size_t n2, KsCorrection correction = KsCorrection::None);

}  // namespace ctxf
