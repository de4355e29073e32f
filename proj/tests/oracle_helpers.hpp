#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "mrce/types.hpp"

// Independent reference implementations used to pin expected test values.
// Deliberately naive and slow; kept free of any production code paths.
namespace oracle {

inline constexpr long double kPi =
    3.14159265358979323846264338327950288L;

// Term-by-term multipath channel entry in extended precision.
inline std::complex<long double> channel_entry(const mrce::MultipathParams& p, int antenna,
                                               int subcarrier, long double spacing_wl,
                                               int num_subcarriers) {
  std::complex<long double> acc(0.0L, 0.0L);
  for (const auto& c : p.components) {
    const long double mu = 2.0L * kPi * spacing_wl * std::cos(static_cast<long double>(c.doa_rad));
    const long double phase =
        -2.0L * kPi * subcarrier * static_cast<long double>(c.delay_tap) / num_subcarriers +
        mu * antenna;
    const std::complex<long double> amp(c.amp.real(), c.amp.imag());
    acc += amp * std::complex<long double>(std::cos(phase), std::sin(phase));
  }
  return acc;
}

// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
template <class Cdf>
double ks_statistic(std::vector<double> xs, Cdf cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
  }
  return d;
}

// KS acceptance threshold: D_n * sqrt(n) <= c(alpha); c(0.01) = 1.628.
inline double ks_threshold_1pct(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

inline double rel_error(const mrce::CMat& got, const mrce::CMat& want) {
  return (got - want).norm() / want.norm();
}

// Oversampled-CIR tap by direct spectral summation in extended precision:
// y[t] = (1/sqrt(N)) sum_n X[n] e^{j 2 pi n t / (O N)}.
inline std::complex<long double> oversampled_tap(const std::vector<std::complex<long double>>& x,
                                                 long double t, int oversample) {
  const long double n_len = static_cast<long double>(x.size());
  std::complex<long double> acc(0.0L, 0.0L);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const long double ph = 2.0L * kPi * static_cast<long double>(n) * t / (oversample * n_len);
    acc += x[n] * std::complex<long double>(std::cos(ph), std::sin(ph));
  }
  return acc / std::sqrt(n_len);
}

// Closed-form tap magnitude for a unit-amplitude single path at delay tau:
// |y[t]| = |sin(pi d / O)| / (sqrt(N) |sin(pi d / (O N))|), d = t - O tau.
inline double dirichlet_mag(double tau, int t, int n_len, int oversample) {
  const long double total = static_cast<long double>(oversample) * n_len;
  long double d = t - static_cast<long double>(oversample) * tau;
  const long double denom = std::sin(kPi * d / total);
  if (std::abs(denom) < 1e-18L)
    return static_cast<double>(std::sqrt(static_cast<long double>(n_len)));
  const long double num = std::sin(kPi * d / oversample);
  return static_cast<double>(std::abs(num / denom) / std::sqrt(static_cast<long double>(n_len)));
}

}  // namespace oracle
