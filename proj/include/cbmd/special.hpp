#pragma once

#include <cmath>
#include <vector>

#include "cbmd/core.hpp"

namespace cbmd {

// hard concentration cap applied everywhere a von Mises kappa is produced
inline constexpr double kappa_max = 700.0;

// modified Bessel function of the first kind, integer order, by power series;
// relative error <= 1e-12 for x <= 50, still convergent up to the kappa cap
// (use log_bessel_i0 beyond that regime)
inline double bessel_i(int order, double x) {
  if (x < 0.0) throw std::domain_error("bessel_i: negative argument");
  if (order < 0) throw std::domain_error("bessel_i: negative order");
  double half = 0.5 * x;
  double term = 1.0;
  for (int k = 1; k <= order; ++k) term *= half / static_cast<double>(k);
  double sum = term;
  double h2 = half * half;
  for (int k = 1; k <= 500; ++k) {
    term *= h2 / (static_cast<double>(k) * static_cast<double>(k + order));
    sum += term;
    if (term < sum * 1e-16) break;
  }
  return sum;
}

namespace detail {
// truncated asymptotic sum S_nu(x) with I_nu(x) ~ e^x/sqrt(2 pi x) * S_nu(x)
inline double bessel_asymptotic_sum(int nu, double x) {
  double mu = 4.0 * static_cast<double>(nu) * static_cast<double>(nu);
  double sum = 1.0;
  double term = 1.0;
  for (int k = 1; k <= 12; ++k) {
    double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (8.0 * x * static_cast<double>(k));
    sum += term;
    if (std::fabs(term) < 1e-17 * std::fabs(sum)) break;
  }
  return sum;
}
}  // namespace detail

inline double log_bessel_i0(double x) {
  if (x < 0.0) throw std::domain_error("log_bessel_i0: negative argument");
  if (x <= 50.0) return std::log(bessel_i(0, x));
  double s = detail::bessel_asymptotic_sum(0, x);
  return x - 0.5 * std::log(two_pi * x) + std::log(s);
}

// A(kappa) = I1(kappa)/I0(kappa), the mean resultant length of a von Mises
inline double mean_resultant_ratio(double kappa) {
  if (kappa <= 0.0) throw std::domain_error("mean_resultant_ratio: kappa <= 0");
  if (kappa <= 50.0) return bessel_i(1, kappa) / bessel_i(0, kappa);
  // shared exponential prefactor cancels in the ratio
  return detail::bessel_asymptotic_sum(1, kappa) /
         detail::bessel_asymptotic_sum(0, kappa);
}

// invert A(kappa) = rbar: Sra's initialization refined by safeguarded Newton,
// kappa capped at kappa_max
inline double inverse_mean_resultant(double rbar) {
  if (rbar <= 0.0) throw std::domain_error("inverse_mean_resultant: rbar <= 0");
  if (rbar >= 1.0) return kappa_max;
  double r2 = rbar * rbar;
  double kappa = rbar * (2.0 - r2) / (1.0 - r2);
  if (kappa > kappa_max) return kappa_max;
  if (kappa < 1e-12) kappa = 1e-12;
  for (int it = 0; it < 50; ++it) {
    double a = mean_resultant_ratio(kappa);
    double diff = a - rbar;
    if (std::fabs(diff) <= 1e-12) break;
    double deriv = 1.0 - a * a - a / kappa;
    if (deriv <= 0.0) break;
    kappa -= diff / deriv;
    if (kappa <= 1e-12) kappa = 1e-12;
    if (kappa >= kappa_max) {
      kappa = kappa_max;
      if (mean_resultant_ratio(kappa_max) < rbar) break;
    }
  }
  return std::min(kappa, kappa_max);
}

// ratios I_j(kappa)/I0(kappa) for j = 1..jmax via Miller's downward
// recurrence, truncated once they drop below eps; feeds the von Mises CDF
inline std::vector<double> bessel_ratio_table(double kappa, double eps = 1e-14,
                                              int jmax = 250) {
  if (kappa <= 0.0) throw std::domain_error("bessel_ratio_table: kappa <= 0");
  int start = jmax + 50;
  std::vector<double> f(static_cast<std::size_t>(start) + 2, 0.0);
  f[static_cast<std::size_t>(start) + 1] = 0.0;
  f[static_cast<std::size_t>(start)] = 1e-280;
  for (int nu = start; nu >= 1; --nu) {
    f[static_cast<std::size_t>(nu) - 1] =
        f[static_cast<std::size_t>(nu) + 1] +
        (2.0 * nu / kappa) * f[static_cast<std::size_t>(nu)];
    if (f[static_cast<std::size_t>(nu) - 1] > 1e280) {
      for (int m = nu - 1; m <= start + 1; ++m)
        f[static_cast<std::size_t>(m)] *= 1e-280;
    }
  }
  std::vector<double> out;
  out.reserve(64);
  for (int j = 1; j <= jmax; ++j) {
    double r = f[static_cast<std::size_t>(j)] / f[0];
    if (r < eps) break;
    out.push_back(r);
  }
  return out;
}

}  // namespace cbmd
