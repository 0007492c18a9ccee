#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cbmd/core.hpp"
#include "cbmd/special.hpp"

namespace cbmd {

enum class MarginalFamily { von_mises, wrapped_cauchy, uniform };

inline constexpr double rho_clip_lo = 1e-6;
inline constexpr double rho_clip_hi = 1.0 - 1e-6;
inline constexpr double kappa_fit_min = 1e-6;

// one circular marginal: a von Mises, a wrapped Cauchy, or the uniform;
// conc holds kappa or rho and is ignored for the uniform
struct UnivariateCircular {
  MarginalFamily family = MarginalFamily::uniform;
  double mu = 0.0;
  double conc = 0.0;

  static UnivariateCircular von_mises(double mu, double kappa) {
    if (!(kappa > 0.0) || kappa > kappa_max)
      throw std::domain_error("von_mises: kappa outside (0, 700]");
    return {MarginalFamily::von_mises, normalize_angle(mu), kappa};
  }
  static UnivariateCircular wrapped_cauchy(double mu, double rho) {
    if (!(rho > 0.0) || !(rho < 1.0))
      throw std::domain_error("wrapped_cauchy: rho outside (0, 1)");
    return {MarginalFamily::wrapped_cauchy, normalize_angle(mu), rho};
  }
  static UnivariateCircular uniform() { return {MarginalFamily::uniform, 0.0, 0.0}; }
};

inline double log_pdf(const UnivariateCircular& dist, double theta) {
  switch (dist.family) {
    case MarginalFamily::von_mises:
      return dist.conc * std::cos(theta - dist.mu) - log_two_pi -
             log_bessel_i0(dist.conc);
    case MarginalFamily::wrapped_cauchy: {
      double rho = dist.conc;
      double denom = 1.0 + rho * rho - 2.0 * rho * std::cos(theta - dist.mu);
      return std::log1p(-rho * rho) - log_two_pi - std::log(denom);
    }
    case MarginalFamily::uniform:
      return -log_two_pi;
  }
  return -log_two_pi;
}

inline double pdf(const UnivariateCircular& dist, double theta) {
  return std::exp(log_pdf(dist, theta));
}

// mean resultant length of the marginal: A(kappa), rho, or 0
inline double mean_resultant(const UnivariateCircular& dist) {
  switch (dist.family) {
    case MarginalFamily::von_mises:
      return mean_resultant_ratio(dist.conc);
    case MarginalFamily::wrapped_cauchy:
      return dist.conc;
    case MarginalFamily::uniform:
      return 0.0;
  }
  return 0.0;
}

// CDF/quantile evaluator with the von Mises Fourier coefficients precomputed.
// The reference point is theta0 = mu - pi for every family, so cdf(mu) = 1/2
// and the probability integral transform is centered on the mode.
class MarginalTransform {
 public:
  explicit MarginalTransform(const UnivariateCircular& dist) : dist_(dist) {
    if (dist.family == MarginalFamily::von_mises)
      ratios_ = bessel_ratio_table(dist.conc);
  }

  const UnivariateCircular& dist() const { return dist_; }

  double cdf(double theta) const {
    switch (dist_.family) {
      case MarginalFamily::von_mises:
        return vm_cdf(angle_difference(theta, dist_.mu));
      case MarginalFamily::wrapped_cauchy:
        return wc_cdf(angle_difference(theta, dist_.mu));
      case MarginalFamily::uniform:
        return normalize_angle(theta + pi) / two_pi;
    }
    return 0.0;
  }

  // u = 2 pi F(theta), wrapped into [0, 2pi)
  double u(double theta) const { return normalize_angle(two_pi * cdf(theta)); }

  double quantile(double q) const {
    if (q < 0.0 || q > 1.0)
      throw std::domain_error("quantile: q outside [0, 1]");
    switch (dist_.family) {
      case MarginalFamily::von_mises:
        return normalize_angle(dist_.mu + vm_quantile_offset(q));
      case MarginalFamily::wrapped_cauchy: {
        double h = q - 0.5;
        double r = (1.0 - dist_.conc) / (1.0 + dist_.conc);
        double s = 2.0 * std::atan(r * std::tan(pi * std::fabs(h)));
        return normalize_angle(dist_.mu + (h < 0.0 ? -s : s));
      }
      case MarginalFamily::uniform:
        return normalize_angle(-pi + two_pi * q);
    }
    return 0.0;
  }

 private:
  // s = theta - mu in [-pi, pi); integrated Fourier series of the density
  double vm_cdf(double s) const {
    double f = (s + pi) / two_pi;
    // sin(j s) by recurrence
    double twoc = 2.0 * std::cos(s);
    double sin_prev = 0.0, sin_cur = std::sin(s);
    double acc = 0.0;
    for (std::size_t j = 0; j < ratios_.size(); ++j) {
      acc += ratios_[j] * sin_cur / static_cast<double>(j + 1);
      double sin_next = twoc * sin_cur - sin_prev;
      sin_prev = sin_cur;
      sin_cur = sin_next;
    }
    f += acc / pi;
    if (f < 0.0) f = 0.0;
    if (f > 1.0) f = 1.0;
    return f;
  }

  double wc_cdf(double s) const {
    double rho = dist_.conc;
    double c = std::cos(std::fabs(s));
    double num = (1.0 + rho * rho) * c - 2.0 * rho;
    double den = 1.0 + rho * rho - 2.0 * rho * c;
    double arg = num / den;
    if (arg < -1.0) arg = -1.0;
    if (arg > 1.0) arg = 1.0;
    double half = std::acos(arg) / two_pi;  // in [0, 1/2]
    return s < 0.0 ? 0.5 - half : 0.5 + half;
  }

  // solve vm_cdf(s) = q for s in [-pi, pi): safeguarded Newton inside a
  // shrinking bisection bracket
  double vm_quantile_offset(double q) const {
    if (q <= 0.0) return -pi;
    if (q >= 1.0) return std::nextafter(pi, 0.0);
    double lo = -pi, hi = pi;
    double s = two_pi * (q - 0.5);
    double log_norm = log_two_pi + log_bessel_i0(dist_.conc);
    for (int it = 0; it < 100; ++it) {
      double f = vm_cdf(s) - q;
      if (std::fabs(f) <= 1e-12) return s;
      if (f > 0.0) hi = s; else lo = s;
      double dens = std::exp(dist_.conc * std::cos(s) - log_norm);
      double step = dens > 0.0 ? f / dens : 0.0;
      double next = s - step;
      if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
      s = next;
    }
    // Newton did not settle; plain bisection
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
      double mid = 0.5 * (lo + hi);
      double f = vm_cdf(mid) - q;
      if (std::fabs(f) <= 1e-12) return mid;
      if (f > 0.0) hi = mid; else lo = mid;
    }
    double mid = 0.5 * (lo + hi);
    if (std::fabs(vm_cdf(mid) - q) > 1e-9)
      throw numeric_error("quantile: bisection failed to reach tolerance");
    return mid;
  }

  UnivariateCircular dist_;
  std::vector<double> ratios_;
};

inline double cdf(const UnivariateCircular& dist, double theta) {
  return MarginalTransform(dist).cdf(theta);
}

inline double quantile(const UnivariateCircular& dist, double q) {
  return MarginalTransform(dist).quantile(q);
}

namespace detail {
// Best-Fisher acceptance-rejection for a centered von Mises
inline double sample_von_mises_centered(double kappa, RandomSource& rng) {
  if (kappa < 1e-8) return rng.uniform(0.0, two_pi) - pi;
  double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  double rho0 = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  double r = (1.0 + rho0 * rho0) / (2.0 * rho0);
  for (;;) {
    double z = std::cos(pi * rng.uniform());
    double f = (1.0 + r * z) / (r + z);
    double c = kappa * (r - f);
    double u2 = rng.uniform();
    if (c * (2.0 - c) - u2 > 0.0 ||
        (u2 > 0.0 && std::log(c / u2) + 1.0 - c >= 0.0)) {
      double th = std::acos(f);
      return rng.uniform() < 0.5 ? -th : th;
    }
  }
}
}  // namespace detail

inline double sample(const UnivariateCircular& dist, RandomSource& rng) {
  switch (dist.family) {
    case MarginalFamily::von_mises:
      return normalize_angle(dist.mu +
                             detail::sample_von_mises_centered(dist.conc, rng));
    case MarginalFamily::wrapped_cauchy: {
      // wrap a linear Cauchy with scale -log(rho)
      double gamma = -std::log(dist.conc);
      double x = dist.mu + gamma * std::tan(pi * (rng.uniform() - 0.5));
      return normalize_angle(x);
    }
    case MarginalFamily::uniform:
      return rng.uniform(0.0, two_pi);
  }
  return 0.0;
}

// weighted circular first moment; empty weights mean unit weights
struct CircularMoment {
  double mean = 0.0;
  double rbar = 0.0;
  double weight_total = 0.0;
};

inline CircularMoment circular_moment(std::span<const double> data,
                                      std::span<const double> weights = {}) {
  if (!weights.empty() && weights.size() != data.size())
    throw data_error("circular_moment: weight length mismatch");
  std::size_t n = data.size();
  double c = deterministic_sum(n, [&](std::size_t i) {
    double w = weights.empty() ? 1.0 : weights[i];
    return w * std::cos(data[i]);
  });
  double s = deterministic_sum(n, [&](std::size_t i) {
    double w = weights.empty() ? 1.0 : weights[i];
    return w * std::sin(data[i]);
  });
  double wt = weights.empty()
                  ? static_cast<double>(n)
                  : deterministic_sum(n, [&](std::size_t i) { return weights[i]; });
  CircularMoment m;
  m.weight_total = wt;
  if (wt <= 0.0) return m;
  double len = std::hypot(c, s);
  m.rbar = len / wt;
  m.mean = len > 0.0 ? normalize_angle(std::atan2(s, c)) : 0.0;
  return m;
}

template <class Dist>
struct MarginalFit {
  Dist dist;
  bool degenerate = false;
};

inline MarginalFit<UnivariateCircular> fit_von_mises(
    std::span<const double> data, std::span<const double> weights = {}) {
  if (data.size() < 2) throw data_error("fit_von_mises: need n >= 2");
  CircularMoment m = circular_moment(data, weights);
  MarginalFit<UnivariateCircular> out;
  if (m.rbar < 1e-10) {
    out.dist = UnivariateCircular::von_mises(m.mean, kappa_fit_min);
    out.degenerate = true;
    return out;
  }
  double kappa = m.rbar >= 1.0 ? kappa_max : inverse_mean_resultant(m.rbar);
  out.dist = UnivariateCircular::von_mises(m.mean, std::max(kappa, kappa_fit_min));
  return out;
}

inline MarginalFit<UnivariateCircular> fit_wrapped_cauchy(
    std::span<const double> data, std::span<const double> weights = {}) {
  if (data.size() < 2) throw data_error("fit_wrapped_cauchy: need n >= 2");
  CircularMoment m = circular_moment(data, weights);
  MarginalFit<UnivariateCircular> out;
  double rho = m.rbar;
  if (rho < 1e-10) out.degenerate = true;
  if (rho < rho_clip_lo) rho = rho_clip_lo;
  if (rho > rho_clip_hi) rho = rho_clip_hi;
  out.dist = UnivariateCircular::wrapped_cauchy(m.mean, rho);
  return out;
}

}  // namespace cbmd
