#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <vector>

#include "cbmd/core.hpp"
#include "cbmd/special.hpp"
#include "cbmd/univariate.hpp"

namespace cbmd {

enum class BindingFamily { von_mises, wrapped_cauchy, uniform };

inline constexpr std::size_t circula_max_dim = 32;

// binding concentrations plus the per-coordinate dependence signs q
struct CirculaParams {
  BindingFamily family = BindingFamily::uniform;
  std::vector<double> conc;  // kappa_i or rho_i; empty for the uniform family
  std::vector<int> q;

  std::size_t dim() const { return q.size(); }

  static CirculaParams von_mises(std::vector<double> kappa, std::vector<int> q) {
    CirculaParams p{BindingFamily::von_mises, std::move(kappa), std::move(q)};
    p.validate();
    return p;
  }
  static CirculaParams wrapped_cauchy(std::vector<double> rho,
                                      std::vector<int> q) {
    CirculaParams p{BindingFamily::wrapped_cauchy, std::move(rho), std::move(q)};
    p.validate();
    return p;
  }
  static CirculaParams uniform(std::size_t d) {
    return {BindingFamily::uniform, {}, std::vector<int>(d, 1)};
  }

  void validate() const {
    if (q.empty()) throw data_error("circula: dim must be >= 1");
    if (q.size() > circula_max_dim) throw data_error("circula: dim too large");
    for (int s : q)
      if (s != 1 && s != -1) throw data_error("circula: q entries must be +-1");
    if (family == BindingFamily::uniform) {
      if (!conc.empty())
        throw data_error("circula: uniform family takes no concentrations");
      return;
    }
    if (conc.size() != q.size())
      throw data_error("circula: conc/q length mismatch");
    for (double c : conc) {
      if (family == BindingFamily::von_mises) {
        if (!(c > 0.0) || c > kappa_max)
          throw std::domain_error("circula: kappa outside (0, 700]");
      } else {
        if (!(c > 0.0) || !(c < 1.0))
          throw std::domain_error("circula: rho outside (0, 1)");
      }
    }
  }
};

namespace detail {

inline std::string describe(const CirculaParams& p) {
  std::ostringstream os;
  os << (p.family == BindingFamily::von_mises      ? "von_mises"
         : p.family == BindingFamily::wrapped_cauchy ? "wrapped_cauchy"
                                                     : "uniform")
     << " conc=[";
  for (std::size_t i = 0; i < p.conc.size(); ++i)
    os << (i ? "," : "") << p.conc[i];
  os << "] q=[";
  for (std::size_t i = 0; i < p.q.size(); ++i) os << (i ? "," : "") << p.q[i];
  os << "]";
  return os.str();
}

// The wrapped Cauchy closed form has a removable singularity at every tied
// pair rho_j = rho_k (a pole of the per-term expression, order grows with the
// tie multiplicity). Evaluation strategy: split the sorted rho into groups of
// near-ties (adjacent gap < 1e-7) and spread each group symmetrically around
// its mean on an equispaced grid whose spacing grows with the group size,
// keeping the cancellation error and the perturbation bias both small. Groups
// of five or more fall back to quadrature.
struct PreparedWc {
  std::vector<double> rho;          // perturbed, original coordinate order
  std::vector<int> q;
  std::vector<std::size_t> order;   // ascending-rho visit order for the sum
  long double prod_one_minus_r2 = 1.0L;
  bool quadrature_fallback = false;
};

inline double tie_spacing(std::size_t group_size) {
  switch (group_size) {
    case 2: return 2e-7;
    case 3: return 1e-5;
    case 4: return 2e-4;
    default: return 0.0;
  }
}

inline PreparedWc prepare_wc(const CirculaParams& p) {
  PreparedWc out;
  out.q = p.q;
  out.rho = p.conc;
  std::size_t d = p.dim();
  out.order.resize(d);
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  std::sort(out.order.begin(), out.order.end(),
            [&](std::size_t a, std::size_t b) { return out.rho[a] < out.rho[b]; });

  for (int pass = 0; pass < 2 && !out.quadrature_fallback; ++pass) {
    bool touched = false;
    std::size_t g0 = 0;
    while (g0 < d) {
      std::size_t g1 = g0 + 1;
      while (g1 < d && out.rho[out.order[g1]] - out.rho[out.order[g1 - 1]] < 1e-7)
        ++g1;
      std::size_t size = g1 - g0;
      if (size >= 2) {
        double spacing = tie_spacing(size);
        if (spacing == 0.0) {
          out.quadrature_fallback = true;
          return out;
        }
        double mean = 0.0;
        for (std::size_t g = g0; g < g1; ++g) mean += out.rho[out.order[g]];
        mean /= static_cast<double>(size);
        double half_span = 0.5 * spacing * static_cast<double>(size - 1);
        // keep the spread inside (0, 1)
        if (mean + half_span > 1.0 - 1e-6) mean = 1.0 - 1e-6 - half_span;
        if (mean - half_span < 1e-6) mean = 1e-6 + half_span;
        for (std::size_t g = g0; g < g1; ++g)
          out.rho[out.order[g]] =
              mean + spacing * (static_cast<double>(g - g0) -
                                0.5 * static_cast<double>(size - 1));
        touched = true;
      }
      g0 = g1;
    }
    if (!touched) break;
    // a spread group may have collided with or overtaken its neighbours;
    // restore the ascending order and settle collisions in one more pass
    std::sort(out.order.begin(), out.order.end(),
              [&](std::size_t a, std::size_t b) { return out.rho[a] < out.rho[b]; });
    bool still_tied = false;
    for (std::size_t g = 1; g < d; ++g)
      if (out.rho[out.order[g]] - out.rho[out.order[g - 1]] < 1e-7)
        still_tied = true;
    if (!still_tied) break;
    if (pass == 1) out.quadrature_fallback = true;
  }

  for (std::size_t i = 0; i < d; ++i)
    out.prod_one_minus_r2 *=
        1.0L - static_cast<long double>(out.rho[i]) *
                   static_cast<long double>(out.rho[i]);
  return out;
}

struct KahanLongDouble {
  long double sum = 0.0L, carry = 0.0L;
  void add(long double x) {
    long double y = x - carry;
    long double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

inline std::string describe(const PreparedWc& pc) {
  std::ostringstream os;
  os << "wrapped_cauchy rho=[";
  for (std::size_t i = 0; i < pc.rho.size(); ++i) os << (i ? "," : "") << pc.rho[i];
  os << "] q=[";
  for (std::size_t i = 0; i < pc.q.size(); ++i) os << (i ? "," : "") << pc.q[i];
  os << "]";
  return os.str();
}

// log of the residue sum of the wrapped Cauchy circula density at
// eta_j = rho_j e^{i q_j u_j}, i.e. log((2 pi)^d c(u)); throws when round-off
// destroys the real-valuedness
inline double wc_sum_log_eta(const PreparedWc& pc,
                             const std::complex<long double>* eta) {
  std::size_t d = pc.q.size();
  if (d == 1) return 0.0;
  KahanLongDouble re, im;
  for (std::size_t idx = 0; idx < d; ++idx) {
    std::size_t j = pc.order[idx];
    std::complex<long double> term = eta[j];
    for (std::size_t k = 2; k < d; ++k) term *= eta[j];  // eta_j^(d-1)
    std::complex<long double> denom(1.0L, 0.0L);
    for (std::size_t k = 0; k < d; ++k) {
      if (k == j) continue;
      denom *= (eta[j] - eta[k]) *
               (std::complex<long double>(1.0L, 0.0L) - std::conj(eta[k]) * eta[j]);
    }
    long double scale =
        pc.prod_one_minus_r2 /
        (1.0L - static_cast<long double>(pc.rho[j]) *
                    static_cast<long double>(pc.rho[j]));
    term = term * scale / denom;
    re.add(term.real());
    im.add(term.imag());
  }
  long double re_sum = re.sum;
  long double im_sum = im.sum;
  if (!(re_sum > 0.0L))
    throw numeric_error("wrapped Cauchy circula: non-positive residue sum for " +
                        describe(pc));
  if (std::fabs(static_cast<double>(im_sum)) >
      1e-9 * std::fabs(static_cast<double>(re_sum)))
    throw numeric_error("wrapped Cauchy circula: imaginary residue exceeds "
                        "tolerance for " +
                        describe(pc));
  return static_cast<double>(std::log(re_sum));
}

inline double wc_sum_log(const PreparedWc& pc, std::span<const double> u) {
  std::size_t d = pc.q.size();
  if (d == 1) return 0.0;
  std::complex<long double> eta[circula_max_dim];
  for (std::size_t i = 0; i < d; ++i) {
    double a = pc.q[i] > 0 ? u[i] : -u[i];
    eta[i] = std::complex<long double>(
        static_cast<long double>(pc.rho[i]) * std::cos(static_cast<long double>(a)),
        static_cast<long double>(pc.rho[i]) * std::sin(static_cast<long double>(a)));
  }
  return wc_sum_log_eta(pc, eta);
}

}  // namespace detail

// trapezoid-rule reference for the latent-variable integral defining the
// circula density; spectrally accurate on the periodic integrand, with node
// doubling until the result settles; also the evaluation path for fallbacks
inline double circula_logpdf_quadrature(const CirculaParams& p,
                                        std::span<const double> u,
                                        int nodes = 4096) {
  if (nodes < 64) throw std::domain_error("circula quadrature: nodes < 64");
  std::size_t d = p.dim();
  if (u.size() != d) throw data_error("circula quadrature: dim mismatch");
  double neg_d_log2pi = -static_cast<double>(d) * log_two_pi;
  if (p.family == BindingFamily::uniform) return neg_d_log2pi;

  // per-coordinate normalization constants of the binding densities
  std::vector<double> log_norm(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    if (p.family == BindingFamily::von_mises)
      log_norm[i] = log_two_pi + log_bessel_i0(p.conc[i]);
    else
      log_norm[i] = log_two_pi - std::log1p(-p.conc[i] * p.conc[i]);
  }

  auto integrate = [&](int n) {
    std::vector<double> logv(static_cast<std::size_t>(n));
    double h = two_pi / static_cast<double>(n);
    for (int k = 0; k < n; ++k) {
      double phi = h * static_cast<double>(k);
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double t = u[i] - static_cast<double>(p.q[i]) * phi;
        if (p.family == BindingFamily::von_mises) {
          acc += p.conc[i] * std::cos(t) - log_norm[i];
        } else {
          double rho = p.conc[i];
          acc -= std::log(1.0 + rho * rho - 2.0 * rho * std::cos(t)) + log_norm[i];
        }
      }
      logv[static_cast<std::size_t>(k)] = acc;
    }
    return logsumexp(logv) - std::log(static_cast<double>(n));
  };

  double prev = integrate(nodes);
  int n = nodes;
  while (n < (1 << 20)) {
    n *= 2;
    double cur = integrate(n);
    if (std::fabs(cur - prev) < 1e-10) return cur;
    prev = cur;
  }
  return prev;
}

// closed form for the von Mises binding family
inline double vm_circula_logpdf(const CirculaParams& p, std::span<const double> u) {
  if (p.family != BindingFamily::von_mises)
    throw data_error("vm_circula_logpdf: wrong family");
  std::size_t d = p.dim();
  if (u.size() != d) throw data_error("vm_circula_logpdf: dim mismatch");
  double c = 0.0, s = 0.0, sum_log_i0 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    c += p.conc[i] * std::cos(u[i]);
    s += p.conc[i] * static_cast<double>(p.q[i]) * std::sin(u[i]);
    sum_log_i0 += log_bessel_i0(p.conc[i]);
  }
  double r = std::hypot(c, s);
  return log_bessel_i0(r) - static_cast<double>(d) * log_two_pi - sum_log_i0;
}

// closed form for the wrapped Cauchy binding family (residue sum)
inline double wc_circula_logpdf(const CirculaParams& p, std::span<const double> u) {
  if (p.family != BindingFamily::wrapped_cauchy)
    throw data_error("wc_circula_logpdf: wrong family");
  std::size_t d = p.dim();
  if (u.size() != d) throw data_error("wc_circula_logpdf: dim mismatch");
  detail::PreparedWc pc = detail::prepare_wc(p);
  if (pc.quadrature_fallback) return circula_logpdf_quadrature(p, u);
  return detail::wc_sum_log(pc, u) - static_cast<double>(d) * log_two_pi;
}

// reusable evaluator; precomputes everything that does not depend on u
class CirculaEvaluator {
 public:
  explicit CirculaEvaluator(const CirculaParams& p) : params_(p) {
    p.validate();
    if (p.family == BindingFamily::von_mises) {
      for (double k : p.conc) sum_log_i0_ += log_bessel_i0(k);
    } else if (p.family == BindingFamily::wrapped_cauchy) {
      wc_ = detail::prepare_wc(p);
    }
  }

  const CirculaParams& params() const { return params_; }

  double logpdf(std::span<const double> u) const {
    std::size_t d = params_.dim();
    if (u.size() != d) throw data_error("circula logpdf: dim mismatch");
    double neg = -static_cast<double>(d) * log_two_pi;
    switch (params_.family) {
      case BindingFamily::uniform:
        return neg;
      case BindingFamily::von_mises: {
        double c = 0.0, s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          c += params_.conc[i] * std::cos(u[i]);
          s += params_.conc[i] * static_cast<double>(params_.q[i]) * std::sin(u[i]);
        }
        return log_bessel_i0(std::hypot(c, s)) + neg - sum_log_i0_;
      }
      case BindingFamily::wrapped_cauchy:
        if (wc_.quadrature_fallback)
          return circula_logpdf_quadrature(params_, u);
        return detail::wc_sum_log(wc_, u) + neg;
    }
    return neg;
  }

 private:
  CirculaParams params_;
  double sum_log_i0_ = 0.0;
  detail::PreparedWc wc_;
};

inline double circula_logpdf(const CirculaParams& p, std::span<const double> u) {
  switch (p.family) {
    case BindingFamily::von_mises: return vm_circula_logpdf(p, u);
    case BindingFamily::wrapped_cauchy: return wc_circula_logpdf(p, u);
    case BindingFamily::uniform:
      if (u.size() != p.dim()) throw data_error("circula logpdf: dim mismatch");
      return -static_cast<double>(p.dim()) * log_two_pi;
  }
  return 0.0;
}

// latent-variable sampler: one shared phi plus a centered draw per coordinate
inline AngleVector circula_sample(const CirculaParams& p, RandomSource& rng) {
  std::size_t d = p.dim();
  AngleVector u(d);
  double phi = rng.uniform(0.0, two_pi);
  for (std::size_t i = 0; i < d; ++i) {
    double omega = 0.0;
    switch (p.family) {
      case BindingFamily::von_mises:
        omega = detail::sample_von_mises_centered(p.conc[i], rng);
        break;
      case BindingFamily::wrapped_cauchy: {
        double gamma = -std::log(p.conc[i]);
        omega = gamma * std::tan(pi * (rng.uniform() - 0.5));
        break;
      }
      case BindingFamily::uniform:
        omega = rng.uniform(0.0, two_pi);
        break;
    }
    u[i] = normalize_angle(omega + static_cast<double>(p.q[i]) * phi);
  }
  return u;
}

// marginal circula over a coordinate subset keeps the same family with the
// retained entries
inline CirculaParams circula_marginal(const CirculaParams& p,
                                      std::span<const std::size_t> subset) {
  if (subset.empty()) throw data_error("circula_marginal: empty subset");
  CirculaParams out;
  out.family = p.family;
  for (std::size_t idx : subset) {
    if (idx >= p.dim()) throw data_error("circula_marginal: index out of range");
    if (p.family != BindingFamily::uniform) out.conc.push_back(p.conc[idx]);
    out.q.push_back(p.q[idx]);
  }
  out.validate();
  return out;
}

}  // namespace cbmd
