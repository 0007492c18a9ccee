#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "cbmd/core.hpp"
#include "cbmd/distribution.hpp"
#include "cbmd/optimize.hpp"

namespace cbmd {

inline constexpr double binding_rho_lo = 1e-4;
inline constexpr double binding_rho_hi = 1.0 - 1e-4;

// sample circular correlation matrix: Pearson correlation of the
// sin(theta - mean) series, per-row weights honoured
inline Eigen::MatrixXd js_correlation_matrix(const Dataset& data) {
  data.validate();
  if (data.n < 3) throw data_error("js_correlation_matrix: need n >= 3");
  std::size_t d = data.d;
  std::vector<double> mu(d);
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> col(data.n);
    for (std::size_t i = 0; i < data.n; ++i) col[i] = data.values[i * d + j];
    mu[j] = circular_moment(col, data.weights).mean;
  }
  std::vector<double> sins(data.n * d);
  for (std::size_t i = 0; i < data.n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      sins[i * d + j] = std::sin(data.values[i * d + j] - mu[j]);

  double wtot = data.weights.empty()
                    ? static_cast<double>(data.n)
                    : deterministic_sum(data.weights);
  if (wtot <= 0.0) throw data_error("js_correlation_matrix: zero total weight");

  Eigen::MatrixXd c(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = j; k < d; ++k) {
      double v = deterministic_sum(data.n, [&](std::size_t i) {
        return data.weight(i) * sins[i * d + j] * sins[i * d + k];
      });
      c(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = v;
      c(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = v;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (c(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) / wtot <= 1e-12)
      throw data_error("js_correlation_matrix: coordinate " + std::to_string(j) +
                       " has degenerate sin variance");
  }
  Eigen::MatrixXd r(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k < d; ++k) {
      double val = c(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) /
                   std::sqrt(c(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) *
                             c(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));
      if (val > 1.0) val = 1.0;
      if (val < -1.0) val = -1.0;
      r(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = j == k ? 1.0 : val;
    }
  return r;
}

// correlation matrix with rank-one off-diagonal structure from a factor w
inline Eigen::MatrixXd factor_correlation(const Eigen::VectorXd& w) {
  Eigen::MatrixXd r = w * w.transpose();
  r.diagonal().setOnes();
  return r;
}

struct Rank1Result {
  Eigen::VectorXd w;
  bool degenerate = false;  // negative radicand: no rank-one factor fits
};

namespace detail {
// least-squares residual of the off-diagonal factor model
inline double rank1_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& w) {
  double f = 0.0;
  Eigen::Index d = a.rows();
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      if (i == j) continue;
      double e = a(i, j) - w[i] * w[j];
      f += e * e;
    }
  return f;
}

inline void rank1_canonicalize(Eigen::VectorXd& w) {
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (std::fabs(w[i]) > 1e-12) {
      if (w[i] < 0.0) w = -w;
      return;
    }
  }
}
}  // namespace detail

// best entrywise factor for the off-diagonal part of R: spectral initializer
// scaled by the Rayleigh-quotient radius, then Gauss-Newton refinement of the
// least-squares objective
inline Rank1Result rank1_factor_approx(const Eigen::MatrixXd& r) {
  Eigen::Index d = r.rows();
  if (r.cols() != d || d < 1) throw data_error("rank1_factor_approx: bad matrix");
  Eigen::MatrixXd a = r;
  a.diagonal().setZero();

  Rank1Result out;
  out.w = Eigen::VectorXd::Zero(d);
  if (d == 1) return out;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
  if (es.info() != Eigen::Success)
    throw numeric_error("rank1_factor_approx: eigen decomposition failed");
  Eigen::VectorXd v = es.eigenvectors().col(d - 1);  // leading algebraic

  double num = v.dot(a * v);
  double den = 1.0 - v.array().pow(4).sum();
  if (num < 0.0) {
    out.degenerate = true;
    return out;  // no positive-semidefinite factor: report independence
  }
  double rad = den > 0.0 ? num / den : 0.0;
  Eigen::VectorXd w = std::sqrt(std::max(0.0, rad)) * v;
  for (Eigen::Index i = 0; i < d; ++i) w[i] = std::clamp(w[i], -1.0, 1.0);

  // polish: Gauss-Newton on F(w) = sum_{i != j} (A_ij - w_i w_j)^2
  double f = detail::rank1_objective(a, w);
  for (int it = 0; it < 200; ++it) {
    Eigen::MatrixXd e = a - w * w.transpose();
    e.diagonal().setZero();
    Eigen::VectorXd grad = -4.0 * (e * w);
    if (grad.lpNorm<Eigen::Infinity>() < 1e-15) break;
    double s = w.squaredNorm();
    Eigen::MatrixXd h = 4.0 * (w * w.transpose());
    for (Eigen::Index i = 0; i < d; ++i) h(i, i) = 4.0 * (s - w[i] * w[i]) + 1e-8;
    Eigen::VectorXd step = h.ldlt().solve(-grad);
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls) {
      Eigen::VectorXd cand = w + t * step;
      for (Eigen::Index i = 0; i < d; ++i) cand[i] = std::clamp(cand[i], -1.0, 1.0);
      double fc = detail::rank1_objective(a, cand);
      if (fc < f) {
        w = cand;
        f = fc;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) {
      // fall back to a gradient step before giving up
      t = 1.0 / std::max(1.0, grad.norm());
      for (int ls = 0; ls < 40; ++ls) {
        Eigen::VectorXd cand = w - t * grad;
        for (Eigen::Index i = 0; i < d; ++i)
          cand[i] = std::clamp(cand[i], -1.0, 1.0);
        double fc = detail::rank1_objective(a, cand);
        if (fc < f) {
          w = cand;
          f = fc;
          moved = true;
          break;
        }
        t *= 0.5;
      }
    }
    if (!moved) break;
  }

  detail::rank1_canonicalize(w);
  out.w = w;
  return out;
}

// norm of the first-order-condition residual orthogonal to the factor
// direction; zero exactly at stationary points of the constrained problem
inline double rank1_stationarity_residual(const Eigen::MatrixXd& r,
                                          const Eigen::VectorXd& w) {
  double nw = w.norm();
  if (!(nw > 0.0))
    throw std::domain_error("rank1_stationarity_residual: zero factor");
  Eigen::VectorXd v = w / nw;
  Eigen::MatrixXd a = r;
  a.diagonal().setZero();
  double t = 1.0 - v.array().pow(4).sum();
  Eigen::VectorXd v3 = v.array().cube();
  Eigen::VectorXd y = t * (a * v) + v.dot(a * v) * v3;
  Eigen::VectorXd orth = y - v.dot(y) * v;
  return orth.norm();
}

struct FamilyChoice {
  MarginalFamily marginal = MarginalFamily::von_mises;
  BindingFamily binding = BindingFamily::wrapped_cauchy;
};

struct EstimateOptions {
  BoxOptimOptions optim{};
  bool exhaustive_guard_dim = true;
};

struct EstimateResult {
  CbmdParams params;
  double loglik = 0.0;          // joint log-likelihood of the data
  double circula_loglik = 0.0;  // coupling part, in circula space
  bool converged = true;
  bool degenerate_dependence = false;
  int iterations = 0;
};

inline MarginalFit<UnivariateCircular> fit_marginal(
    MarginalFamily family, std::span<const double> data,
    std::span<const double> weights = {}) {
  switch (family) {
    case MarginalFamily::von_mises: return fit_von_mises(data, weights);
    case MarginalFamily::wrapped_cauchy: return fit_wrapped_cauchy(data, weights);
    case MarginalFamily::uniform: return {UnivariateCircular::uniform(), false};
  }
  return {UnivariateCircular::uniform(), false};
}

namespace detail {

// circula log-likelihood machinery over a fixed u-space dataset, with the
// row trigonometry cached so objective evaluations are free of sin/cos
class CirculaObjective {
 public:
  CirculaObjective(const Dataset& u, BindingFamily binding)
      : n_(u.n), d_(u.d), binding_(binding), weights_(u.weights) {
    cosu_.resize(n_ * d_);
    sinu_.resize(n_ * d_);
    for (std::size_t i = 0; i < n_ * d_; ++i) {
      cosu_[i] = std::cos(u.values[i]);
      sinu_[i] = std::sin(u.values[i]);
    }
  }

  // weighted circula log-likelihood at (rho, q)
  double loglik(const std::vector<double>& rho, const std::vector<int>& q) const {
    if (binding_ == BindingFamily::uniform)
      return -static_cast<double>(d_) * log_two_pi * total_weight();
    if (binding_ == BindingFamily::von_mises) return vm_loglik(rho, q);
    return wc_loglik(rho, q);
  }

  double total_weight() const {
    return weights_.empty() ? static_cast<double>(n_)
                            : deterministic_sum(weights_);
  }

 private:
  double vm_loglik(const std::vector<double>& rho, const std::vector<int>& q) const {
    std::vector<double> kappa(d_), qk(d_);
    double sum_log_i0 = 0.0;
    for (std::size_t j = 0; j < d_; ++j) {
      kappa[j] = std::min(inverse_mean_resultant(rho[j]), kappa_max);
      qk[j] = kappa[j] * static_cast<double>(q[j]);
      sum_log_i0 += log_bessel_i0(kappa[j]);
    }
    double base = -static_cast<double>(d_) * log_two_pi - sum_log_i0;
    return deterministic_sum(n_, [&](std::size_t i) {
      double w = weights_.empty() ? 1.0 : weights_[i];
      if (w <= 1e-14) return 0.0;
      double c = 0.0, s = 0.0;
      const double* cr = cosu_.data() + i * d_;
      const double* sr = sinu_.data() + i * d_;
      for (std::size_t j = 0; j < d_; ++j) {
        c += kappa[j] * cr[j];
        s += qk[j] * sr[j];
      }
      return w * (log_bessel_i0(std::hypot(c, s)) + base);
    });
  }

  double wc_loglik(const std::vector<double>& rho, const std::vector<int>& q) const {
    CirculaParams p;
    p.family = BindingFamily::wrapped_cauchy;
    p.conc = rho;
    p.q = q;
    PreparedWc pc = prepare_wc(p);
    double base = -static_cast<double>(d_) * log_two_pi;
    if (pc.quadrature_fallback) {
      // five-way ties do not arise from finite optimizer iterates in practice;
      // evaluate honestly anyway
      return deterministic_sum(n_, [&](std::size_t i) {
        double w = weights_.empty() ? 1.0 : weights_[i];
        if (w <= 1e-14) return 0.0;
        std::vector<double> u(d_);
        for (std::size_t j = 0; j < d_; ++j)
          u[j] = std::atan2(sinu_[i * d_ + j], cosu_[i * d_ + j]);
        return w * circula_logpdf_quadrature(p, u);
      });
    }
    return deterministic_sum(n_, [&](std::size_t i) {
      double w = weights_.empty() ? 1.0 : weights_[i];
      if (w <= 1e-14) return 0.0;
      std::complex<long double> eta[circula_max_dim];
      const double* cr = cosu_.data() + i * d_;
      const double* sr = sinu_.data() + i * d_;
      for (std::size_t j = 0; j < d_; ++j) {
        long double rj = pc.rho[j];
        eta[j] = std::complex<long double>(
            rj * static_cast<long double>(cr[j]),
            rj * static_cast<long double>(q[j] > 0 ? sr[j] : -sr[j]));
      }
      return w * (wc_sum_log_eta(pc, eta) + base);
    });
  }

  std::size_t n_, d_;
  BindingFamily binding_;
  std::vector<double> weights_;
  std::vector<double> cosu_, sinu_;
};

struct BindingRefineResult {
  std::vector<double> rho;
  double circula_loglik = 0.0;
  bool converged = true;
  int iterations = 0;
};

// step 4 of the estimation pipeline: bounded quasi-Newton maximization of the
// circula log-likelihood in rho, q held fixed
inline BindingRefineResult refine_binding(const CirculaObjective& obj,
                                          BindingFamily binding,
                                          const std::vector<int>& q,
                                          std::vector<double> rho_init,
                                          const BoxOptimOptions& opt) {
  std::size_t d = q.size();
  BindingRefineResult out;
  if (binding == BindingFamily::uniform) {
    out.rho = {};
    out.circula_loglik = obj.loglik({}, q);
    return out;
  }
  for (auto& r : rho_init)
    r = std::clamp(r, binding_rho_lo, binding_rho_hi);
  std::vector<double> lo(d, binding_rho_lo), hi(d, binding_rho_hi);
  auto negll = [&](const std::vector<double>& rho) { return -obj.loglik(rho, q); };
  BoxOptimResult r = minimize_box(negll, rho_init, lo, hi, opt);
  // a flat likelihood can strand the iterate above the near-independence
  // corner, which is always available as a candidate
  std::vector<double> corner(d, binding_rho_lo);
  double corner_val = negll(corner);
  if (corner_val < r.value) {
    r.x = std::move(corner);
    r.value = corner_val;
  }
  out.rho = r.x;
  out.circula_loglik = -r.value;
  out.converged = r.converged;
  out.iterations = r.iterations;
  return out;
}

inline CirculaParams make_binding(BindingFamily binding,
                                  const std::vector<double>& rho,
                                  std::vector<int> q) {
  CirculaParams c;
  c.family = binding;
  c.q = std::move(q);
  if (binding == BindingFamily::von_mises) {
    c.conc.resize(rho.size());
    for (std::size_t j = 0; j < rho.size(); ++j)
      c.conc[j] = std::min(inverse_mean_resultant(rho[j]), kappa_max);
  } else if (binding == BindingFamily::wrapped_cauchy) {
    c.conc = rho;
  }
  return c;
}

// flip every sign if the first one is negative; the circula density is
// invariant under a global q flip so this only fixes the reported labels
inline void canonicalize_q(CirculaParams& c) {
  if (!c.q.empty() && c.q[0] < 0)
    for (auto& s : c.q) s = -s;
}

struct MarginalStage {
  std::vector<UnivariateCircular> marginals;
  Dataset u;
  bool any_degenerate = false;
};

inline MarginalStage fit_marginals_and_transform(const Dataset& data,
                                                 MarginalFamily family) {
  MarginalStage st;
  std::vector<double> col(data.n);
  for (std::size_t j = 0; j < data.d; ++j) {
    for (std::size_t i = 0; i < data.n; ++i) col[i] = data.values[i * data.d + j];
    auto fit = fit_marginal(family, col, data.weights);
    st.any_degenerate = st.any_degenerate || fit.degenerate;
    st.marginals.push_back(fit.dist);
  }
  CbmdParams tmp;
  tmp.marginals = st.marginals;
  tmp.circula = CirculaParams::uniform(data.d);
  st.u = pit_transform(tmp, data);
  return st;
}

}  // namespace detail

// one-component estimation: marginals by IFM, dependence signs and magnitudes
// from the circular correlation factor, then bounded likelihood refinement
inline EstimateResult estimate_cbmd(const Dataset& data, FamilyChoice families,
                                    const EstimateOptions& options = {}) {
  data.validate();
  if (data.n < 10 * data.d)
    throw data_error("estimate_cbmd: need n >= 10 d");

  detail::MarginalStage st = detail::fit_marginals_and_transform(data, families.marginal);
  EstimateResult out;
  out.params.marginals = st.marginals;
  std::size_t d = data.d;

  if (families.binding == BindingFamily::uniform) {
    out.params.circula = CirculaParams::uniform(d);
    detail::CirculaObjective obj(st.u, BindingFamily::uniform);
    out.circula_loglik = obj.loglik({}, out.params.circula.q);
    out.loglik = cbmd_loglik(out.params, data);
    return out;
  }

  std::vector<int> q(d, 1);
  std::vector<double> rho_init(d, binding_rho_lo);
  bool independence_fallback = false;
  try {
    Eigen::MatrixXd r = js_correlation_matrix(data);
    Rank1Result rk = rank1_factor_approx(r);
    if (rk.degenerate || rk.w.lpNorm<Eigen::Infinity>() <= 0.0) {
      independence_fallback = true;
    } else {
      for (std::size_t j = 0; j < d; ++j) {
        double wj = rk.w[static_cast<Eigen::Index>(j)];
        q[j] = wj < 0.0 ? -1 : 1;
        rho_init[j] = std::clamp(std::fabs(wj), binding_rho_lo, binding_rho_hi);
      }
    }
  } catch (const data_error&) {
    independence_fallback = true;
  }

  detail::CirculaObjective obj(st.u, families.binding);
  if (independence_fallback) {
    out.degenerate_dependence = true;
    out.params.circula = detail::make_binding(families.binding, rho_init, q);
    out.circula_loglik = obj.loglik(rho_init, q);
    out.loglik = cbmd_loglik(out.params, data);
    return out;
  }

  detail::BindingRefineResult ref =
      detail::refine_binding(obj, families.binding, q, rho_init, options.optim);
  out.params.circula = detail::make_binding(families.binding, ref.rho, q);
  detail::canonicalize_q(out.params.circula);
  out.circula_loglik = ref.circula_loglik;
  out.converged = ref.converged;
  out.iterations = ref.iterations;
  out.loglik = cbmd_loglik(out.params, data);
  return out;
}

// reference estimator: optimizes every sign configuration and keeps the best;
// the heuristic arm is a strict subset, so this can never score lower
inline EstimateResult estimate_cbmd_exhaustive(const Dataset& data,
                                               FamilyChoice families,
                                               const EstimateOptions& options = {}) {
  data.validate();
  if (data.d > 12)
    throw data_error("estimate_cbmd_exhaustive: refused for d > 12");
  if (data.n < 10 * data.d)
    throw data_error("estimate_cbmd_exhaustive: need n >= 10 d");
  if (families.binding == BindingFamily::uniform)
    return estimate_cbmd(data, families, options);

  detail::MarginalStage st = detail::fit_marginals_and_transform(data, families.marginal);
  std::size_t d = data.d;

  std::vector<double> rho_init(d, binding_rho_lo);
  try {
    Eigen::MatrixXd r = js_correlation_matrix(data);
    Rank1Result rk = rank1_factor_approx(r);
    if (!rk.degenerate)
      for (std::size_t j = 0; j < d; ++j)
        rho_init[j] = std::clamp(std::fabs(rk.w[static_cast<Eigen::Index>(j)]),
                                 binding_rho_lo, binding_rho_hi);
  } catch (const data_error&) {
    // keep the independence initialization
  }

  detail::CirculaObjective obj(st.u, families.binding);
  EstimateResult best;
  bool have_best = false;
  int total_iters = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
    std::vector<int> q(d);
    for (std::size_t j = 0; j < d; ++j)
      q[j] = (mask >> (d - 1 - j)) & 1 ? -1 : 1;
    detail::BindingRefineResult ref =
        detail::refine_binding(obj, families.binding, q, rho_init, options.optim);
    total_iters += ref.iterations;
    if (!have_best || ref.circula_loglik > best.circula_loglik) {
      best.params.circula = detail::make_binding(families.binding, ref.rho, q);
      best.circula_loglik = ref.circula_loglik;
      best.converged = ref.converged;
      have_best = true;
    }
  }
  best.params.marginals = st.marginals;
  detail::canonicalize_q(best.params.circula);
  best.iterations = total_iters;
  best.loglik = cbmd_loglik(best.params, data);
  return best;
}

}  // namespace cbmd
