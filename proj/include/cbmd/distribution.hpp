#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cbmd/circula.hpp"
#include "cbmd/core.hpp"
#include "cbmd/univariate.hpp"

namespace cbmd {

// row-major angle data with optional per-row weights
struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> values;
  std::vector<double> weights;  // empty means unit weights

  Dataset() = default;
  Dataset(std::size_t n_, std::size_t d_)
      : n(n_), d(d_), values(n_ * d_, 0.0) {}

  std::span<double> row(std::size_t i) { return {values.data() + i * d, d}; }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * d, d};
  }
  double weight(std::size_t i) const {
    return weights.empty() ? 1.0 : weights[i];
  }
  void validate() const {
    if (values.size() != n * d) throw data_error("dataset: storage size mismatch");
    if (!weights.empty() && weights.size() != n)
      throw data_error("dataset: weight length mismatch");
    for (double w : weights)
      if (!(w >= 0.0)) throw data_error("dataset: negative weight");
  }
};

// marginals plus the circula that couples them
struct CbmdParams {
  std::vector<UnivariateCircular> marginals;
  CirculaParams circula;

  std::size_t dim() const { return marginals.size(); }
  void validate() const {
    circula.validate();
    if (marginals.size() != circula.dim())
      throw data_error("cbmd: marginal count differs from circula dimension");
  }
};

// density evaluator with per-coordinate CDF tables and the circula constants
// precomputed; safe to share across threads once built
class CbmdEvaluator {
 public:
  explicit CbmdEvaluator(const CbmdParams& p) : params_(p), circ_(p.circula) {
    p.validate();
    transforms_.reserve(p.dim());
    for (const auto& m : p.marginals) transforms_.emplace_back(m);
  }

  const CbmdParams& params() const { return params_; }
  const MarginalTransform& transform(std::size_t i) const { return transforms_[i]; }
  const CirculaEvaluator& circula() const { return circ_; }

  void to_circula_space(std::span<const double> theta, std::span<double> u) const {
    for (std::size_t i = 0; i < transforms_.size(); ++i)
      u[i] = transforms_[i].u(theta[i]);
  }

  double logpdf(std::span<const double> theta) const {
    std::size_t d = params_.dim();
    if (theta.size() != d) throw data_error("cbmd logpdf: dim mismatch");
    double u[circula_max_dim];
    double acc = static_cast<double>(d) * log_two_pi;
    for (std::size_t i = 0; i < d; ++i) {
      acc += log_pdf(params_.marginals[i], theta[i]);
      u[i] = transforms_[i].u(theta[i]);
    }
    return acc + circ_.logpdf(std::span<const double>(u, d));
  }

  double loglik(const Dataset& data) const {
    if (data.d != params_.dim()) throw data_error("loglik: dim mismatch");
    return deterministic_sum(data.n, [&](std::size_t i) {
      return data.weight(i) * logpdf(data.row(i));
    });
  }

 private:
  CbmdParams params_;
  std::vector<MarginalTransform> transforms_;
  CirculaEvaluator circ_;
};

inline double cbmd_logpdf(const CbmdParams& p, std::span<const double> theta) {
  return CbmdEvaluator(p).logpdf(theta);
}

inline double cbmd_loglik(const CbmdParams& p, const Dataset& data) {
  return CbmdEvaluator(p).loglik(data);
}

// probability integral transform of a whole dataset into circula space,
// u_ij = 2 pi F_j(theta_ij); weights carry over
inline Dataset pit_transform(const CbmdParams& p, const Dataset& data) {
  if (data.d != p.dim()) throw data_error("pit_transform: dim mismatch");
  std::vector<MarginalTransform> tr;
  tr.reserve(p.dim());
  for (const auto& m : p.marginals) tr.emplace_back(m);
  Dataset u(data.n, data.d);
  u.weights = data.weights;
  for (std::size_t i = 0; i < data.n; ++i) {
    auto in = data.row(i);
    auto out = u.row(i);
    for (std::size_t j = 0; j < data.d; ++j) out[j] = tr[j].u(in[j]);
  }
  return u;
}

inline Dataset cbmd_sample(const CbmdParams& p, RandomSource& rng, std::size_t n) {
  p.validate();
  std::vector<MarginalTransform> tr;
  tr.reserve(p.dim());
  for (const auto& m : p.marginals) tr.emplace_back(m);
  Dataset out(n, p.dim());
  for (std::size_t i = 0; i < n; ++i) {
    AngleVector u = circula_sample(p.circula, rng);
    auto row = out.row(i);
    for (std::size_t j = 0; j < p.dim(); ++j)
      row[j] = tr[j].quantile(u[j] / two_pi);
  }
  return out;
}

inline CbmdParams cbmd_marginal(const CbmdParams& p,
                                std::span<const std::size_t> subset) {
  if (subset.empty()) throw data_error("cbmd_marginal: empty subset");
  CbmdParams out;
  for (std::size_t idx : subset) {
    if (idx >= p.dim()) throw data_error("cbmd_marginal: index out of range");
    out.marginals.push_back(p.marginals[idx]);
  }
  out.circula = circula_marginal(p.circula, subset);
  return out;
}

// log h(theta_A | theta_B) via the joint/marginal quotient; A and B may
// together cover only part of the coordinates
inline double cbmd_conditional_logpdf(const CbmdParams& p,
                                      std::span<const std::size_t> given_idx,
                                      std::span<const double> given_vals,
                                      std::span<const std::size_t> target_idx,
                                      std::span<const double> target_vals) {
  if (given_idx.size() != given_vals.size() ||
      target_idx.size() != target_vals.size())
    throw data_error("conditional: index/value length mismatch");
  if (given_idx.empty() || target_idx.empty())
    throw data_error("conditional: empty index set");
  for (std::size_t a : target_idx)
    for (std::size_t b : given_idx)
      if (a == b) throw data_error("conditional: index sets overlap");

  std::vector<std::size_t> joint_idx(target_idx.begin(), target_idx.end());
  joint_idx.insert(joint_idx.end(), given_idx.begin(), given_idx.end());
  std::vector<double> joint_vals(target_vals.begin(), target_vals.end());
  joint_vals.insert(joint_vals.end(), given_vals.begin(), given_vals.end());

  CbmdParams joint = cbmd_marginal(p, joint_idx);
  CbmdParams cond = cbmd_marginal(p, given_idx);
  double log_b = cbmd_logpdf(cond, given_vals);
  if (log_b < -690.0)
    throw numeric_error("conditional: conditioning density underflows");
  return cbmd_logpdf(joint, joint_vals) - log_b;
}

namespace detail {
// per-axis tables for tensor-grid work: u and log f at given axis abscissae
struct AxisTable {
  std::vector<double> u;
  std::vector<double> logf;
};

inline AxisTable axis_table(const MarginalTransform& tr,
                            std::span<const double> abscissae) {
  AxisTable t;
  t.u.reserve(abscissae.size());
  t.logf.reserve(abscissae.size());
  for (double th : abscissae) {
    t.u.push_back(tr.u(th));
    t.logf.push_back(log_pdf(tr.dist(), th));
  }
  return t;
}
}  // namespace detail

// densities at the cell centers of a res x res midpoint grid on the 2-torus,
// row-major in (i, j); exact per-point values, not averages
inline std::vector<double> grid_density2(const CbmdParams& p, std::size_t res) {
  p.validate();
  if (p.dim() != 2) throw data_error("grid_density2: needs a 2-d model");
  CbmdEvaluator ev(p);
  double h = two_pi / static_cast<double>(res);
  std::vector<double> centers(res);
  for (std::size_t i = 0; i < res; ++i)
    centers[i] = (static_cast<double>(i) + 0.5) * h;
  detail::AxisTable ax = detail::axis_table(ev.transform(0), centers);
  detail::AxisTable ay = detail::axis_table(ev.transform(1), centers);
  std::vector<double> out(res * res);
  double base = 2.0 * log_two_pi;
  for (std::size_t i = 0; i < res; ++i) {
    for (std::size_t j = 0; j < res; ++j) {
      double u[2] = {ax.u[i], ay.u[j]};
      out[i * res + j] = std::exp(base + ax.logf[i] + ay.logf[j] +
                                  ev.circula().logpdf(std::span<const double>(u, 2)));
    }
  }
  return out;
}

// mean density over the res^3 midpoint grid; integral estimate is this times
// (2 pi)^3
inline double grid_density_mean3(const CbmdParams& p, std::size_t res) {
  p.validate();
  if (p.dim() != 3) throw data_error("grid_density_mean3: needs a 3-d model");
  CbmdEvaluator ev(p);
  double h = two_pi / static_cast<double>(res);
  std::vector<double> centers(res);
  for (std::size_t i = 0; i < res; ++i)
    centers[i] = (static_cast<double>(i) + 0.5) * h;
  detail::AxisTable ax = detail::axis_table(ev.transform(0), centers);
  detail::AxisTable ay = detail::axis_table(ev.transform(1), centers);
  detail::AxisTable az = detail::axis_table(ev.transform(2), centers);
  double base = 3.0 * log_two_pi;
  KahanAccumulator total;
  for (std::size_t i = 0; i < res; ++i) {
    for (std::size_t j = 0; j < res; ++j) {
      KahanAccumulator line;
      double pre = base + ax.logf[i] + ay.logf[j];
      for (std::size_t k = 0; k < res; ++k) {
        double u[3] = {ax.u[i], ay.u[j], az.u[k]};
        line.add(std::exp(pre + az.logf[k] +
                          ev.circula().logpdf(std::span<const double>(u, 3))));
      }
      total.add(line.value());
    }
  }
  return total.value() / static_cast<double>(res * res * res);
}

}  // namespace cbmd
