#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cbmd/estimation.hpp"

namespace cbmd {

namespace detail {

inline double sample_gamma(double shape, RandomSource& rng) {
  if (!(shape > 0.0)) throw std::domain_error("sample_gamma: shape must be > 0");
  if (shape < 1.0) {
    // boost to shape+1 and scale back
    double g = sample_gamma(shape + 1.0, rng);
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    return g * std::pow(u, 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze
  double d = shape - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = rng.normal();
    double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    double v = t * t * t;
    double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return d * v;
  }
}

inline double sample_beta(double a, double b, RandomSource& rng) {
  double x = sample_gamma(a, rng);
  double y = sample_gamma(b, rng);
  double s = x + y;
  return s > 0.0 ? x / s : 0.5;
}

}  // namespace detail

// random correlation matrix by the onion construction, uniform over the
// correlation-matrix body at eta = 1
inline Eigen::MatrixXd sample_lkj_correlation(std::size_t dim, double eta,
                                              RandomSource& rng) {
  if (dim < 2) throw data_error("sample_lkj_correlation: dim must be >= 2");
  if (!(eta > 0.0)) throw data_error("sample_lkj_correlation: eta must be > 0");
  Eigen::Index d = static_cast<Eigen::Index>(dim);

  double beta = eta + (static_cast<double>(dim) - 2.0) / 2.0;
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(d, d);
  double r12 = 2.0 * detail::sample_beta(beta, beta, rng) - 1.0;
  r(0, 1) = r12;
  r(1, 0) = r12;
  for (Eigen::Index k = 2; k < d; ++k) {
    beta -= 0.5;
    double y = detail::sample_beta(static_cast<double>(k) / 2.0, beta, rng);
    Eigen::VectorXd u(k);
    double nrm = 0.0;
    do {
      for (Eigen::Index i = 0; i < k; ++i) u[i] = rng.normal();
      nrm = u.norm();
    } while (!(nrm > 0.0));
    u *= std::sqrt(y) / nrm;
    Eigen::LLT<Eigen::MatrixXd> llt(r.topLeftCorner(k, k));
    if (llt.info() != Eigen::Success)
      throw numeric_error("sample_lkj_correlation: interim Cholesky failed");
    Eigen::VectorXd z = llt.matrixL() * u;
    r.block(0, k, k, 1) = z;
    r.block(k, 0, 1, k) = z.transpose();
  }
  return r;
}

// multivariate normal with covariance D^{1/2} R D^{1/2}, wrapped onto the
// torus coordinate-wise
inline Dataset wrapped_mvn_sample(const std::vector<double>& mean,
                                  const Eigen::MatrixXd& correlation,
                                  const std::vector<double>& variances,
                                  std::size_t n, RandomSource& rng) {
  std::size_t d = mean.size();
  if (d == 0 || variances.size() != d ||
      correlation.rows() != static_cast<Eigen::Index>(d) ||
      correlation.cols() != static_cast<Eigen::Index>(d))
    throw data_error("wrapped_mvn_sample: dimension mismatch");
  for (double v : variances)
    if (!(v >= 0.0)) throw data_error("wrapped_mvn_sample: negative variance");

  Eigen::LLT<Eigen::MatrixXd> llt(correlation);
  if (llt.info() != Eigen::Success)
    throw numeric_error("wrapped_mvn_sample: Cholesky factorization failed");
  Eigen::MatrixXd l = llt.matrixL();
  for (std::size_t i = 0; i < d; ++i)
    l.row(static_cast<Eigen::Index>(i)) *= std::sqrt(variances[i]);

  Dataset out;
  out.n = n;
  out.d = d;
  out.values.resize(n * d);
  Eigen::VectorXd z(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j)
      z[static_cast<Eigen::Index>(j)] = rng.normal();
    Eigen::VectorXd x = l * z;
    for (std::size_t j = 0; j < d; ++j)
      out.values[i * d + j] =
          normalize_angle(mean[j] + x[static_cast<Eigen::Index>(j)]);
  }
  return out;
}

enum class CorrelationSource { lkj, explicit_matrix, factor };

struct SynthSpec {
  std::size_t dim = 3;
  std::size_t n_samples = 1000;
  std::size_t n_repeats = 100;
  CorrelationSource source = CorrelationSource::lkj;
  double eta = 1.0;
  Eigen::MatrixXd matrix;   // explicit_matrix source
  Eigen::VectorXd factor;   // factor source, correlation G(w)
  double variance_lo = 0.0;
  double variance_hi = pi / 2.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 2) throw data_error("SynthSpec: dim must be >= 2");
    if (n_samples == 0 || n_repeats == 0)
      throw data_error("SynthSpec: need n_samples, n_repeats >= 1");
    if (!(eta > 0.0)) throw data_error("SynthSpec: eta must be > 0");
    if (!(variance_lo >= 0.0) || !(variance_hi >= variance_lo) ||
        variance_hi > pi / 2.0 + 1e-12)
      throw data_error("SynthSpec: variance range must lie within [0, pi/2]");
    if (source == CorrelationSource::explicit_matrix &&
        (matrix.rows() != static_cast<Eigen::Index>(dim) ||
         matrix.cols() != static_cast<Eigen::Index>(dim)))
      throw data_error("SynthSpec: explicit matrix has wrong shape");
    if (source == CorrelationSource::factor &&
        factor.size() != static_cast<Eigen::Index>(dim))
      throw data_error("SynthSpec: factor vector has wrong length");
  }
};

struct BenchRecord {
  std::size_t repeat = 0;
  std::string method;
  double loglik = 0.0;
  double wall_seconds = 0.0;
};

struct BenchReport {
  std::size_t dim = 0;
  std::size_t n_samples = 0;
  std::size_t n_repeats = 0;
  std::uint64_t seed = 0;
  std::vector<BenchRecord> records;
  double mean_loglik_independent = 0.0;
  double mean_loglik_heuristic = 0.0;
  double mean_loglik_exhaustive = 0.0;
  double mean_wall_independent = 0.0;
  double mean_wall_heuristic = 0.0;
  double mean_wall_exhaustive = 0.0;
  std::size_t repeats_completed = 0;
  std::size_t repeats_failed = 0;
};

// the estimation benchmark: wrapped-normal synthetic repeats fitted by the
// independent baseline, the sign heuristic, and the exhaustive sign search,
// timing the fits only
inline BenchReport run_rank1_benchmark(const SynthSpec& spec) {
  spec.validate();
  if (spec.dim > 12)
    throw data_error("run_rank1_benchmark: exhaustive arm refused for d > 12");

  BenchReport rep;
  rep.dim = spec.dim;
  rep.n_samples = spec.n_samples;
  rep.n_repeats = spec.n_repeats;
  rep.seed = spec.seed;

  RandomSource root(spec.seed);
  std::vector<double> ll_ind, ll_heu, ll_exh, wt_ind, wt_heu, wt_exh;
  using clock = std::chrono::steady_clock;

  for (std::size_t r = 0; r < spec.n_repeats; ++r) {
    RandomSource rng = root.fork(r);
    std::vector<double> mean(spec.dim), var(spec.dim);
    for (auto& m : mean) m = rng.uniform(0.0, two_pi);
    for (auto& v : var) v = rng.uniform(spec.variance_lo, spec.variance_hi);
    Eigen::MatrixXd corr;
    switch (spec.source) {
      case CorrelationSource::lkj:
        corr = sample_lkj_correlation(spec.dim, spec.eta, rng);
        break;
      case CorrelationSource::explicit_matrix:
        corr = spec.matrix;
        break;
      case CorrelationSource::factor:
        corr = factor_correlation(spec.factor);
        break;
    }
    Dataset data;
    try {
      data = wrapped_mvn_sample(mean, corr, var, spec.n_samples, rng);
    } catch (const std::exception&) {
      rep.repeats_failed += 1;
      continue;
    }

    FamilyChoice indep{MarginalFamily::von_mises, BindingFamily::uniform};
    FamilyChoice coupled{MarginalFamily::von_mises, BindingFamily::wrapped_cauchy};
    try {
      auto t0 = clock::now();
      EstimateResult e_ind = estimate_cbmd(data, indep);
      auto t1 = clock::now();
      EstimateResult e_heu = estimate_cbmd(data, coupled);
      auto t2 = clock::now();
      EstimateResult e_exh = estimate_cbmd_exhaustive(data, coupled);
      auto t3 = clock::now();
      auto secs = [](auto a, auto b) {
        return std::chrono::duration<double>(b - a).count();
      };
      rep.records.push_back({r, "independent_vm", e_ind.loglik, secs(t0, t1)});
      rep.records.push_back({r, "heuristic", e_heu.loglik, secs(t1, t2)});
      rep.records.push_back({r, "exhaustive", e_exh.loglik, secs(t2, t3)});
      ll_ind.push_back(e_ind.loglik);
      ll_heu.push_back(e_heu.loglik);
      ll_exh.push_back(e_exh.loglik);
      wt_ind.push_back(secs(t0, t1));
      wt_heu.push_back(secs(t1, t2));
      wt_exh.push_back(secs(t2, t3));
      rep.repeats_completed += 1;
    } catch (const std::exception&) {
      rep.repeats_failed += 1;
    }
  }

  auto mean_of = [](const std::vector<double>& xs) {
    return xs.empty() ? 0.0
                      : deterministic_sum(xs) / static_cast<double>(xs.size());
  };
  rep.mean_loglik_independent = mean_of(ll_ind);
  rep.mean_loglik_heuristic = mean_of(ll_heu);
  rep.mean_loglik_exhaustive = mean_of(ll_exh);
  rep.mean_wall_independent = mean_of(wt_ind);
  rep.mean_wall_heuristic = mean_of(wt_heu);
  rep.mean_wall_exhaustive = mean_of(wt_exh);
  return rep;
}

}  // namespace cbmd
