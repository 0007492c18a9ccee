#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstddef>
#include <vector>

#include "cbmd/distribution.hpp"

namespace cbmd {

struct CriticalPoint {
  AngleVector location;
  double logpdf = 0.0;
  int index = 0;           // count of negative Hessian eigenvalues
  bool degenerate = false; // an eigenvalue too close to zero to classify
};

struct ModesReport {
  std::vector<CriticalPoint> points;
  std::vector<std::size_t> index_counts;  // by index 0..d
  std::size_t mode_count = 0;             // index == d
  bool plateau = false;
  // alternating sum of critical-point counts; zero for a torus when the
  // density is Morse
  long long euler_sum = 0;
};

namespace detail {

class GridLogPdf {
 public:
  GridLogPdf(const CbmdEvaluator& ev, std::size_t d, std::size_t res)
      : d_(d), res_(res), values_(ipow(res, d)) {
    double h = two_pi / static_cast<double>(res);
    std::vector<double> nodes(res);
    for (std::size_t i = 0; i < res; ++i) nodes[i] = h * static_cast<double>(i);
    std::vector<AxisTable> axes;
    for (std::size_t j = 0; j < d; ++j)
      axes.push_back(axis_table(ev.transform(j), nodes));
    double base = static_cast<double>(d) * log_two_pi;
    std::vector<std::size_t> idx(d, 0);
    double u[circula_max_dim];
    for (std::size_t flat = 0; flat < values_.size(); ++flat) {
      double acc = base;
      for (std::size_t j = 0; j < d; ++j) {
        acc += axes[j].logf[idx[j]];
        u[j] = axes[j].u[idx[j]];
      }
      values_[flat] = acc + ev.circula().logpdf(std::span<const double>(u, d));
      for (std::size_t j = d; j-- > 0;) {
        if (++idx[j] < res_) break;
        idx[j] = 0;
      }
    }
  }

  static std::size_t ipow(std::size_t b, std::size_t e) {
    std::size_t r = 1;
    while (e--) r *= b;
    return r;
  }

  double at(std::span<const long> idx) const {
    std::size_t flat = 0;
    for (std::size_t j = 0; j < d_; ++j) {
      long v = idx[j] % static_cast<long>(res_);
      if (v < 0) v += static_cast<long>(res_);
      flat = flat * res_ + static_cast<std::size_t>(v);
    }
    return values_[flat];
  }

  std::size_t dim() const { return d_; }
  std::size_t res() const { return res_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t d_, res_;
  std::vector<double> values_;
};

inline Eigen::VectorXd fd_gradient(const CbmdEvaluator& ev,
                                   const std::vector<double>& x, double h) {
  std::size_t d = x.size();
  Eigen::VectorXd g(static_cast<Eigen::Index>(d));
  std::vector<double> p = x;
  for (std::size_t j = 0; j < d; ++j) {
    p[j] = x[j] + h;
    double fp = ev.logpdf(p);
    p[j] = x[j] - h;
    double fm = ev.logpdf(p);
    p[j] = x[j];
    g[static_cast<Eigen::Index>(j)] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline Eigen::MatrixXd fd_hessian(const CbmdEvaluator& ev,
                                  const std::vector<double>& x, double h) {
  std::size_t d = x.size();
  Eigen::MatrixXd hess(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  double f0 = ev.logpdf(x);
  std::vector<double> p = x;
  for (std::size_t i = 0; i < d; ++i) {
    p[i] = x[i] + h;
    double fp = ev.logpdf(p);
    p[i] = x[i] - h;
    double fm = ev.logpdf(p);
    p[i] = x[i];
    hess(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) =
        (fp - 2.0 * f0 + fm) / (h * h);
    for (std::size_t j = i + 1; j < d; ++j) {
      p[i] = x[i] + h; p[j] = x[j] + h;
      double fpp = ev.logpdf(p);
      p[j] = x[j] - h;
      double fpm = ev.logpdf(p);
      p[i] = x[i] - h;
      double fmm = ev.logpdf(p);
      p[j] = x[j] + h;
      double fmp = ev.logpdf(p);
      p[i] = x[i]; p[j] = x[j];
      double v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
      hess(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      hess(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  return hess;
}

}  // namespace detail

// critical points of the density on a periodic grid: neighbour-comparison
// candidates followed by damped Newton refinement and Hessian classification;
// a diagnostic, not a proof of completeness
inline ModesReport count_modes(const CbmdParams& p, std::size_t grid_per_dim) {
  p.validate();
  std::size_t d = p.dim();
  if (d > 3) throw data_error("count_modes: supported for d <= 3 only");
  if (grid_per_dim < 64) throw data_error("count_modes: grid_per_dim must be >= 64");

  CbmdEvaluator ev(p);
  detail::GridLogPdf grid(ev, d, grid_per_dim);
  std::size_t res = grid_per_dim;
  double h = two_pi / static_cast<double>(res);

  ModesReport rep;
  rep.index_counts.assign(d + 1, 0);

  // plateau scan along the first axis
  std::size_t ties = 0, pairs = 0;
  {
    const auto& v = grid.values();
    std::size_t stride = detail::GridLogPdf::ipow(res, d - 1);
    for (std::size_t i = 0; i + stride < v.size(); i += 1) {
      double a = v[i], b = v[i + stride];
      ++pairs;
      if (std::fabs(a - b) <= 1e-14 * std::max(1.0, std::fabs(a))) ++ties;
    }
  }
  if (pairs > 0 && ties > pairs / 2) {
    rep.plateau = true;
    return rep;
  }

  // candidate cells: local extrema of logpdf or local minima of |grad|^2
  std::vector<std::vector<double>> candidates;
  std::vector<long> idx(d, 0);
  std::vector<long> nb(d, 0);
  std::size_t total = grid.values().size();
  for (std::size_t flat = 0; flat < total; ++flat) {
    {
      std::size_t rem = flat;
      for (std::size_t j = d; j-- > 0;) {
        idx[j] = static_cast<long>(rem % res);
        rem /= res;
      }
    }
    double center = grid.at(idx);
    auto g2_at = [&](std::span<const long> at) {
      double s = 0.0;
      std::vector<long> t(at.begin(), at.end());
      for (std::size_t j = 0; j < d; ++j) {
        t[j] = at[j] + 1;
        double fp = grid.at(t);
        t[j] = at[j] - 1;
        double fm = grid.at(t);
        t[j] = at[j];
        double gj = (fp - fm) / (2.0 * h);
        s += gj * gj;
      }
      return s;
    };
    bool is_max = true, is_min = true;
    double g2c = g2_at(idx);
    bool g2min = true;
    // full Moore neighbourhood
    std::vector<long> offs(d, -1);
    for (;;) {
      bool self = true;
      for (std::size_t j = 0; j < d; ++j)
        if (offs[j] != 0) self = false;
      if (!self) {
        for (std::size_t j = 0; j < d; ++j) nb[j] = idx[j] + offs[j];
        double v = grid.at(nb);
        if (v >= center) is_max = false;
        if (v <= center) is_min = false;
        if (g2_at(nb) < g2c) g2min = false;
      }
      std::size_t j = 0;
      for (; j < d; ++j) {
        if (++offs[j] <= 1) break;
        offs[j] = -1;
      }
      if (j == d) break;
    }
    if (is_max || is_min || g2min) {
      std::vector<double> x(d);
      for (std::size_t j = 0; j < d; ++j)
        x[j] = h * static_cast<double>(idx[j]);
      candidates.push_back(std::move(x));
    }
  }

  // Newton refinement on the finite-difference gradient
  std::vector<CriticalPoint> found;
  for (auto& x : candidates) {
    bool ok = false;
    for (int it = 0; it < 60; ++it) {
      Eigen::VectorXd g = detail::fd_gradient(ev, x, 1e-5);
      if (g.lpNorm<Eigen::Infinity>() < 1e-7) {
        ok = true;
        break;
      }
      Eigen::MatrixXd hess = detail::fd_hessian(ev, x, 1e-4);
      Eigen::VectorXd step = hess.fullPivLu().solve(-g);
      double nrm = step.norm();
      if (!std::isfinite(nrm) || nrm == 0.0) break;
      if (nrm > 0.3) step *= 0.3 / nrm;
      for (std::size_t j = 0; j < d; ++j)
        x[j] = normalize_angle(x[j] + step[static_cast<Eigen::Index>(j)]);
    }
    if (!ok) continue;
    bool dup = false;
    for (const auto& q : found) {
      if (geodesic_dist2(q.location, x) < 1e-4) {
        dup = true;
        break;
      }
    }
    if (dup) continue;
    CriticalPoint cp;
    cp.location = x;
    cp.logpdf = ev.logpdf(x);
    Eigen::MatrixXd hess = detail::fd_hessian(ev, x, 1e-4);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess);
    int neg = 0;
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
      double lam = es.eigenvalues()[k];
      if (std::fabs(lam) < 1e-5) cp.degenerate = true;
      if (lam < 0.0) ++neg;
    }
    cp.index = neg;
    found.push_back(std::move(cp));
  }

  std::sort(found.begin(), found.end(),
            [](const CriticalPoint& a, const CriticalPoint& b) {
              return a.logpdf > b.logpdf;
            });
  for (const auto& cp : found) {
    rep.index_counts[static_cast<std::size_t>(cp.index)] += 1;
    if (static_cast<std::size_t>(cp.index) == d) rep.mode_count += 1;
    rep.euler_sum += (cp.index % 2 == 0) ? 1 : -1;
  }
  rep.points = std::move(found);
  return rep;
}

}  // namespace cbmd
