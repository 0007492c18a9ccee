#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "cbmd/core.hpp"

namespace cbmd {

struct BoxOptimOptions {
  int max_iter = 500;
  double grad_tol = 1e-6;      // infinity norm of the projected gradient
  double rel_obj_tol = 1e-10;  // relative objective change
  double fd_step = 1e-5;       // central finite-difference half-step
};

struct BoxOptimResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// minimize f over the box [lo, hi]: BFGS directions on projected iterates
// with Armijo backtracking; finite-difference gradients, one-sided when a
// coordinate sits against its bound
template <class F>
BoxOptimResult minimize_box(F&& f, std::vector<double> x0,
                            const std::vector<double>& lo,
                            const std::vector<double>& hi,
                            const BoxOptimOptions& opt = {}) {
  const std::size_t d = x0.size();
  if (lo.size() != d || hi.size() != d)
    throw data_error("minimize_box: bound length mismatch");

  auto project = [&](std::vector<double>& x) {
    for (std::size_t i = 0; i < d; ++i) {
      if (x[i] < lo[i]) x[i] = lo[i];
      if (x[i] > hi[i]) x[i] = hi[i];
    }
  };
  project(x0);

  auto gradient = [&](const std::vector<double>& x, Eigen::VectorXd& g) {
    std::vector<double> xp = x, xm = x;
    for (std::size_t i = 0; i < d; ++i) {
      double up = std::min(x[i] + opt.fd_step, hi[i]);
      double dn = std::max(x[i] - opt.fd_step, lo[i]);
      if (up == dn) {
        g[static_cast<Eigen::Index>(i)] = 0.0;
        continue;
      }
      xp[i] = up;
      xm[i] = dn;
      g[static_cast<Eigen::Index>(i)] = (f(xp) - f(xm)) / (up - dn);
      xp[i] = x[i];
      xm[i] = x[i];
    }
  };

  auto projected_grad_norm = [&](const std::vector<double>& x,
                                 const Eigen::VectorXd& g) {
    double m = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double gi = g[static_cast<Eigen::Index>(i)];
      if (x[i] <= lo[i] && gi > 0.0) gi = 0.0;
      if (x[i] >= hi[i] && gi < 0.0) gi = 0.0;
      m = std::max(m, std::fabs(gi));
    }
    return m;
  };

  BoxOptimResult res;
  res.x = x0;
  res.value = f(res.x);

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d),
                                                static_cast<Eigen::Index>(d));
  Eigen::VectorXd g(static_cast<Eigen::Index>(d));
  gradient(res.x, g);

  for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
    if (projected_grad_norm(res.x, g) < opt.grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd dir = -(H * g);
    if (dir.dot(g) >= 0.0) {  // lost descent; restart from steepest descent
      H.setIdentity();
      dir = -g;
    }

    double t = 1.0;
    std::vector<double> x_new(d);
    double f_new = res.value;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      for (std::size_t i = 0; i < d; ++i)
        x_new[i] = res.x[i] + t * dir[static_cast<Eigen::Index>(i)];
      project(x_new);
      double decrease = 0.0;
      for (std::size_t i = 0; i < d; ++i)
        decrease += g[static_cast<Eigen::Index>(i)] * (x_new[i] - res.x[i]);
      f_new = f(x_new);
      if (f_new <= res.value + 1e-4 * decrease && decrease < 0.0) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      res.converged = projected_grad_norm(res.x, g) < 1e2 * opt.grad_tol;
      break;
    }

    Eigen::VectorXd g_new(static_cast<Eigen::Index>(d));
    gradient(x_new, g_new);
    Eigen::VectorXd s(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i)
      s[static_cast<Eigen::Index>(i)] = x_new[i] - res.x[i];
    Eigen::VectorXd y = g_new - g;
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      // inverse BFGS update
      Eigen::VectorXd Hy = H * y;
      double yHy = y.dot(Hy);
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose()) -
           (Hy * s.transpose() + s * Hy.transpose()) / sy;
    }

    double prev = res.value;
    res.x = x_new;
    res.value = f_new;
    g = g_new;
    if (std::fabs(prev - f_new) <= opt.rel_obj_tol * std::max(1.0, std::fabs(f_new))) {
      res.converged = true;
      ++res.iterations;
      break;
    }
  }
  return res;
}

}  // namespace cbmd
