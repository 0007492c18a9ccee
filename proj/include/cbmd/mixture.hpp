#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "cbmd/estimation.hpp"

namespace cbmd {

struct MixtureFitMeta {
  double message_length_bits = 0.0;
  double model_length_bits = 0.0;
  double data_length_bits = 0.0;
  std::size_t K_nz = 0;
  bool converged = true;
  double loglik = 0.0;
  std::size_t frozen_components = 0;
  std::size_t independence_inits = 0;
};

struct MixtureModel {
  std::vector<double> weights;
  std::vector<CbmdParams> components;
  MixtureFitMeta fit_meta;

  std::size_t size() const { return weights.size(); }
  std::size_t dim() const {
    return components.empty() ? 0 : components.front().dim();
  }

  void validate() const {
    if (weights.size() != components.size() || weights.empty())
      throw data_error("mixture: weights/components size mismatch");
    double s = deterministic_sum(weights);
    if (std::fabs(s - 1.0) > 1e-12)
      throw data_error("mixture: weights must sum to 1");
    std::size_t d = components.front().dim();
    for (std::size_t k = 0; k < components.size(); ++k) {
      if (weights[k] < 0.0) throw data_error("mixture: negative weight");
      if (components[k].dim() != d)
        throw data_error("mixture: component dims differ");
      components[k].validate();
    }
  }
};

struct MmlConfig {
  std::size_t k_min = 1;
  std::size_t k_max = 1;
  std::size_t n_per_component = 0;  // 0 = derive 3d (2d with uniform binding)
  double batch_fraction = 1.0;
  std::size_t max_iter = 200;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  FamilyChoice families{};
  BoxOptimOptions optim{};
};

struct KmeansResult {
  std::vector<AngleVector> centers;
  std::vector<std::size_t> labels;
};

namespace detail {

inline AngleVector circular_centroid(const Dataset& data,
                                     const std::vector<std::size_t>& labels,
                                     std::size_t cluster) {
  std::size_t d = data.d;
  AngleVector c(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    KahanAccumulator cs, sn;
    for (std::size_t i = 0; i < data.n; ++i) {
      if (labels[i] != cluster) continue;
      double w = data.weight(i);
      double th = data.values[i * d + j];
      cs.add(w * std::cos(th));
      sn.add(w * std::sin(th));
    }
    c[j] = normalize_angle(std::atan2(sn.value(), cs.value()));
  }
  return c;
}

}  // namespace detail

// k-means++ on the torus: squared geodesic seeding, Lloyd iterations with
// per-coordinate circular means, empty clusters reseeded at the farthest point
inline KmeansResult toroidal_kmeanspp(const Dataset& data, std::size_t k,
                                      RandomSource& rng) {
  data.validate();
  if (k == 0 || k > data.n)
    throw data_error("toroidal_kmeanspp: need 1 <= K <= n");

  std::size_t n = data.n;
  KmeansResult out;
  out.centers.reserve(k);
  auto row_vec = [&](std::size_t i) {
    auto r = data.row(i);
    return AngleVector(r.begin(), r.end());
  };

  out.centers.push_back(row_vec(rng.next_below(n)));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i)
    d2[i] = geodesic_dist2(data.row(i), out.centers[0]);
  while (out.centers.size() < k) {
    double total = deterministic_sum(
        n, [&](std::size_t i) { return data.weight(i) * d2[i]; });
    std::size_t pick;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += data.weight(i) * d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.next_below(n);
    }
    out.centers.push_back(row_vec(pick));
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], geodesic_dist2(data.row(i), out.centers.back()));
  }

  out.labels.assign(n, 0);
  std::vector<double> own(n, 0.0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = geodesic_dist2(data.row(i), out.centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        double v = geodesic_dist2(data.row(i), out.centers[c]);
        if (v < bd) {
          bd = v;
          best = c;
        }
      }
      own[i] = bd;
      if (out.labels[i] != best) {
        out.labels[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) counts[out.labels[i]] += 1;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        out.centers[c] = detail::circular_centroid(data, out.labels, c);
      } else {
        // farthest point from its current center takes over the empty slot
        std::size_t far = 0;
        for (std::size_t i = 1; i < n; ++i)
          if (own[i] > own[far]) far = i;
        out.centers[c] = row_vec(far);
        out.labels[far] = c;
        own[far] = 0.0;
      }
    }
  }
  return out;
}

namespace detail {

inline CbmdParams independence_component(const Dataset& sub,
                                         MarginalFamily family) {
  CbmdParams p;
  std::size_t d = sub.d;
  if (sub.n >= 2) {
    std::vector<double> col(sub.n);
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t i = 0; i < sub.n; ++i) col[i] = sub.values[i * d + j];
      p.marginals.push_back(fit_marginal(family, col, sub.weights).dist);
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      double mu = sub.n == 1 ? sub.values[j] : 0.0;
      switch (family) {
        case MarginalFamily::von_mises:
          p.marginals.push_back(UnivariateCircular::von_mises(mu, 0.5));
          break;
        case MarginalFamily::wrapped_cauchy:
          p.marginals.push_back(UnivariateCircular::wrapped_cauchy(mu, 0.2));
          break;
        case MarginalFamily::uniform:
          p.marginals.push_back(UnivariateCircular::uniform());
          break;
      }
    }
  }
  p.circula = CirculaParams::uniform(d);
  return p;
}

inline Dataset subset_dataset(const Dataset& data,
                              const std::vector<std::size_t>& rows) {
  Dataset sub;
  sub.n = rows.size();
  sub.d = data.d;
  sub.values.resize(sub.n * sub.d);
  if (!data.weights.empty()) sub.weights.resize(sub.n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::size_t i = rows[r];
    std::copy_n(data.values.begin() + static_cast<std::ptrdiff_t>(i * data.d),
                data.d, sub.values.begin() + static_cast<std::ptrdiff_t>(r * data.d));
    if (!data.weights.empty()) sub.weights[r] = data.weights[i];
  }
  return sub;
}

}  // namespace detail

inline MixtureModel init_mixture_from_partition(
    const Dataset& data, const std::vector<std::size_t>& labels, std::size_t k,
    FamilyChoice families, const EstimateOptions& options = {}) {
  data.validate();
  if (labels.size() != data.n)
    throw data_error("init_mixture_from_partition: label count mismatch");
  if (k == 0) throw data_error("init_mixture_from_partition: K must be >= 1");

  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < data.n; ++i) {
    if (labels[i] >= k)
      throw data_error("init_mixture_from_partition: label out of range");
    members[labels[i]].push_back(i);
  }

  MixtureModel m;
  double wtot = deterministic_sum(
      data.n, [&](std::size_t i) { return data.weight(i); });
  for (std::size_t c = 0; c < k; ++c) {
    if (members[c].empty())
      throw data_error("init_mixture_from_partition: empty cluster");
    Dataset sub = detail::subset_dataset(data, members[c]);
    double cw = deterministic_sum(
        sub.n, [&](std::size_t i) { return sub.weight(i); });
    m.weights.push_back(cw / wtot);
    if (sub.n < 10 * data.d) {
      m.components.push_back(detail::independence_component(sub, families.marginal));
      m.fit_meta.independence_inits += 1;
      continue;
    }
    try {
      m.components.push_back(estimate_cbmd(sub, families, options).params);
    } catch (const numeric_error&) {
      m.components.push_back(detail::independence_component(sub, families.marginal));
      m.fit_meta.independence_inits += 1;
    }
  }
  m.fit_meta.K_nz = k;
  return m;
}

struct MessageLength {
  double total_bits = 0.0;
  double model_bits = 0.0;
  double data_bits = 0.0;
  std::size_t K_nz = 0;
};

namespace detail {

inline std::size_t component_param_count(const CbmdParams& p) {
  std::size_t n = 0;
  for (const auto& mg : p.marginals)
    if (mg.family != MarginalFamily::uniform) n += 2;
  if (p.circula.family != BindingFamily::uniform) n += p.dim();
  return n;
}

inline MessageLength message_length_from_loglik(const MixtureModel& model,
                                                double n_effective,
                                                double loglik) {
  MessageLength out;
  double model_nats = 0.0;
  std::size_t knz = 0;
  for (std::size_t k = 0; k < model.size(); ++k) {
    if (!(model.weights[k] > 0.0)) continue;
    ++knz;
    double nk = static_cast<double>(component_param_count(model.components[k]));
    model_nats += 0.5 * nk * std::log(n_effective * model.weights[k] / 12.0);
    model_nats += 0.5 * (nk + 1.0);
  }
  model_nats += 0.5 * static_cast<double>(knz) * std::log(n_effective / 12.0);
  constexpr double ln2 = 0.6931471805599453;
  out.model_bits = model_nats / ln2;
  out.data_bits = -loglik / ln2;
  out.total_bits = out.model_bits + out.data_bits;
  out.K_nz = knz;
  return out;
}

// log density columns of every component, cached so that only the column of a
// refitted component is recomputed
inline void fill_logdens_column(const CbmdParams& p, const Dataset& data,
                                std::vector<double>& col) {
  CbmdEvaluator ev(p);
  col.resize(data.n);
  for (std::size_t i = 0; i < data.n; ++i) col[i] = ev.logpdf(data.row(i));
}

struct MixtureEStep {
  std::vector<double> lse;  // per-row log mixture density
  double loglik = 0.0;
};

inline MixtureEStep mixture_estep(const std::vector<double>& weights,
                                  const std::vector<std::vector<double>>& ld,
                                  const Dataset& data) {
  std::size_t n = data.n, kk = weights.size();
  std::vector<double> logw(kk, -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < kk; ++k)
    if (weights[k] > 0.0) logw[k] = std::log(weights[k]);
  MixtureEStep e;
  e.lse.resize(n);
  std::vector<double> buf;
  for (std::size_t i = 0; i < n; ++i) {
    buf.clear();
    for (std::size_t k = 0; k < kk; ++k)
      if (weights[k] > 0.0) buf.push_back(logw[k] + ld[k][i]);
    e.lse[i] = logsumexp(buf);
  }
  e.loglik = deterministic_sum(
      n, [&](std::size_t i) { return data.weight(i) * e.lse[i]; });
  return e;
}

struct ComponentRefit {
  CbmdParams params;
  double q_value = 0.0;  // responsibility-weighted log density under params
};

// weighted single-component M-step; candidates are the unchanged component,
// a warm restart of the binding refinement, and optionally a fresh
// correlation-seeded fit, scored on the same responsibilities
inline ComponentRefit refit_component(const Dataset& data,
                                      const std::vector<double>& resp,
                                      FamilyChoice fam, const CbmdParams* warm,
                                      bool try_fresh,
                                      const BoxOptimOptions& opt) {
  Dataset wd;
  wd.n = data.n;
  wd.d = data.d;
  wd.values = data.values;
  wd.weights = resp;

  ComponentRefit best;
  bool have = false;
  auto consider = [&](CbmdParams p) {
    double q = cbmd_loglik(p, wd);
    if (!have || q > best.q_value) {
      best.params = std::move(p);
      best.q_value = q;
      have = true;
    }
  };
  if (warm != nullptr) consider(*warm);

  MarginalStage st = fit_marginals_and_transform(wd, fam.marginal);
  if (fam.binding == BindingFamily::uniform) {
    CbmdParams p;
    p.marginals = st.marginals;
    p.circula = CirculaParams::uniform(wd.d);
    consider(std::move(p));
    return best;
  }

  CirculaObjective obj(st.u, fam.binding);
  auto refined = [&](std::vector<int> q, std::vector<double> rho_init) {
    BindingRefineResult ref =
        refine_binding(obj, fam.binding, q, std::move(rho_init), opt);
    CbmdParams p;
    p.marginals = st.marginals;
    p.circula = make_binding(fam.binding, ref.rho, std::move(q));
    canonicalize_q(p.circula);
    consider(std::move(p));
  };

  if (warm != nullptr && warm->circula.family == fam.binding) {
    std::size_t d = wd.d;
    std::vector<int> q = warm->circula.q;
    std::vector<double> rho(d);
    for (std::size_t j = 0; j < d; ++j) {
      double r = fam.binding == BindingFamily::von_mises
                     ? mean_resultant_ratio(warm->circula.conc[j])
                     : warm->circula.conc[j];
      rho[j] = std::clamp(r, binding_rho_lo, binding_rho_hi);
    }
    refined(std::move(q), std::move(rho));
  }

  if (try_fresh || warm == nullptr) {
    std::size_t d = wd.d;
    std::vector<int> q(d, 1);
    std::vector<double> rho(d, binding_rho_lo);
    bool usable = false;
    try {
      Eigen::MatrixXd r = js_correlation_matrix(wd);
      Rank1Result rk = rank1_factor_approx(r);
      if (!rk.degenerate && rk.w.lpNorm<Eigen::Infinity>() > 0.0) {
        for (std::size_t j = 0; j < d; ++j) {
          double wj = rk.w[static_cast<Eigen::Index>(j)];
          q[j] = wj < 0.0 ? -1 : 1;
          rho[j] = std::clamp(std::fabs(wj), binding_rho_lo, binding_rho_hi);
        }
        usable = true;
      }
    } catch (const data_error&) {
    }
    if (usable) {
      refined(std::move(q), std::move(rho));
    } else {
      CbmdParams p;
      p.marginals = st.marginals;
      p.circula = make_binding(fam.binding, rho, q);
      consider(std::move(p));
    }
  }
  return best;
}

}  // namespace detail

// classical EM with the component M-step guarded to never lower the expected
// complete-data term, which keeps the observed log-likelihood monotone
inline MixtureModel em_fit(const MixtureModel& init, const Dataset& data,
                           const MmlConfig& config) {
  init.validate();
  data.validate();
  if (init.dim() != data.d) throw data_error("em_fit: dim mismatch");

  MixtureModel m = init;
  std::size_t kk = m.size();
  std::vector<std::vector<double>> ld(kk);
  for (std::size_t k = 0; k < kk; ++k)
    detail::fill_logdens_column(m.components[k], data, ld[k]);

  double wtot = deterministic_sum(
      data.n, [&](std::size_t i) { return data.weight(i); });
  double prev_ll = -std::numeric_limits<double>::infinity();
  m.fit_meta = MixtureFitMeta{};
  m.fit_meta.converged = false;

  std::vector<double> resp(data.n);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(config.max_iter, 1);
       ++iter) {
    detail::MixtureEStep e = detail::mixture_estep(m.weights, ld, data);
    m.fit_meta.loglik = e.loglik;
    if (iter > 0 &&
        std::fabs(e.loglik - prev_ll) <= config.tol * (std::fabs(prev_ll) + 1.0)) {
      m.fit_meta.converged = true;
      break;
    }
    prev_ll = e.loglik;

    std::vector<double> new_w(kk, 0.0);
    for (std::size_t k = 0; k < kk; ++k) {
      if (!(m.weights[k] > 0.0)) continue;
      double logw = std::log(m.weights[k]);
      for (std::size_t i = 0; i < data.n; ++i)
        resp[i] = data.weight(i) * std::exp(logw + ld[k][i] - e.lse[i]);
      double sk = deterministic_sum(resp);
      new_w[k] = sk / wtot;
      if (sk < 1.0) {
        m.fit_meta.frozen_components += 1;
        continue;
      }
      detail::ComponentRefit rf = detail::refit_component(
          data, resp, config.families, &m.components[k], iter == 0,
          config.optim);
      m.components[k] = std::move(rf.params);
      detail::fill_logdens_column(m.components[k], data, ld[k]);
    }
    m.weights = std::move(new_w);
  }

  detail::MixtureEStep e = detail::mixture_estep(m.weights, ld, data);
  m.fit_meta.loglik = e.loglik;
  MessageLength ml =
      detail::message_length_from_loglik(m, wtot, e.loglik);
  m.fit_meta.message_length_bits = ml.total_bits;
  m.fit_meta.model_length_bits = ml.model_bits;
  m.fit_meta.data_length_bits = ml.data_bits;
  m.fit_meta.K_nz = 0;
  for (double w : m.weights)
    if (w > 0.0) m.fit_meta.K_nz += 1;
  return m;
}

// two-part code length in bits: parameter cost per nonzero component plus the
// negative data log-likelihood, the resolution constant omitted
inline MessageLength message_length(const MixtureModel& model,
                                    const Dataset& data) {
  model.validate();
  data.validate();
  if (model.dim() != data.d) throw data_error("message_length: dim mismatch");
  std::vector<std::vector<double>> ld(model.size());
  for (std::size_t k = 0; k < model.size(); ++k) {
    if (model.weights[k] > 0.0)
      detail::fill_logdens_column(model.components[k], data, ld[k]);
    else
      ld[k].assign(data.n, -std::numeric_limits<double>::infinity());
  }
  detail::MixtureEStep e = detail::mixture_estep(model.weights, ld, data);
  double wtot = deterministic_sum(
      data.n, [&](std::size_t i) { return data.weight(i); });
  return detail::message_length_from_loglik(model, wtot, e.loglik);
}

// EM with the message-length weight update and component annihilation; after
// convergence at each model order the weakest component is removed and EM is
// re-run, and the shortest visited model wins
inline MixtureModel mml_em_fit(const Dataset& data, const MmlConfig& config,
                               RandomSource& rng) {
  data.validate();
  if (config.k_min < 1 || config.k_min > config.k_max)
    throw data_error("mml_em_fit: need 1 <= k_min <= k_max");
  if (config.k_max > data.n / (10 * data.d))
    throw data_error("mml_em_fit: k_max exceeds n / (10 d)");
  if (!(config.batch_fraction > 0.0) || config.batch_fraction > 1.0)
    throw data_error("mml_em_fit: batch_fraction must be in (0, 1]");

  KmeansResult part = toroidal_kmeanspp(data, config.k_max, rng);
  EstimateOptions eopt;
  eopt.optim = config.optim;
  MixtureModel m = init_mixture_from_partition(data, part.labels, config.k_max,
                                               config.families, eopt);
  std::size_t indep_inits = m.fit_meta.independence_inits;

  double wtot = deterministic_sum(
      data.n, [&](std::size_t i) { return data.weight(i); });
  bool batch_mode = config.batch_fraction < 1.0;
  std::size_t batch_n = batch_mode
      ? std::max<std::size_t>(
            10 * data.d,
            static_cast<std::size_t>(std::llround(
                config.batch_fraction * static_cast<double>(data.n))))
      : data.n;
  batch_n = std::min(batch_n, data.n);
  std::vector<std::size_t> shuffle(data.n);

  MixtureModel best;
  double best_bits = std::numeric_limits<double>::infinity();
  bool have_best = false;
  bool all_converged = true;

  auto n_params = [&](std::size_t k) {
    if (config.n_per_component > 0)
      return static_cast<double>(config.n_per_component);
    return static_cast<double>(
        detail::component_param_count(m.components[k]));
  };
  auto active_count = [&]() {
    std::size_t c = 0;
    for (double w : m.weights)
      if (w > 0.0) ++c;
    return c;
  };
  auto drop_zero_components = [&]() {
    std::size_t keep = 0;
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (!(m.weights[k] > 0.0)) continue;
      if (keep != k) {
        m.weights[keep] = m.weights[k];
        m.components[keep] = std::move(m.components[k]);
      }
      ++keep;
    }
    m.weights.resize(keep);
    m.components.resize(keep);
  };

  for (;;) {
    // one EM run at the current model order
    bool run_converged = false;
    double prev_bits = std::numeric_limits<double>::infinity();
    double run_loglik = 0.0;
    Dataset batch;
    std::vector<std::vector<double>> ld;
    std::vector<double> resp;

    for (std::size_t sweep = 0; sweep < std::max<std::size_t>(config.max_iter, 1);
         ++sweep) {
      if (sweep == 0 || batch_mode) {
        if (batch_mode) {
          std::iota(shuffle.begin(), shuffle.end(), std::size_t{0});
          for (std::size_t i = 0; i < batch_n; ++i) {
            std::size_t j = i + rng.next_below(data.n - i);
            std::swap(shuffle[i], shuffle[j]);
          }
          std::vector<std::size_t> rows(shuffle.begin(),
                                        shuffle.begin() +
                                            static_cast<std::ptrdiff_t>(batch_n));
          std::sort(rows.begin(), rows.end());
          batch = detail::subset_dataset(data, rows);
        } else {
          batch = data;
        }
        ld.assign(m.size(), {});
        for (std::size_t k = 0; k < m.size(); ++k)
          if (m.weights[k] > 0.0)
            detail::fill_logdens_column(m.components[k], batch, ld[k]);
        resp.resize(batch.n);
      }

      std::vector<std::size_t> order;
      for (std::size_t k = 0; k < m.size(); ++k)
        if (m.weights[k] > 0.0) order.push_back(k);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return m.weights[a] > m.weights[b];
      });

      for (std::size_t k : order) {
        if (!(m.weights[k] > 0.0)) continue;
        detail::MixtureEStep e = detail::mixture_estep(m.weights, ld, batch);
        // responsibility mass of every live component, for the joint
        // annihilating weight update
        std::vector<double> raw(m.size(), 0.0);
        double raw_total = 0.0;
        std::vector<double> resp_k;
        for (std::size_t j = 0; j < m.size(); ++j) {
          if (!(m.weights[j] > 0.0)) continue;
          double logw = std::log(m.weights[j]);
          for (std::size_t i = 0; i < batch.n; ++i)
            resp[i] = batch.weight(i) * std::exp(logw + ld[j][i] - e.lse[i]);
          double sj = deterministic_sum(resp);
          if (batch_mode) sj /= config.batch_fraction;
          raw[j] = std::max(0.0, sj - 0.5 * n_params(j));
          raw_total += raw[j];
          if (j == k) resp_k = resp;
        }
        if (!(raw_total > 0.0))
          throw data_error("mml_em_fit: all components annihilated");
        for (std::size_t j = 0; j < m.size(); ++j)
          if (m.weights[j] > 0.0) m.weights[j] = raw[j] / raw_total;
        if (!(m.weights[k] > 0.0)) continue;  // annihilated, no refit
        detail::ComponentRefit rf = detail::refit_component(
            batch, resp_k, config.families, &m.components[k], sweep == 0,
            config.optim);
        m.components[k] = std::move(rf.params);
        detail::fill_logdens_column(m.components[k], batch, ld[k]);
      }

      detail::MixtureEStep e = detail::mixture_estep(m.weights, ld, batch);
      run_loglik = batch_mode ? e.loglik / config.batch_fraction : e.loglik;
      MessageLength ml =
          detail::message_length_from_loglik(m, wtot, run_loglik);
      if (sweep > 0 &&
          std::fabs(ml.total_bits - prev_bits) <=
              config.tol * (std::fabs(prev_bits) + 1.0)) {
        run_converged = true;
        break;
      }
      prev_bits = ml.total_bits;
    }
    all_converged = all_converged && run_converged;

    drop_zero_components();
    if (m.weights.empty())
      throw data_error("mml_em_fit: all components annihilated");
    {
      double s = deterministic_sum(m.weights);
      for (auto& w : m.weights) w /= s;
    }
    MessageLength ml =
        detail::message_length_from_loglik(m, wtot, run_loglik);
    if (!have_best || ml.total_bits < best_bits) {
      best = m;
      best_bits = ml.total_bits;
      best.fit_meta.message_length_bits = ml.total_bits;
      best.fit_meta.model_length_bits = ml.model_bits;
      best.fit_meta.data_length_bits = ml.data_bits;
      best.fit_meta.loglik = run_loglik;
      best.fit_meta.converged = run_converged;
      best.fit_meta.K_nz = ml.K_nz;
      have_best = true;
    }

    if (active_count() <= config.k_min) break;
    // forced annihilation: drop the weakest component and continue the search
    std::size_t weakest = 0;
    for (std::size_t k = 1; k < m.size(); ++k)
      if (m.weights[k] < m.weights[weakest]) weakest = k;
    m.weights[weakest] = 0.0;
    drop_zero_components();
    double s = deterministic_sum(m.weights);
    if (!(s > 0.0)) throw data_error("mml_em_fit: all components annihilated");
    for (auto& w : m.weights) w /= s;
  }

  best.fit_meta.independence_inits = indep_inits;
  best.fit_meta.converged = best.fit_meta.converged && all_converged;
  return best;
}

inline MixtureModel mml_em_fit(const Dataset& data, const MmlConfig& config) {
  RandomSource rng(config.seed);
  return mml_em_fit(data, config, rng);
}

inline Dataset mixture_sample(const MixtureModel& m, RandomSource& rng,
                              std::size_t n) {
  m.validate();
  std::size_t d = m.dim();
  std::vector<std::vector<MarginalTransform>> tr(m.size());
  for (std::size_t k = 0; k < m.size(); ++k)
    for (const auto& mg : m.components[k].marginals) tr[k].emplace_back(mg);
  std::vector<double> cum(m.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    acc += m.weights[k];
    cum[k] = acc;
  }
  Dataset out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double v = rng.uniform() * acc;
    std::size_t k = 0;
    while (k + 1 < m.size() && v >= cum[k]) ++k;
    AngleVector u = circula_sample(m.components[k].circula, rng);
    auto row = out.row(i);
    for (std::size_t j = 0; j < d; ++j)
      row[j] = tr[k][j].quantile(u[j] / two_pi);
  }
  return out;
}

}  // namespace cbmd
