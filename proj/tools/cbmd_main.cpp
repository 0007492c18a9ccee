#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "cbmd/io.hpp"
#include "cbmd/modes.hpp"

namespace {

std::string json_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x",
                        static_cast<unsigned>(static_cast<unsigned char>(ch)));
          out += buf;
        } else {
          out += ch;
        }
    }
  }
  return out;
}

void emit_error(const char* kind, const std::string& msg) {
  std::cerr << "{\"error\":\"" << kind << "\",\"message\":\""
            << json_escape(msg) << "\"}\n";
}

cbmd::FamilyChoice parse_families(const std::string& s) {
  cbmd::FamilyChoice f;
  auto dash = s.find('-');
  std::string m = s.substr(0, dash);
  std::string b = dash == std::string::npos ? "wc" : s.substr(dash + 1);
  f.marginal = m == "vm" ? cbmd::MarginalFamily::von_mises
                         : cbmd::MarginalFamily::wrapped_cauchy;
  if (b == "vm")
    f.binding = cbmd::BindingFamily::von_mises;
  else if (b == "wc")
    f.binding = cbmd::BindingFamily::wrapped_cauchy;
  else
    f.binding = cbmd::BindingFamily::uniform;
  return f;
}

const std::vector<std::string> family_names = {"vm-wc", "vm-vm", "wc-wc",
                                               "wc-vm", "vm-uniform",
                                               "wc-uniform"};

std::string fmt(double v) { return cbmd::detail::format_double(v); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"circula-based multivariate distributions on the flat torus"};
  app.require_subcommand(1);

  // fit
  struct {
    std::string data, out, families = "vm-wc";
    bool exhaustive = false;
    std::uint64_t seed = 0;
    std::size_t max_iter = 500;
    double tol = 1e-6;
  } fit;
  {
    auto* sub = app.add_subcommand("fit", "fit a single model to a dataset");
    sub->add_option("--data", fit.data, "input dataset file")->required();
    sub->add_option("--out", fit.out, "output model file")->required();
    sub->add_option("--families", fit.families, "marginal-binding pair")
        ->check(CLI::IsMember(family_names));
    sub->add_flag("--exhaustive", fit.exhaustive,
                  "search every sign configuration");
    sub->add_option("--seed", fit.seed, "seed recorded in the model file");
    sub->add_option("--max-iter", fit.max_iter, "optimizer iteration cap");
    sub->add_option("--tol", fit.tol, "optimizer gradient tolerance");
    sub->callback([&] {
      cbmd::Dataset ds = cbmd::load_dataset(fit.data);
      cbmd::EstimateOptions eo;
      eo.optim.max_iter = fit.max_iter;
      eo.optim.grad_tol = fit.tol;
      cbmd::FamilyChoice fam = parse_families(fit.families);
      cbmd::EstimateResult r =
          fit.exhaustive ? cbmd::estimate_cbmd_exhaustive(ds, fam, eo)
                         : cbmd::estimate_cbmd(ds, fam, eo);
      cbmd::MixtureModel m;
      m.weights = {1.0};
      m.components = {r.params};
      cbmd::MessageLength ml = cbmd::message_length(m, ds);
      m.fit_meta.loglik = r.loglik;
      m.fit_meta.K_nz = 1;
      m.fit_meta.converged = r.converged;
      m.fit_meta.message_length_bits = ml.total_bits;
      m.fit_meta.model_length_bits = ml.model_bits;
      m.fit_meta.data_length_bits = ml.data_bits;
      cbmd::save_model(fit.out, m, fit.seed);
      std::cout << "loglik," << fmt(r.loglik) << "\n"
                << "circula_loglik," << fmt(r.circula_loglik) << "\n"
                << "converged," << (r.converged ? 1 : 0) << "\n"
                << "degenerate_dependence," << (r.degenerate_dependence ? 1 : 0)
                << "\n"
                << "message_length_bits," << fmt(ml.total_bits) << "\n"
                << "model," << fit.out << "\n";
    });
  }

  // fit-mixture
  struct {
    std::string data, out, families = "vm-wc";
    std::size_t k_max = 1, k_min = 1, max_iter = 200;
    double batch_fraction = 1.0, tol = 1e-6;
    std::uint64_t seed = 0;
  } fmx;
  {
    auto* sub = app.add_subcommand(
        "fit-mixture", "message-length mixture fit with annihilation");
    sub->add_option("--data", fmx.data, "input dataset file")->required();
    sub->add_option("--out", fmx.out, "output model file")->required();
    sub->add_option("--k-max", fmx.k_max, "initial component count")
        ->required();
    sub->add_option("--k-min", fmx.k_min, "smallest model order to visit");
    sub->add_option("--families", fmx.families, "marginal-binding pair")
        ->check(CLI::IsMember(family_names));
    sub->add_option("--batch-fraction", fmx.batch_fraction,
                    "per-sweep data fraction in (0,1]");
    sub->add_option("--seed", fmx.seed, "random seed");
    sub->add_option("--max-iter", fmx.max_iter, "EM sweep cap per model order");
    sub->add_option("--tol", fmx.tol, "relative message-length tolerance");
    sub->callback([&] {
      cbmd::Dataset ds = cbmd::load_dataset(fmx.data);
      cbmd::MmlConfig cfg;
      cfg.k_min = fmx.k_min;
      cfg.k_max = fmx.k_max;
      cfg.batch_fraction = fmx.batch_fraction;
      cfg.max_iter = fmx.max_iter;
      cfg.tol = fmx.tol;
      cfg.seed = fmx.seed;
      cfg.families = parse_families(fmx.families);
      cbmd::MixtureModel m = cbmd::mml_em_fit(ds, cfg);
      cbmd::save_model(fmx.out, m, fmx.seed);
      std::cout << "K_nz," << m.fit_meta.K_nz << "\n"
                << "message_length_bits," << fmt(m.fit_meta.message_length_bits)
                << "\n"
                << "model_length_bits," << fmt(m.fit_meta.model_length_bits)
                << "\n"
                << "data_length_bits," << fmt(m.fit_meta.data_length_bits)
                << "\n"
                << "loglik," << fmt(m.fit_meta.loglik) << "\n"
                << "converged," << (m.fit_meta.converged ? 1 : 0) << "\n"
                << "model," << fmx.out << "\n";
    });
  }

  // logpdf
  struct {
    std::string model, data, out;
  } lp;
  {
    auto* sub =
        app.add_subcommand("logpdf", "per-row log densities under a model");
    sub->add_option("--model", lp.model, "model file")->required();
    sub->add_option("--data", lp.data, "dataset file")->required();
    sub->add_option("--out", lp.out, "write per-row values to this CSV");
    sub->callback([&] {
      cbmd::MixtureModel m = cbmd::load_model(lp.model);
      cbmd::Dataset ds =
          cbmd::load_dataset(lp.data, {.expect_dim = m.dim()});
      std::vector<cbmd::CbmdEvaluator> evs;
      evs.reserve(m.size());
      for (const auto& c : m.components) evs.emplace_back(c);
      std::vector<double> logw(m.size()), rowvals(ds.n), buf;
      for (std::size_t k = 0; k < m.size(); ++k)
        logw[k] = m.weights[k] > 0.0
                      ? std::log(m.weights[k])
                      : -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < ds.n; ++i) {
        buf.clear();
        for (std::size_t k = 0; k < m.size(); ++k)
          if (m.weights[k] > 0.0)
            buf.push_back(logw[k] + evs[k].logpdf(ds.row(i)));
        rowvals[i] = cbmd::logsumexp(buf);
      }
      double total = cbmd::deterministic_sum(
          ds.n, [&](std::size_t i) { return ds.weight(i) * rowvals[i]; });
      if (!lp.out.empty()) {
        std::ostringstream csv;
        csv << "row,logpdf\n";
        for (std::size_t i = 0; i < ds.n; ++i)
          csv << i << "," << fmt(rowvals[i]) << "\n";
        cbmd::detail::write_file_atomic(lp.out, csv.str());
      } else {
        for (std::size_t i = 0; i < ds.n; ++i)
          std::cout << i << "," << fmt(rowvals[i]) << "\n";
      }
      std::cout << "rows," << ds.n << "\n"
                << "total," << fmt(total) << "\n";
    });
  }

  // sample
  struct {
    std::string model, out;
    std::size_t n = 0;
    std::uint64_t seed = 0;
  } smp;
  {
    auto* sub = app.add_subcommand("sample", "draw samples from a model");
    sub->add_option("--model", smp.model, "model file")->required();
    sub->add_option("--out", smp.out, "output dataset file")->required();
    sub->add_option("--n", smp.n, "number of samples")->required();
    sub->add_option("--seed", smp.seed, "random seed");
    sub->callback([&] {
      cbmd::MixtureModel m = cbmd::load_model(smp.model);
      cbmd::RandomSource rng(smp.seed);
      cbmd::Dataset ds = cbmd::mixture_sample(m, rng, smp.n);
      cbmd::save_dataset(smp.out, ds);
      std::cout << "rows," << ds.n << "\n"
                << "out," << smp.out << "\n";
    });
  }

  // grid
  struct {
    std::string model, out, dims = "0,1";
    std::size_t resolution = 128;
  } grd;
  {
    auto* sub = app.add_subcommand(
        "grid", "density values of a two-coordinate marginal on a grid");
    sub->add_option("--model", grd.model, "model file")->required();
    sub->add_option("--out", grd.out, "output CSV file")->required();
    sub->add_option("--dims", grd.dims, "coordinate pair, e.g. 0,2");
    sub->add_option("--resolution", grd.resolution, "cells per axis");
    sub->callback([&] {
      auto comma = grd.dims.find(',');
      if (comma == std::string::npos)
        throw CLI::ValidationError("--dims", "expected two indices like 0,1");
      std::size_t i = 0, j = 0;
      try {
        i = std::stoul(grd.dims.substr(0, comma));
        j = std::stoul(grd.dims.substr(comma + 1));
      } catch (const std::exception&) {
        throw CLI::ValidationError("--dims", "expected two indices like 0,1");
      }
      cbmd::MixtureModel m = cbmd::load_model(grd.model);
      cbmd::save_grid_csv(grd.out, m, i, j, grd.resolution);
      std::cout << "out," << grd.out << "\n";
    });
  }

  // modes
  struct {
    std::string model;
    std::size_t grid = 64;
    int component = -1;
  } mds;
  {
    auto* sub =
        app.add_subcommand("modes", "critical-point tally of a model density");
    sub->add_option("--model", mds.model, "model file")->required();
    sub->add_option("--grid", mds.grid, "grid resolution per axis");
    sub->add_option("--component", mds.component,
                    "component index for mixtures");
    sub->callback([&] {
      cbmd::MixtureModel m = cbmd::load_model(mds.model);
      std::size_t k = 0;
      if (mds.component >= 0)
        k = static_cast<std::size_t>(mds.component);
      else if (m.size() != 1)
        throw CLI::ValidationError("--component",
                                   "required for a multi-component model");
      if (k >= m.size())
        throw CLI::ValidationError("--component", "index out of range");
      cbmd::ModesReport rep = cbmd::count_modes(m.components[k], mds.grid);
      std::cout << "modes," << rep.mode_count << "\n"
                << "plateau," << (rep.plateau ? 1 : 0) << "\n"
                << "euler_sum," << rep.euler_sum << "\n";
      for (std::size_t i = 0; i < rep.index_counts.size(); ++i)
        std::cout << "index_" << i << "," << rep.index_counts[i] << "\n";
      for (const auto& cp : rep.points) {
        std::cout << "critical_point," << cp.index << "," << fmt(cp.logpdf);
        for (double th : cp.location) std::cout << "," << fmt(th);
        std::cout << "\n";
      }
    });
  }

  // bench-rank1
  struct {
    std::size_t dim = 3, n = 1000, repeats = 100;
    double eta = 1.0, var_lo = 0.0, var_hi = cbmd::pi / 2.0;
    std::uint64_t seed = 0;
    std::string out_csv, out_json;
  } bch;
  {
    auto* sub = app.add_subcommand(
        "bench-rank1", "compare sign-search estimators on synthetic repeats");
    sub->add_option("--dim", bch.dim, "dimension");
    sub->add_option("--n", bch.n, "samples per repeat");
    sub->add_option("--repeats", bch.repeats, "number of repeats");
    sub->add_option("--eta", bch.eta, "LKJ concentration");
    sub->add_option("--variance-lo", bch.var_lo, "variance lower bound");
    sub->add_option("--variance-hi", bch.var_hi, "variance upper bound");
    sub->add_option("--seed", bch.seed, "random seed");
    sub->add_option("--out-csv", bch.out_csv, "per-repeat records CSV");
    sub->add_option("--out-json", bch.out_json, "summary JSON");
    sub->callback([&] {
      cbmd::SynthSpec spec;
      spec.dim = bch.dim;
      spec.n_samples = bch.n;
      spec.n_repeats = bch.repeats;
      spec.eta = bch.eta;
      spec.variance_lo = bch.var_lo;
      spec.variance_hi = bch.var_hi;
      spec.seed = bch.seed;
      cbmd::BenchReport rep = cbmd::run_rank1_benchmark(spec);
      if (!bch.out_csv.empty()) cbmd::save_bench_csv(bch.out_csv, rep);
      if (!bch.out_json.empty()) cbmd::save_bench_json(bch.out_json, rep);
      std::cout << "repeats_completed," << rep.repeats_completed << "\n"
                << "repeats_failed," << rep.repeats_failed << "\n"
                << "mean_loglik_independent,"
                << fmt(rep.mean_loglik_independent) << "\n"
                << "mean_loglik_heuristic," << fmt(rep.mean_loglik_heuristic)
                << "\n"
                << "mean_loglik_exhaustive," << fmt(rep.mean_loglik_exhaustive)
                << "\n"
                << "mean_wall_independent," << fmt(rep.mean_wall_independent)
                << "\n"
                << "mean_wall_heuristic," << fmt(rep.mean_wall_heuristic)
                << "\n"
                << "mean_wall_exhaustive," << fmt(rep.mean_wall_exhaustive)
                << "\n";
    });
  }

  // synth
  struct {
    std::string out;
    std::size_t dim = 3, n = 1000;
    double eta = 1.0, var_lo = 0.0, var_hi = cbmd::pi / 2.0;
    std::uint64_t seed = 0;
  } syn;
  {
    auto* sub = app.add_subcommand(
        "synth", "generate one wrapped-normal synthetic dataset");
    sub->add_option("--out", syn.out, "output dataset file")->required();
    sub->add_option("--dim", syn.dim, "dimension");
    sub->add_option("--n", syn.n, "number of samples");
    sub->add_option("--eta", syn.eta, "LKJ concentration");
    sub->add_option("--variance-lo", syn.var_lo, "variance lower bound");
    sub->add_option("--variance-hi", syn.var_hi, "variance upper bound");
    sub->add_option("--seed", syn.seed, "random seed");
    sub->callback([&] {
      cbmd::SynthSpec spec;
      spec.dim = syn.dim;
      spec.n_samples = syn.n;
      spec.n_repeats = 1;
      spec.eta = syn.eta;
      spec.variance_lo = syn.var_lo;
      spec.variance_hi = syn.var_hi;
      spec.seed = syn.seed;
      spec.validate();
      cbmd::RandomSource rng(syn.seed);
      std::vector<double> mean(spec.dim), var(spec.dim);
      for (auto& v : mean) v = rng.uniform(0.0, cbmd::two_pi);
      for (auto& v : var)
        v = rng.uniform(spec.variance_lo, spec.variance_hi);
      Eigen::MatrixXd corr =
          cbmd::sample_lkj_correlation(spec.dim, spec.eta, rng);
      cbmd::Dataset ds =
          cbmd::wrapped_mvn_sample(mean, corr, var, spec.n_samples, rng);
      cbmd::save_dataset(syn.out, ds);
      std::cout << "rows," << ds.n << "\n"
                << "out," << syn.out << "\n";
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    emit_error("usage", e.what());
    return 1;
  } catch (const cbmd::data_error& e) {
    emit_error("data", e.what());
    return 2;
  } catch (const cbmd::numeric_error& e) {
    emit_error("numeric", e.what());
    return 3;
  } catch (const std::domain_error& e) {
    emit_error("data", e.what());
    return 2;
  } catch (const std::exception& e) {
    emit_error("data", e.what());
    return 2;
  }
  return 0;
}
