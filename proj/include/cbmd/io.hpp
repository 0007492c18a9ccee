#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cbmd/mixture.hpp"
#include "cbmd/synth.hpp"

namespace cbmd {

inline constexpr int model_format_version = 1;
inline constexpr const char* tool_version = "cbmd 1.0.0";

namespace detail {

// shortest decimal text that round-trips the exact double
inline std::string format_double(double v) {
  if (!std::isfinite(v))
    throw numeric_error("serialize: non-finite value");
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_u64(std::uint64_t v) {
  char buf[24];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string loc(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

inline double parse_double(std::string_view s, const std::string& path,
                           std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw data_error(loc(path, line) + "not a number: '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_u64(std::string_view s, const std::string& path,
                               std::size_t line) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw data_error(loc(path, line) + "not an integer: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.emplace_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void write_file_atomic(const std::string& path,
                              const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp(path + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot open file for writing: " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw data_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw data_error("atomic rename failed: " + path);
  }
}

inline const char* marginal_family_tag(MarginalFamily f) {
  switch (f) {
    case MarginalFamily::von_mises: return "von_mises";
    case MarginalFamily::wrapped_cauchy: return "wrapped_cauchy";
    case MarginalFamily::uniform: return "uniform";
  }
  return "uniform";
}

inline const char* binding_family_tag(BindingFamily f) {
  switch (f) {
    case BindingFamily::von_mises: return "von_mises";
    case BindingFamily::wrapped_cauchy: return "wrapped_cauchy";
    case BindingFamily::uniform: return "uniform";
  }
  return "uniform";
}

inline MarginalFamily parse_marginal_family(const std::string& s,
                                            const std::string& path,
                                            std::size_t line) {
  if (s == "von_mises") return MarginalFamily::von_mises;
  if (s == "wrapped_cauchy") return MarginalFamily::wrapped_cauchy;
  if (s == "uniform") return MarginalFamily::uniform;
  throw data_error(loc(path, line) + "unknown marginal family '" + s + "'");
}

inline BindingFamily parse_binding_family(const std::string& s,
                                          const std::string& path,
                                          std::size_t line) {
  if (s == "von_mises") return BindingFamily::von_mises;
  if (s == "wrapped_cauchy") return BindingFamily::wrapped_cauchy;
  if (s == "uniform") return BindingFamily::uniform;
  throw data_error(loc(path, line) + "unknown binding family '" + s + "'");
}

}  // namespace detail

struct DatasetReadOptions {
  std::size_t expect_dim = 0;  // 0 = accept any
};

// delimited angle data: a unit header, a column header with an optional
// trailing weight column, then one observation per line
inline Dataset load_dataset(const std::string& path,
                            const DatasetReadOptions& opt = {}) {
  std::vector<std::string> lines = detail::read_lines(path);
  if (lines.size() < 2)
    throw data_error(path + ": dataset needs unit and column header lines");

  auto unit = detail::split_fields(lines[0]);
  if (unit.size() != 2 || unit[0] != "unit" ||
      (unit[1] != "radians" && unit[1] != "degrees"))
    throw data_error(detail::loc(path, 1) +
                     "expected 'unit,radians' or 'unit,degrees'");
  bool degrees = unit[1] == "degrees";

  auto cols = detail::split_fields(lines[1]);
  if (cols.size() < 2 || cols[0] != "columns")
    throw data_error(detail::loc(path, 2) + "expected 'columns,<names...>'");
  bool has_weight = cols.back() == "weight";
  std::size_t d = cols.size() - 1 - (has_weight ? 1 : 0);
  if (d == 0)
    throw data_error(detail::loc(path, 2) + "no angle columns declared");
  if (opt.expect_dim != 0 && d != opt.expect_dim)
    throw data_error(path + ": expected " + std::to_string(opt.expect_dim) +
                     " angle columns, file declares " + std::to_string(d));

  Dataset data;
  data.d = d;
  std::size_t expect_fields = d + (has_weight ? 1 : 0);
  for (std::size_t li = 2; li < lines.size(); ++li) {
    if (lines[li].empty() && li + 1 == lines.size()) break;
    auto f = detail::split_fields(lines[li]);
    if (f.size() != expect_fields)
      throw data_error(detail::loc(path, li + 1) + "expected " +
                       std::to_string(expect_fields) + " fields, got " +
                       std::to_string(f.size()));
    for (std::size_t j = 0; j < d; ++j) {
      double v = detail::parse_double(f[j], path, li + 1);
      if (!std::isfinite(v))
        throw data_error(detail::loc(path, li + 1) + "non-finite angle");
      if (degrees) v *= pi / 180.0;
      data.values.push_back(normalize_angle(v));
    }
    if (has_weight) {
      double w = detail::parse_double(f[d], path, li + 1);
      if (!std::isfinite(w) || w < 0.0)
        throw data_error(detail::loc(path, li + 1) + "invalid weight");
      data.weights.push_back(w);
    }
    data.n += 1;
  }
  data.validate();
  return data;
}

inline void save_dataset(const std::string& path, const Dataset& data) {
  data.validate();
  std::ostringstream out;
  out << "unit,radians\n";
  out << "columns";
  for (std::size_t j = 0; j < data.d; ++j) out << ",theta_" << j;
  if (!data.weights.empty()) out << ",weight";
  out << "\n";
  for (std::size_t i = 0; i < data.n; ++i) {
    for (std::size_t j = 0; j < data.d; ++j) {
      if (j) out << ",";
      out << detail::format_double(data.values[i * data.d + j]);
    }
    if (!data.weights.empty())
      out << "," << detail::format_double(data.weights[i]);
    out << "\n";
  }
  detail::write_file_atomic(path, out.str());
}

struct ModelFile {
  MixtureModel model;
  std::uint64_t seed = 0;
  std::string version = tool_version;
};

inline void save_model(const std::string& path, const ModelFile& mf) {
  mf.model.validate();
  const MixtureModel& m = mf.model;
  std::size_t d = m.dim();
  std::ostringstream out;
  out << "cbmd_model," << model_format_version << "\n";
  out << "dim," << d << "\n";
  out << "components," << m.size() << "\n";
  for (std::size_t k = 0; k < m.size(); ++k) {
    out << "component," << k << "," << detail::format_double(m.weights[k])
        << "\n";
    for (std::size_t j = 0; j < d; ++j) {
      const auto& mg = m.components[k].marginals[j];
      out << "marginal," << k << "," << j << ","
          << detail::marginal_family_tag(mg.family) << ","
          << detail::format_double(mg.mu) << ","
          << detail::format_double(mg.conc) << "\n";
    }
    const auto& c = m.components[k].circula;
    out << "binding," << k << "," << detail::binding_family_tag(c.family);
    for (int s : c.q) out << "," << s;
    out << "\n";
    if (c.family != BindingFamily::uniform) {
      out << "binding_conc," << k;
      for (double v : c.conc) out << "," << detail::format_double(v);
      out << "\n";
    }
  }
  out << "message_length_bits,"
      << detail::format_double(m.fit_meta.message_length_bits) << "\n";
  out << "seed," << detail::format_u64(mf.seed) << "\n";
  out << "tool_version," << mf.version << "\n";
  out << "end\n";
  detail::write_file_atomic(path, out.str());
}

inline void save_model(const std::string& path, const MixtureModel& m,
                       std::uint64_t seed = 0) {
  save_model(path, ModelFile{m, seed, tool_version});
}

inline ModelFile load_model_file(const std::string& path) {
  std::vector<std::string> lines = detail::read_lines(path);
  if (lines.empty()) throw data_error(path + ": empty model file");
  auto head = detail::split_fields(lines[0]);
  if (head.size() != 2 || head[0] != "cbmd_model")
    throw data_error(detail::loc(path, 1) + "missing 'cbmd_model' header");
  if (detail::parse_u64(head[1], path, 1) !=
      static_cast<std::uint64_t>(model_format_version))
    throw data_error(detail::loc(path, 1) +
                     "unsupported model format version " + head[1]);

  std::size_t d = 0, kk = 0;
  bool have_dim = false, have_k = false, seen_end = false;
  ModelFile mf;
  struct PendingComponent {
    bool present = false;
    double weight = 0.0;
    std::vector<bool> marginal_set;
    std::vector<UnivariateCircular> marginals;
    bool binding_set = false;
    BindingFamily binding = BindingFamily::uniform;
    std::vector<int> q;
    bool conc_set = false;
    std::vector<double> conc;
  };
  std::vector<PendingComponent> comp;

  for (std::size_t li = 1; li < lines.size(); ++li) {
    std::size_t ln = li + 1;
    if (lines[li].empty() && li + 1 == lines.size()) break;
    if (seen_end)
      throw data_error(detail::loc(path, ln) + "content after 'end'");
    auto f = detail::split_fields(lines[li]);
    const std::string& key = f[0];
    auto need = [&](std::size_t n) {
      if (f.size() != n)
        throw data_error(detail::loc(path, ln) + "field '" + key + "' needs " +
                         std::to_string(n - 1) + " values");
    };
    auto comp_at = [&](std::string_view s) -> PendingComponent& {
      std::size_t k = detail::parse_u64(std::string(s), path, ln);
      if (!have_k || k >= kk)
        throw data_error(detail::loc(path, ln) + "component index out of range");
      return comp[k];
    };

    if (key == "dim") {
      need(2);
      d = detail::parse_u64(f[1], path, ln);
      if (d == 0 || d > circula_max_dim)
        throw data_error(detail::loc(path, ln) + "invalid dim");
      have_dim = true;
    } else if (key == "components") {
      need(2);
      if (!have_dim)
        throw data_error(detail::loc(path, ln) + "'components' before 'dim'");
      kk = detail::parse_u64(f[1], path, ln);
      if (kk == 0) throw data_error(detail::loc(path, ln) + "invalid components");
      comp.resize(kk);
      for (auto& c : comp) {
        c.marginal_set.assign(d, false);
        c.marginals.assign(d, UnivariateCircular::uniform());
      }
      have_k = true;
    } else if (key == "component") {
      need(3);
      PendingComponent& c = comp_at(f[1]);
      c.present = true;
      c.weight = detail::parse_double(f[2], path, ln);
      if (!(c.weight >= 0.0))
        throw data_error(detail::loc(path, ln) + "field 'weight' must be >= 0");
    } else if (key == "marginal") {
      need(6);
      PendingComponent& c = comp_at(f[1]);
      std::size_t j = detail::parse_u64(f[2], path, ln);
      if (j >= d)
        throw data_error(detail::loc(path, ln) + "marginal index out of range");
      MarginalFamily fam = detail::parse_marginal_family(f[3], path, ln);
      double mu = detail::parse_double(f[4], path, ln);
      double conc = detail::parse_double(f[5], path, ln);
      try {
        switch (fam) {
          case MarginalFamily::von_mises:
            c.marginals[j] = UnivariateCircular::von_mises(mu, conc);
            break;
          case MarginalFamily::wrapped_cauchy:
            c.marginals[j] = UnivariateCircular::wrapped_cauchy(mu, conc);
            break;
          case MarginalFamily::uniform:
            c.marginals[j] = UnivariateCircular::uniform();
            break;
        }
      } catch (const std::domain_error& e) {
        throw data_error(detail::loc(path, ln) + "field 'marginal': " + e.what());
      }
      c.marginal_set[j] = true;
    } else if (key == "binding") {
      if (f.size() < 3)
        throw data_error(detail::loc(path, ln) + "field 'binding' too short");
      PendingComponent& c = comp_at(f[1]);
      c.binding = detail::parse_binding_family(f[2], path, ln);
      if (f.size() != 3 + d)
        throw data_error(detail::loc(path, ln) + "field 'binding' needs " +
                         std::to_string(d) + " signs");
      c.q.clear();
      for (std::size_t j = 0; j < d; ++j) {
        const std::string& s = f[3 + j];
        if (s == "1")
          c.q.push_back(1);
        else if (s == "-1")
          c.q.push_back(-1);
        else
          throw data_error(detail::loc(path, ln) + "field 'binding': sign '" +
                           s + "' is not 1 or -1");
      }
      c.binding_set = true;
    } else if (key == "binding_conc") {
      if (f.size() != 2 + d)
        throw data_error(detail::loc(path, ln) + "field 'binding_conc' needs " +
                         std::to_string(d) + " values");
      PendingComponent& c = comp_at(f[1]);
      c.conc.clear();
      for (std::size_t j = 0; j < d; ++j)
        c.conc.push_back(detail::parse_double(f[2 + j], path, ln));
      c.conc_set = true;
    } else if (key == "message_length_bits") {
      need(2);
      mf.model.fit_meta.message_length_bits =
          detail::parse_double(f[1], path, ln);
    } else if (key == "seed") {
      need(2);
      mf.seed = detail::parse_u64(f[1], path, ln);
    } else if (key == "tool_version") {
      need(2);
      mf.version = f[1];
    } else if (key == "end") {
      seen_end = true;
    } else {
      throw data_error(detail::loc(path, ln) + "unknown field '" + key + "'");
    }
  }
  if (!seen_end) throw data_error(path + ": missing 'end' line");
  if (!have_dim || !have_k)
    throw data_error(path + ": missing 'dim' or 'components'");

  for (std::size_t k = 0; k < kk; ++k) {
    const PendingComponent& c = comp[k];
    std::string where = path + ": component " + std::to_string(k) + ": ";
    if (!c.present) throw data_error(where + "missing 'component' line");
    for (std::size_t j = 0; j < d; ++j)
      if (!c.marginal_set[j])
        throw data_error(where + "missing 'marginal' line for coordinate " +
                         std::to_string(j));
    if (!c.binding_set) throw data_error(where + "missing 'binding' line");
    if (c.binding == BindingFamily::uniform) {
      if (c.conc_set)
        throw data_error(where + "field 'binding_conc' not allowed for uniform");
    } else if (!c.conc_set) {
      throw data_error(where + "missing 'binding_conc' line");
    }
    CbmdParams p;
    p.marginals = c.marginals;
    p.circula.family = c.binding;
    p.circula.q = c.q;
    if (c.binding != BindingFamily::uniform) p.circula.conc = c.conc;
    try {
      p.validate();
    } catch (const std::exception& e) {
      throw data_error(where + e.what());
    }
    mf.model.components.push_back(std::move(p));
    mf.model.weights.push_back(c.weight);
  }

  double s = deterministic_sum(mf.model.weights);
  if (std::fabs(s - 1.0) > 1e-9)
    throw data_error(path + ": field 'weight': components sum to " +
                     detail::format_double(s) + ", not 1");
  if (std::fabs(s - 1.0) > 1e-12)
    for (auto& w : mf.model.weights) w /= s;
  mf.model.fit_meta.K_nz = 0;
  for (double w : mf.model.weights)
    if (w > 0.0) mf.model.fit_meta.K_nz += 1;
  mf.model.validate();
  return mf;
}

inline MixtureModel load_model(const std::string& path) {
  return load_model_file(path).model;
}

inline void save_bench_csv(const std::string& path, const BenchReport& rep) {
  std::ostringstream out;
  out << "repeat,method,loglik,wall_seconds\n";
  for (const auto& r : rep.records)
    out << r.repeat << "," << r.method << ","
        << detail::format_double(r.loglik) << ","
        << detail::format_double(r.wall_seconds) << "\n";
  detail::write_file_atomic(path, out.str());
}

inline void save_bench_json(const std::string& path, const BenchReport& rep) {
  std::ostringstream out;
  out << "{\"dim\":" << rep.dim << ",\"n_samples\":" << rep.n_samples
      << ",\"n_repeats\":" << rep.n_repeats << ",\"seed\":" << rep.seed
      << ",\"repeats_completed\":" << rep.repeats_completed
      << ",\"repeats_failed\":" << rep.repeats_failed << ",\"mean_loglik\":{"
      << "\"independent_vm\":" << detail::format_double(rep.mean_loglik_independent)
      << ",\"heuristic\":" << detail::format_double(rep.mean_loglik_heuristic)
      << ",\"exhaustive\":" << detail::format_double(rep.mean_loglik_exhaustive)
      << "},\"mean_wall_seconds\":{"
      << "\"independent_vm\":" << detail::format_double(rep.mean_wall_independent)
      << ",\"heuristic\":" << detail::format_double(rep.mean_wall_heuristic)
      << ",\"exhaustive\":" << detail::format_double(rep.mean_wall_exhaustive)
      << "}}\n";
  detail::write_file_atomic(path, out.str());
}

// weighted two-coordinate marginal density of a mixture at the cell centers
// of a res x res midpoint grid, row-major in (i, j)
inline std::vector<double> mixture_grid2(const MixtureModel& m, std::size_t i,
                                         std::size_t j, std::size_t res) {
  m.validate();
  if (i >= m.dim() || j >= m.dim() || i == j)
    throw data_error("mixture_grid2: need two distinct coordinates in range");
  if (res < 2) throw data_error("mixture_grid2: resolution too small");
  std::vector<double> grid(res * res, 0.0);
  std::size_t idx[2] = {i, j};
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (!(m.weights[k] > 0.0)) continue;
    CbmdParams marg = cbmd_marginal(m.components[k], idx);
    std::vector<double> g = grid_density2(marg, res);
    for (std::size_t t = 0; t < grid.size(); ++t)
      grid[t] += m.weights[k] * g[t];
  }
  return grid;
}

inline void save_grid_csv(const std::string& path, const MixtureModel& m,
                          std::size_t i, std::size_t j, std::size_t res) {
  std::vector<double> grid = mixture_grid2(m, i, j, res);
  double h = two_pi / static_cast<double>(res);
  std::ostringstream out;
  out << "theta_" << i << ",theta_" << j << ",density\n";
  for (std::size_t a = 0; a < res; ++a) {
    double ta = (static_cast<double>(a) + 0.5) * h;
    for (std::size_t b = 0; b < res; ++b) {
      double tb = (static_cast<double>(b) + 0.5) * h;
      out << detail::format_double(ta) << "," << detail::format_double(tb)
          << "," << detail::format_double(grid[a * res + b]) << "\n";
    }
  }
  detail::write_file_atomic(path, out.str());
}

}  // namespace cbmd
