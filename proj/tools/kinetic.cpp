// Experiment harness: one JSON config = one experiment, artifacts written to
// an output directory (results.json, CSV curves, manifest.json). Exit codes:
// 0 success, 2 config or validation error, 3 numerical failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kinetic/coefficients.hpp"
#include "kinetic/dielectric.hpp"
#include "kinetic/distributions.hpp"
#include "kinetic/errors.hpp"
#include "kinetic/fluctuations.hpp"
#include "kinetic/forcefield.hpp"
#include "kinetic/io.hpp"
#include "kinetic/langevin.hpp"
#include "kinetic/parallel.hpp"
#include "kinetic/pointprocess.hpp"
#include "kinetic/potentials.hpp"
#include "kinetic/stats.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace kinetic;

namespace {

constexpr const char* kVersion = "0.1.0";

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path, what);
}

std::string join(const std::string& a, const std::string& b) {
  return a.empty() ? b : a + "." + b;
}

// True when `op` already names the config field at `path` (or below it), so
// re-wrapping would just repeat the prefix.
bool already_localized(const std::string& op, const std::string& path) {
  return op == path || op.rfind(path + ".", 0) == 0;
}

const ordered_json& need(const ordered_json& j, const std::string& path,
                         const std::string& key) {
  if (!j.is_object() || !j.contains(key)) fail(join(path, key), "missing field");
  return j.at(key);
}

double num(const ordered_json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

double num_at(const ordered_json& j, const std::string& path,
              const std::string& key) {
  return num(need(j, path, key), join(path, key));
}

double num_or(const ordered_json& j, const std::string& path,
              const std::string& key, double def) {
  if (!j.is_object() || !j.contains(key)) return def;
  return num(j.at(key), join(path, key));
}

std::int64_t int_or(const ordered_json& j, const std::string& path,
                    const std::string& key, std::int64_t def) {
  if (!j.is_object() || !j.contains(key)) return def;
  const ordered_json& v = j.at(key);
  if (!v.is_number_integer()) fail(join(path, key), "expected an integer");
  return v.get<std::int64_t>();
}

std::string str_at(const ordered_json& j, const std::string& path,
                   const std::string& key) {
  const ordered_json& v = need(j, path, key);
  if (!v.is_string()) fail(join(path, key), "expected a string");
  return v.get<std::string>();
}

std::string str_or(const ordered_json& j, const std::string& path,
                   const std::string& key, const std::string& def) {
  if (!j.is_object() || !j.contains(key)) return def;
  const ordered_json& v = j.at(key);
  if (!v.is_string()) fail(join(path, key), "expected a string");
  return v.get<std::string>();
}

Vec3 vec3_at(const ordered_json& j, const std::string& path,
             const std::string& key) {
  const ordered_json& v = need(j, path, key);
  std::string p = join(path, key);
  if (!v.is_array() || v.size() != 3) fail(p, "expected an array of 3 numbers");
  return Vec3(num(v[0], p + ".0"), num(v[1], p + ".1"), num(v[2], p + ".2"));
}

Vec3 vec3_or(const ordered_json& j, const std::string& path,
             const std::string& key, const Vec3& def) {
  if (!j.is_object() || !j.contains(key)) return def;
  return vec3_at(j, path, key);
}

std::vector<double> num_list_at(const ordered_json& j, const std::string& path,
                                const std::string& key) {
  const ordered_json& v = need(j, path, key);
  std::string p = join(path, key);
  if (!v.is_array() || v.empty()) fail(p, "expected a non-empty array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(num(v[i], p + "." + std::to_string(i)));
  return out;
}

// ---- spec parsers ------------------------------------------------------

VelocityDistribution parse_distribution(const ordered_json& j,
                                        const std::string& path) {
  std::string kind = str_at(j, path, "kind");
  try {
    if (kind == "maxwellian") {
      double density = num_at(j, path, "density");
      double temperature = num_at(j, path, "temperature");
      if (!(temperature > 0))
        fail(join(path, "temperature"), "must be positive");
      if (!(density > 0)) fail(join(path, "density"), "must be positive");
      return VelocityDistribution::maxwellian(
          density, vec3_or(j, path, "mean", Vec3::Zero()), temperature);
    }
    if (kind == "tabulated") {
      return VelocityDistribution::tabulated_from_file(
          str_at(j, path, "file"));
    }
  } catch (const Error& e) {
    if (already_localized(e.failing_op(), path)) throw;
    fail(path, e.what());
  }
  fail(join(path, "kind"), "unknown distribution kind '" + kind + "'");
}

RadialPotential parse_potential(const ordered_json& j, const std::string& path) {
  std::string kind = str_at(j, path, "kind");
  try {
    if (kind == "yukawa")
      return RadialPotential::yukawa(num_at(j, path, "amplitude"),
                                     num_at(j, path, "screening"),
                                     num_or(j, path, "core", 0.0));
    if (kind == "gaussian")
      return RadialPotential::gaussian(num_at(j, path, "amplitude"),
                                       num_at(j, path, "width"));
    if (kind == "coulomb")
      return RadialPotential::coulomb_reg(num_at(j, path, "amplitude"),
                                          num_or(j, path, "core", 1.0));
    if (kind == "tabulated") {
      std::string file = str_at(j, path, "file");
      std::ifstream is(file);
      if (!is) fail(join(path, "file"), "cannot open '" + file + "'");
      std::vector<double> s, phi;
      double a, b;
      while (is >> a >> b) {
        s.push_back(a);
        phi.push_back(b);
      }
      std::string decay = str_or(j, path, "decay", "fast");
      RadialPotential::Decay d;
      if (decay == "fast")
        d = RadialPotential::Decay::fast;
      else if (decay == "intermediate")
        d = RadialPotential::Decay::intermediate;
      else if (decay == "coulomb_like")
        d = RadialPotential::Decay::coulomb_like;
      else
        fail(join(path, "decay"), "unknown decay '" + decay + "'");
      return RadialPotential::tabulated(std::move(s), std::move(phi), d,
                                        num_or(j, path, "coulomb_amplitude", 0.0),
                                        num_or(j, path, "decay_exponent", 3.0));
    }
  } catch (const Error& e) {
    if (already_localized(e.failing_op(), path)) throw;
    fail(path, e.what());
  }
  fail(join(path, "kind"), "unknown potential kind '" + kind + "'");
}

ScaledPotential parse_scaled(const ordered_json& j, const std::string& path,
                             const RadialPotential& base) {
  std::string family = str_at(j, path, "family");
  double eps = num_at(j, path, "eps");
  try {
    if (family == "boltzmann") return ScaledPotential::boltzmann(base, eps);
    if (family == "landau")
      return ScaledPotential::landau(base, eps, num_at(j, path, "L"));
    if (family == "grazing")
      return ScaledPotential::grazing(base, eps, num_at(j, path, "ell"));
    if (family == "coulomb_short") return ScaledPotential::coulomb_short(base, eps);
    if (family == "coulomb_weak") return ScaledPotential::coulomb_weak(base, eps);
  } catch (const Error& e) {
    if (already_localized(e.failing_op(), path)) throw;
    fail(path, e.what());
  }
  fail(join(path, "family"), "unknown scaling family '" + family + "'");
}

SpeciesSet parse_species(const ordered_json& cfg, const std::string& path) {
  SpeciesSet set;
  if (cfg.contains("species")) {
    const ordered_json& arr = cfg.at("species");
    std::string p = join(path, "species");
    if (!arr.is_array() || arr.empty())
      fail(p, "expected a non-empty array of species");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      std::string pi = p + "." + std::to_string(i);
      set.species.push_back(
          {num_or(arr[i], pi, "charge", 1.0),
           parse_distribution(need(arr[i], pi, "distribution"),
                              join(pi, "distribution"))});
    }
    return set;
  }
  set.species.push_back(
      {1.0, parse_distribution(need(cfg, path, "distribution"),
                               join(path, "distribution"))});
  return set;
}

Regime parse_regime(const ordered_json& j, const std::string& path) {
  Regime r;
  std::string tag = str_at(j, path, "interaction");
  if (tag == "finite_range")
    r.tag = InteractionTag::finite_range;
  else if (tag == "coulomb")
    r.tag = InteractionTag::coulomb;
  else if (tag == "grazing")
    r.tag = InteractionTag::grazing;
  else
    fail(join(path, "interaction"), "unknown interaction '" + tag + "'");
  std::string model = str_at(j, path, "medium");
  if (model == "rayleigh")
    r.model = MediumModel::rayleigh;
  else if (model == "interacting")
    r.model = MediumModel::interacting;
  else
    fail(join(path, "medium"), "unknown medium '" + model + "'");
  r.sigma = num_or(j, path, "sigma", 0.0);
  return r;
}

// ---- json emit helpers -------------------------------------------------

ordered_json mat_json(const Mat3& m) {
  ordered_json a = ordered_json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a.push_back(m(i, j));
  return a;
}

ordered_json vec_json(const Vec3& v) {
  return ordered_json::array({v[0], v[1], v[2]});
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) fail("output", "cannot write '" + p.string() + "'");
  return os;
}

// ---- experiments -------------------------------------------------------

ordered_json run_sample(const ordered_json& cfg, const fs::path& out,
                        std::uint64_t seed, int /*workers*/) {
  SpeciesSet set = parse_species(cfg, "");
  double R = num_at(cfg, "", "R");
  double tau = num_or(cfg, "", "tau", 0.0);

  ParticleConfiguration config = sample_poisson(set, R, seed);
  if (tau != 0) config = free_flow(config, tau);

  ordered_json res;
  res["experiment"] = "sample";
  res["R"] = R;
  res["tau"] = tau;
  res["total_count"] = config.total_count();
  ordered_json counts = ordered_json::array();
  double ball = 4.0 / 3.0 * M_PI * R * R * R;
  std::ofstream cs = open_out(out / "counts.csv");
  CsvWriter w(cs);
  w.field("species").field("charge").field("count").field("expected");
  w.end_row();
  for (std::size_t l = 0; l < config.species.size(); ++l) {
    const auto& sp = config.species[l];
    double expected = set.species[l].dist.density() * ball;
    counts.push_back({{"charge", sp.charge},
                      {"count", sp.x.size()},
                      {"expected", expected}});
    w.field(std::int64_t(l)).field(sp.charge).field(std::uint64_t(sp.x.size()));
    w.field(expected);
    w.end_row();
  }
  res["counts"] = counts;
  if (cfg.contains("dump") && cfg.at("dump").is_boolean() &&
      cfg.at("dump").get<bool>()) {
    std::ofstream os = open_out(out / "particles.bin");
    dump_particles(config, os);
    res["dump"] = "particles.bin";
  }
  return res;
}

ordered_json run_deflection(const ordered_json& cfg, const fs::path& out,
                            std::uint64_t seed, int workers) {
  SpeciesSet set = parse_species(cfg, "");
  RadialPotential base = parse_potential(need(cfg, "", "potential"), "potential");
  ScaledPotential pot = parse_scaled(need(cfg, "", "scaling"), "scaling", base);
  Vec3 V = vec3_at(cfg, "", "V");
  double horizon = num_at(cfg, "", "horizon");
  std::size_t n_samples = std::size_t(int_or(cfg, "", "n_samples", 500));

  DeflectionOptions opts;
  if (cfg.contains("options")) {
    const ordered_json& o = cfg.at("options");
    opts.step_dt = num_or(o, "options", "step_dt", 0.0);
    opts.points_per_interaction =
        int(int_or(o, "options", "points_per_interaction", 20));
    opts.tail_fraction = num_or(o, "options", "tail_fraction", 1e-3);
    std::string path = str_or(o, "options", "path", "auto");
    if (path == "auto")
      opts.path = DeflectionOptions::Path::auto_select;
    else if (path == "brute")
      opts.path = DeflectionOptions::Path::brute;
    else if (path == "capsule")
      opts.path = DeflectionOptions::Path::capsule;
    else if (path == "coulomb")
      opts.path = DeflectionOptions::Path::coulomb;
    else
      fail("options.path", "unknown integrator path '" + path + "'");
  }
  opts.workers = workers;

  DeflectionEnsemble ens = deflection_mc(set, pot, V, horizon, n_samples, seed, opts);

  std::ofstream cs = open_out(out / "deflections.csv");
  CsvWriter w(cs);
  w.field("sample").field("dx").field("dy").field("dz");
  w.end_row();
  for (std::size_t i = 0; i < ens.samples.size(); ++i) {
    w.field(std::int64_t(i));
    w.field(ens.samples[i][0]).field(ens.samples[i][1]).field(ens.samples[i][2]);
    w.end_row();
  }

  ordered_json res;
  res["experiment"] = "deflection";
  res["horizon"] = ens.horizon;
  res["n_samples"] = n_samples;
  res["sampling_radius"] = ens.sampling_radius;
  res["mean"] = vec_json(ens.mean);
  res["covariance"] = mat_json(ens.covariance);
  res["covariance_std_error"] = mat_json(ens.covariance_std_error);
  res["trace_covariance"] = ens.covariance.trace();
  res["trace_std_error"] = ens.covariance_std_error.trace();
  return res;
}

ordered_json dielectric_body(const DielectricFunction& diel,
                             const ordered_json& cfg, const fs::path& out,
                             int workers) {
  Vec3 khat = vec3_or(cfg, "", "khat", Vec3(1, 0, 0));
  if (khat.norm() < 1e-12) fail("khat", "direction must be nonzero");
  khat.normalize();
  std::vector<double> ks = num_list_at(cfg, "", "k_values");
  std::size_t n_grid = std::size_t(int_or(cfg, "", "n_grid", 2048));

  ordered_json res;
  res["experiment"] = "dielectric";
  bool all_stable = true;
  ordered_json stab = ordered_json::array();
  std::ofstream cs = open_out(out / "stability.csv");
  CsvWriter w(cs);
  w.field("k").field("stable").field("winding").field("min_abs_delta");
  w.field("xi_at_min");
  w.end_row();
  for (double k : ks) {
    StabilityReport rep = penrose_check(diel, k * khat, n_grid);
    all_stable = all_stable && rep.stable;
    stab.push_back({{"k", k},
                    {"stable", rep.stable},
                    {"winding", rep.winding},
                    {"min_abs_delta", rep.min_abs_delta},
                    {"xi_at_min", rep.xi_at_min}});
    w.field(k).field(std::int64_t(rep.stable ? 1 : 0));
    w.field(std::int64_t(rep.winding)).field(rep.min_abs_delta);
    w.field(rep.xi_at_min);
    w.end_row();
  }
  res["stability"] = stab;
  res["all_stable"] = all_stable;

  if (cfg.contains("xi")) {
    const ordered_json& xj = cfg.at("xi");
    double w0 = num_at(xj, "xi", "w0");
    std::vector<double> times = num_list_at(xj, "xi", "times");
    XiTimeOptions xopts;
    xopts.k_max = num_or(xj, "xi", "k_max", 12.0);
    xopts.nk = std::size_t(int_or(xj, "xi", "nk", 256));
    xopts.nx = std::size_t(int_or(xj, "xi", "nx", 512));
    xopts.workers = workers;
    FundamentalSolutionGrid grid = xi_time(diel, khat, w0, times, xopts);

    std::ofstream xs = open_out(out / "xi.csv");
    CsvWriter xw(xs);
    xw.field("t").field("mass").field("sup_interaction");
    xw.end_row();
    std::vector<double> ts, logs;
    for (std::size_t i = 0; i < grid.t.size(); ++i) {
      xw.field(grid.t[i]).field(grid.mass[i]).field(grid.sup_interaction[i]);
      xw.end_row();
      if (grid.t[i] > 0 && grid.sup_interaction[i] > 0) {
        ts.push_back(grid.t[i]);
        logs.push_back(std::log(grid.sup_interaction[i]));
      }
    }
    ordered_json xi;
    xi["a_used"] = grid.a_used;
    xi["a_check_gap"] = grid.a_check_gap;
    if (ts.size() >= 2) {
      LinearFit fit = linear_fit(ts, logs);
      xi["kappa_hat"] = -fit.slope;
      xi["envelope_r2"] = fit.r2;
    }
    res["xi"] = xi;
  }
  return res;
}

// DielectricFunction carries caching state and is pinned in place, so each
// coupling branch constructs it on its own stack frame.
ordered_json run_dielectric(const ordered_json& cfg, const fs::path& out,
                            std::uint64_t /*seed*/, int workers) {
  VelocityDistribution g =
      parse_distribution(need(cfg, "", "distribution"), "distribution");
  RadialPotential profile =
      parse_potential(need(cfg, "", "potential"), "potential");
  const ordered_json& cj = need(cfg, "", "coupling");
  std::string model = str_at(cj, "coupling", "model");
  if (model == "medium") {
    DielectricFunction diel = DielectricFunction::medium(
        profile, num_at(cj, "coupling", "sigma"), g);
    return dielectric_body(diel, cfg, out, workers);
  }
  if (model == "landau_medium") {
    DielectricFunction diel = DielectricFunction::landau_medium(
        profile, num_at(cj, "coupling", "L"), g);
    return dielectric_body(diel, cfg, out, workers);
  }
  fail("coupling.model", "unknown coupling model '" + model + "'");
}

ordered_json run_coefficients(const ordered_json& cfg, const fs::path& out,
                              std::uint64_t /*seed*/, int workers) {
  Regime regime = parse_regime(need(cfg, "", "regime"), "regime");
  Vec3 v = vec3_at(cfg, "", "v");
  RadialPotential profile =
      parse_potential(need(cfg, "", "potential"), "potential");
  VelocityDistribution g =
      parse_distribution(need(cfg, "", "distribution"), "distribution");

  CoefficientOptions opts;
  if (cfg.contains("options")) {
    const ordered_json& o = cfg.at("options");
    opts.n_hermite = int(int_or(o, "options", "n_hermite", opts.n_hermite));
    opts.n_radial = int(int_or(o, "options", "n_radial", opts.n_radial));
    opts.n_angular = int(int_or(o, "options", "n_angular", opts.n_angular));
    opts.s_max = num_or(o, "options", "s_max", opts.s_max);
    opts.plateau_lag = num_or(o, "options", "plateau_lag", opts.plateau_lag);
  }
  opts.workers = workers;

  CoefficientResult dcr = diffusion(regime, v, profile, g, opts);
  CoefficientResult fcr = friction(regime, v, profile, g, opts);

  ordered_json res;
  res["experiment"] = "coefficients";
  res["v"] = vec_json(v);
  res["D"] = mat_json(dcr.D);
  res["Lambda"] = vec_json(fcr.Lambda);
  res["quad_error_D"] = mat_json(dcr.quad_error_D);
  res["quad_error_Lambda"] = vec_json(fcr.quad_error_Lambda);
  res["psd_clip"] = dcr.psd_clip;
  res["skipped_measure"] = dcr.skipped_measure;
  res["s_cutoff"] = dcr.s_cutoff;
  res["trace_D"] = dcr.D.trace();
  if (g.kind() == VelocityDistribution::Kind::maxwellian) {
    EinsteinReport er = einstein_consistency(regime, v, profile, g, opts);
    res["einstein"] = {{"residual_half", er.residual_half},
                       {"residual_full", er.residual_full},
                       {"half_exact_expected", er.half_exact_expected},
                       {"scale", er.scale}};
  }

  std::ofstream cs = open_out(out / "coefficients.csv");
  CsvWriter w(cs);
  w.field("name").field("value");
  w.end_row();
  const char* axes = "xyz";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      w.field(std::string("D_") + axes[i] + axes[j]).field(dcr.D(i, j));
      w.end_row();
    }
  for (int i = 0; i < 3; ++i) {
    w.field(std::string("Lambda_") + axes[i]).field(fcr.Lambda[i]);
    w.end_row();
  }
  return res;
}

ordered_json run_fluctuations(const ordered_json& cfg, const fs::path& out,
                              std::uint64_t seed, int workers) {
  VelocityDistribution g =
      parse_distribution(need(cfg, "", "distribution"), "distribution");
  std::string mode = str_or(cfg, "", "mode", "correlation");

  if (mode == "correlation") {
    GaussianFieldSpec spec{g, {}, 0.5, 1.0, seed};
    spec.h_y = num_or(cfg, "", "h_y", 0.5);
    if (cfg.contains("wgrid")) {
      const ordered_json& wj = cfg.at("wgrid");
      spec.wgrid.lo = vec3_or(wj, "wgrid", "lo", Vec3(-4, -4, -4));
      spec.wgrid.h = num_or(wj, "wgrid", "h", 0.25);
      Vec3 n = vec3_or(wj, "wgrid", "n", Vec3(33, 33, 33));
      spec.wgrid.n = {int(n[0]), int(n[1]), int(n[2])};
    } else {
      spec.wgrid = VelocityGrid{Vec3(-4, -4, -4), 0.25, {33, 33, 33}};
    }
    std::size_t n_samples = std::size_t(int_or(cfg, "", "n_samples", 2000));
    const ordered_json& pairs = need(cfg, "", "pairs");
    if (!pairs.is_array() || pairs.empty())
      fail("pairs", "expected a non-empty array");

    std::ofstream cs = open_out(out / "correlation.csv");
    CsvWriter w(cs);
    w.field("dt").field("empirical").field("std_error").field("prediction");
    w.field("rel_gap");
    w.end_row();
    ordered_json rows = ordered_json::array();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      std::string pp = "pairs." + std::to_string(i);
      Vec3 y1 = vec3_at(pairs[i], pp, "y1");
      Vec3 y2 = vec3_at(pairs[i], pp, "y2");
      double t1 = num_at(pairs[i], pp, "t1");
      double t2 = num_at(pairs[i], pp, "t2");
      RunningMoments m =
          density_correlation_mc(spec, y1, t1, y2, t2, n_samples, workers);
      double dt = t2 - t1;
      double pred = 0;
      if (dt != 0) {
        double adt = std::abs(dt);
        pred = g.value((y2 - y1) / dt) / (adt * adt * adt);
      }
      double gap = pred != 0 ? std::abs(m.mean - pred) / std::abs(pred) : 0.0;
      w.field(dt).field(m.mean).field(m.std_error()).field(pred).field(gap);
      w.end_row();
      rows.push_back({{"dt", dt},
                      {"empirical", m.mean},
                      {"std_error", m.std_error()},
                      {"prediction", pred},
                      {"rel_gap", gap}});
    }
    ordered_json res;
    res["experiment"] = "fluctuations";
    res["mode"] = "correlation";
    res["n_samples"] = n_samples;
    res["pairs"] = rows;
    return res;
  }

  if (mode == "force") {
    RadialPotential profile =
        parse_potential(need(cfg, "", "potential"), "potential");
    Vec3 v = vec3_or(cfg, "", "v", Vec3::Zero());
    ForceCorrelationOptions opts;
    opts.sigma = num_or(cfg, "", "sigma", 0.0);
    opts.workers = workers;
    std::vector<double> lags = num_list_at(cfg, "", "lags");
    std::vector<Mat3> corr = force_correlation_fourier(profile, g, v, lags, opts);

    std::ofstream cs = open_out(out / "force_correlation.csv");
    CsvWriter w(cs);
    w.field("lag");
    const char* axes = "xyz";
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) w.field(std::string("C_") + axes[i] + axes[j]);
    w.end_row();
    for (std::size_t l = 0; l < lags.size(); ++l) {
      w.field(lags[l]);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) w.field(corr[l](i, j));
      w.end_row();
    }

    ordered_json res;
    res["experiment"] = "fluctuations";
    res["mode"] = "force";
    res["trace_at_zero_lag"] = corr.empty() ? 0.0 : corr.front().trace();
    double L = num_or(cfg, "", "lag_integral_L", 0.0);
    if (L > 0) {
      Mat3 D = force_correlation_lag_integral(profile, g, v, L, opts);
      res["lag_integral_L"] = L;
      res["D_from_correlation"] = mat_json(D);
      res["trace_D_from_correlation"] = D.trace();
    }
    return res;
  }
  fail("mode", "unknown fluctuations mode '" + mode + "'");
}

ordered_json run_compare(const ordered_json& cfg, const fs::path& out,
                         std::uint64_t seed, int workers) {
  RadialPotential base = parse_potential(need(cfg, "", "potential"), "potential");
  VelocityDistribution g =
      parse_distribution(need(cfg, "", "distribution"), "distribution");
  double eps = num_at(cfg, "", "eps");
  double L = num_at(cfg, "", "L");
  double T_macro = num_or(cfg, "", "T_macro", 0.5);

  CompareOptions opts;
  opts.seed = seed;
  opts.workers = workers;
  if (cfg.contains("options")) {
    const ordered_json& o = cfg.at("options");
    opts.v0 = vec3_or(o, "options", "v0", opts.v0);
    opts.n_seeds = std::size_t(int_or(o, "options", "n_seeds", 50));
    opts.n_times = int(int_or(o, "options", "n_times", opts.n_times));
    opts.window_lo = num_or(o, "options", "window_lo", opts.window_lo);
    opts.window_hi = num_or(o, "options", "window_hi", opts.window_hi);
  } else {
    opts.n_seeds = 50;
  }

  ComparisonReport rep = compare_variance_growth(base, g, eps, L, T_macro, opts);

  std::ofstream cs = open_out(out / "compare.csv");
  CsvWriter w(cs);
  w.field("t").field("surrogate").field("nbody").field("mc_std");
  w.end_row();
  for (std::size_t i = 0; i < rep.times.size(); ++i) {
    w.field(rep.times[i]).field(rep.surrogate[i]).field(rep.nbody[i]);
    w.field(rep.mc_std[i]);
    w.end_row();
  }

  ordered_json res;
  res["experiment"] = "compare";
  res["max_rel_gap"] = rep.max_rel_gap;
  res["surrogate_slope"] = rep.surrogate_slope;
  res["nbody_slope"] = rep.nbody_slope;
  res["T_kinetic"] = rep.T_kinetic;
  res["expected_count"] = rep.expected_count;
  res["n_seeds"] = rep.n_seeds;
  return res;
}

ordered_json dispatch(const std::string& kind, const ordered_json& cfg,
                      const fs::path& out, std::uint64_t seed, int workers) {
  if (kind == "sample") return run_sample(cfg, out, seed, workers);
  if (kind == "deflection") return run_deflection(cfg, out, seed, workers);
  if (kind == "dielectric") return run_dielectric(cfg, out, seed, workers);
  if (kind == "coefficients") return run_coefficients(cfg, out, seed, workers);
  if (kind == "fluctuations") return run_fluctuations(cfg, out, seed, workers);
  if (kind == "compare") return run_compare(cfg, out, seed, workers);
  fail("experiment", "unknown experiment kind '" + kind + "'");
}

// ---- harness -----------------------------------------------------------

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  int workers = -1;  // -1: unset
  std::int64_t seed = -1;
};

int resolve_workers(int flag) {
  if (flag >= 0) return flag;
  if (const char* env = std::getenv("KINETIC_WORKERS")) {
    try {
      return std::max(0, std::stoi(env));
    } catch (...) {
      std::cerr << "KINETIC_WORKERS: not an integer, ignoring\n";
    }
  }
  return 0;
}

struct LoadedConfig {
  ordered_json cfg;
  std::string sha;
};

LoadedConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("config", "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  std::string text = ss.str();
  LoadedConfig lc;
  lc.sha = sha256_hex(text);
  try {
    lc.cfg = ordered_json::parse(text);
  } catch (const std::exception& e) {
    fail("config", std::string("parse error: ") + e.what());
  }
  if (!lc.cfg.is_object()) fail("config", "top level must be an object");
  return lc;
}

int run_once(const ordered_json& cfg, const std::string& sha,
             const CommonArgs& args, const fs::path& outdir,
             ordered_json* results_out) {
  std::string kind = str_at(cfg, "", "experiment");
  std::uint64_t seed = args.seed >= 0
                           ? std::uint64_t(args.seed)
                           : std::uint64_t(int_or(cfg, "", "seed", 1));
  int workers = resolve_workers(args.workers);
  set_default_workers(workers);
  fs::create_directories(outdir);

  auto t0 = std::chrono::steady_clock::now();
  ordered_json results = dispatch(kind, cfg, outdir, seed, workers);
  double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  {
    std::ofstream os = open_out(outdir / "results.json");
    os << results.dump(2) << "\n";
  }
  {
    ordered_json manifest;
    manifest["config_sha256"] = sha;
    manifest["seed"] = seed;
    manifest["versions"] = {{"kinetic", kVersion}};
    manifest["wall_time_s"] = wall;
    std::ofstream os = open_out(outdir / "manifest.json");
    os << manifest.dump(2) << "\n";
  }
  if (results_out) *results_out = results;
  return 0;
}

void flatten(const ordered_json& j, const std::string& prefix,
             std::vector<std::pair<std::string, double>>& out) {
  if (j.is_number()) {
    out.emplace_back(prefix, j.get<double>());
  } else if (j.is_boolean()) {
    out.emplace_back(prefix, j.get<bool>() ? 1.0 : 0.0);
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      flatten(it.value(), join(prefix, it.key()), out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i)
      flatten(j[i], join(prefix, std::to_string(i)), out);
  }
}

int cmd_run(const CommonArgs& args) {
  LoadedConfig lc = load_config(args.config_path);
  fs::path outdir = !args.out_override.empty()
                        ? fs::path(args.out_override)
                        : fs::path(str_or(lc.cfg, "", "output", "out"));
  return run_once(lc.cfg, lc.sha, args, outdir, nullptr);
}

int cmd_sweep(const CommonArgs& args, const std::string& axis,
              const std::vector<std::string>& value_tokens) {
  if (value_tokens.empty()) fail("values", "empty values list");
  std::vector<double> values;
  for (const std::string& tok : value_tokens) {
    try {
      std::size_t pos = 0;
      values.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (...) {
      fail("values", "'" + tok + "' is not a number");
    }
  }

  LoadedConfig lc = load_config(args.config_path);

  // The axis must name an existing numeric field of the config.
  std::vector<std::string> parts;
  {
    std::stringstream ss(axis);
    std::string p;
    while (std::getline(ss, p, '.')) parts.push_back(p);
  }
  if (parts.empty()) fail("axis", "empty axis path");
  {
    const ordered_json* cur = &lc.cfg;
    for (const std::string& p : parts) {
      if (!cur->is_object() || !cur->contains(p))
        fail(axis, "config has no field '" + p + "'");
      cur = &cur->at(p);
    }
    if (!cur->is_number()) fail(axis, "axis field is not a number");
  }

  fs::path outroot = !args.out_override.empty()
                         ? fs::path(args.out_override)
                         : fs::path(str_or(lc.cfg, "", "output", "out"));
  fs::create_directories(outroot);

  std::string axis_slug = axis;
  for (char& c : axis_slug)
    if (c == '.') c = '_';

  std::vector<std::string> keys;
  std::vector<std::vector<std::pair<std::string, double>>> rows(values.size());
  std::vector<std::string> status(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    ordered_json cfg = lc.cfg;
    ordered_json* cur = &cfg;
    for (std::size_t p = 0; p + 1 < parts.size(); ++p) cur = &cur->at(parts[p]);
    cur->at(parts.back()) = values[i];

    fs::path sub = outroot / (axis_slug + "=" + value_tokens[i]);
    try {
      ordered_json results;
      CommonArgs sub_args = args;
      run_once(cfg, lc.sha, sub_args, sub, &results);
      status[i] = "ok";
      flatten(results, "", rows[i]);
      for (const auto& kv : rows[i]) {
        bool known = false;
        for (const std::string& k : keys)
          if (k == kv.first) {
            known = true;
            break;
          }
        if (!known) keys.push_back(kv.first);
      }
    } catch (const Error& e) {
      status[i] = e.category() == Error::Category::validation
                      ? "validation_error"
                      : "numerical_error";
      std::cerr << axis << "=" << value_tokens[i] << ": " << e.what() << "\n";
    }
  }

  std::ofstream cs = open_out(outroot / "sweep.csv");
  CsvWriter w(cs);
  w.field(axis).field("status");
  for (const std::string& k : keys) w.field(k);
  w.end_row();
  for (std::size_t i = 0; i < values.size(); ++i) {
    w.field(value_tokens[i]).field(status[i]);
    for (const std::string& k : keys) {
      bool found = false;
      for (const auto& kv : rows[i])
        if (kv.first == k) {
          w.field(kv.second);
          found = true;
          break;
        }
      if (!found) w.field("");
    }
    w.end_row();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinetic experiment harness"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string axis;
  std::vector<std::string> values;

  CLI::App* run = app.add_subcommand("run", "run one experiment config");
  run->add_option("config", args.config_path, "JSON config")->required();
  run->add_option("--out", args.out_override, "output directory");
  run->add_option("--workers", args.workers, "worker threads (0: hardware)");
  run->add_option("--seed", args.seed, "seed override");

  CLI::App* sweep = app.add_subcommand("sweep", "run a config over an axis");
  sweep->add_option("config", args.config_path, "JSON config")->required();
  sweep->add_option("--axis", axis, "dotted path of a numeric field")->required();
  sweep->add_option("--values", values, "comma-separated values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--out", args.out_override, "output directory");
  sweep->add_option("--workers", args.workers, "worker threads (0: hardware)");
  sweep->add_option("--seed", args.seed, "seed override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(args);
    return cmd_sweep(args, axis, values);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.category() == Error::Category::validation ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
