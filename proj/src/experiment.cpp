// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include "kickstab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "kickstab/density_geometry.hpp"
#include "kickstab/ergodicity_lab.hpp"
#include "kickstab/errors.hpp"
#include "kickstab/feedback_ops.hpp"
#include "kickstab/rds_engine.hpp"

namespace fs = std::filesystem;

namespace kickstab {
namespace {

// ---------------------------------------------------------------- config IO

class Section {
 public:
  Section(const Json& j, std::string name, std::set<std::string> allowed) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ValidationError(name_ + ": expected an object");
    for (const auto& [key, value] : j_.items())
      if (!allowed.count(key)) throw ValidationError(name_ + "." + key + ": unknown key");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, const T& fallback) const {
    if (!j_.contains(key)) return fallback;
    return as<T>(key);
  }

  template <class T>
  T require(const std::string& key) const {
    if (!j_.contains(key)) throw ValidationError(name_ + "." + key);
    return as<T>(key);
  }

  Mat matrix(const std::string& key) const {
    try {
      return mat_from_json(j_.at(key));
    } catch (const std::exception&) {
      throw ValidationError(name_ + "." + key + ": expected a matrix");
    }
  }

  std::string field(const std::string& key) const { return name_ + "." + key; }

 private:
  template <class T>
  T as(const std::string& key) const {
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(name_ + "." + key + ": wrong type");
    }
  }

  const Json& j_;
  std::string name_;
};

void check(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ValidationError(field + ": " + what);
}

void validate(ExperimentConfig& cfg) {
  auto& m = cfg.model;
  check(m.n >= 2, "model.n", "must be at least 2");
  check(m.d == 2 || m.d == 3, "model.d", "must be 2 or 3");
  check(m.beta0 > 0.0, "model.beta0", "must be positive");
  check(m.remainder_scale >= 0.0 && m.remainder_scale < m.beta0 * std::log(3.0), "model.remainder_scale",
        "must lie in [0, beta0 ln 3)");
  check(m.b >= 0.0, "model.b", "must be nonnegative");
  check(m.n_unstable >= 0 && m.n_unstable < m.n, "model.n_unstable", "must satisfy 0 <= n_unstable < n");
  check(m.sigma > 0.0, "model.sigma", "must be positive");
  if (m.obs_idx.empty())
    for (int i = m.n / 2; i < m.n; ++i) m.obs_idx.push_back(i);
  for (int i : m.obs_idx) check(i >= 0 && i < m.n, "model.obs_idx", "index out of range");
  check(static_cast<int>(m.obs_idx.size()) <= m.n - m.n_unstable, "model.obs_idx",
        "leaves fewer free coordinates than unstable modes");
  if (m.b == 0.0) {
    StokesSpectrum spec = synth_stokes_spectrum(m.n, m.d, m.beta0, m.remainder_scale, m.seed);
    for (Eigen::Index j = 0; j < spec.mu.size(); ++j)
      check(std::abs(spec.mu[j] - m.sigma) > kGapTol, "model.sigma", "violates the spectral gap");
  }

  auto& c = cfg.control;
  check(c.geometry == "default" || c.geometry == "explicit", "control.geometry", "must be default or explicit");
  if (c.geometry == "explicit") check(c.g.rows() == m.n, "control.g", "must have n rows");

  auto& k = cfg.kick;
  check(k.k_kind == "diag" || k.k_kind == "dense", "kick.K", "must be diag or dense");
  check(k.eps_hat > 0.0, "kick.eps_hat", "must be positive");
  check(k.proposal == "gaussian" || k.proposal == "ball" || k.proposal == "auto", "kick.proposal",
        "must be gaussian, ball or auto");
  if (k.k_kind == "diag" && !k.entries.empty())
    check(static_cast<int>(k.entries.size()) == m.n, "kick.entries", "must have n entries");
  if (k.k_kind == "dense") check(k.dense.rows() == m.n && k.dense.cols() == m.n, "kick.dense", "must be n x n");

  auto& r = cfg.run;
  check(r.tau > 0.0, "run.tau", "must be positive");
  check(r.n_steps >= 1 && r.n_chains >= 1, "run.n_steps", "steps and chains must be positive");
  check(!r.burn_in || *r.burn_in >= 0, "run.burn_in", "must be nonnegative");
  check(r.ladder_levels >= 1, "run.ladder_levels", "must be positive");
  check(r.mixing_chains >= 500, "run.mixing_chains", "must be at least 500");
  check(r.mixing_steps >= 10, "run.mixing_steps", "must be at least 10");
  check(r.w0_norm >= 1.0, "run.w0_norm", "must be at least 1");
  check(r.slln_steps >= 60 && r.stationary_steps >= 60, "run.slln_steps", "must be at least 60");
  check(r.demo_chains >= 1, "run.demo_chains", "must be positive");

  auto& d = cfg.density;
  check(d.alpha_source == "pi" || d.alpha_source == "explicit", "density.alpha_source", "must be pi or explicit");
  if (d.alpha_source == "explicit") {
    check(d.alpha.size() > 0, "density.alpha", "required for explicit alpha");
    if (d.k.size() > 0)
      check(d.k.rows() == d.alpha.rows() + d.alpha.cols() && d.k.cols() == d.k.rows(), "density.K",
            "must be (m + nm) square");
  }
  check(d.level >= 1 && d.level <= r.ladder_levels, "density.level", "must be a ladder level");
  check(d.radial >= 4 && d.angular >= 8, "density.radial", "quadrature orders too small");
  check(d.grid >= 1 && d.mc_samples >= 10000 && d.tv_pairs >= 2, "density.mc_samples", "budget too small");
  check(!cfg.output_dir.empty(), "output.dir", "must be set");
}

std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// ---------------------------------------------------------------- pipeline

Json read_json(const fs::path& p) {
  if (!fs::exists(p)) throw MissingPrerequisite(p.filename().string() + " not found in " + p.parent_path().string());
  try {
    return Json::parse(read_file(p.string()));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const Json& j) { write_file(p.string(), j.dump(2) + "\n"); }

struct Components {
  OseenModel model;
  Dichotomy dich;
  ControlGeometry geo;
  FeedbackProjector pi;
  KickLaw law;
};

KickLaw make_law(const ExperimentConfig& cfg) {
  const auto& k = cfg.kick;
  Mat kmat;
  if (k.k_kind == "dense") {
    kmat = k.dense;
  } else if (!k.entries.empty()) {
    kmat = Eigen::Map<const Vec>(k.entries.data(), static_cast<Eigen::Index>(k.entries.size())).asDiagonal();
  } else {
    kmat = power_law_covariance(cfg.model.n, k.decay);
  }
  KickLawOptions opts;
  opts.seed = k.seed;
  opts.proposal = k.proposal == "gaussian" ? Proposal::Gaussian
                  : k.proposal == "ball"   ? Proposal::UniformBall
                                           : Proposal::Auto;
  return make_kick_law(kmat, k.eps_hat, opts);
}

Components load_components(const ExperimentConfig& cfg, const fs::path& dir, bool with_pi) {
  Components c;
  c.model = model_from_json(read_json(dir / "model.json"));
  c.dich = eig_split(c.model, cfg.model.sigma);
  if (with_pi) {
    c.geo = cfg.control.geometry == "explicit" ? make_geometry(c.dich, c.model.obs_idx, cfg.control.g)
                                               : default_geometry(c.dich, c.model.obs_idx, cfg.control.seed);
    c.pi = build_pi(c.dich, c.geo);
    c.law = make_law(cfg);
  }
  return c;
}

Vec random_state(const Dichotomy& dich, double norm, std::uint64_t seed, std::uint64_t stream) {
  RngStream rng(seed, stream);
  return (dich.x_basis * rng.normal_vector(dich.x_basis.cols())).normalized() * norm;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Context {
  const ExperimentConfig& cfg;
  fs::path dir;
  int threads;
  StageResult result;

  void emit(const std::string& name, const Json& j) {
    write_json(dir / name, j);
    result.artifacts.push_back(name);
  }
  void emit_csv(const std::string& name, const std::vector<std::string>& cols,
                const std::vector<std::vector<double>>& rows) {
    emit_series((dir / name).string(), cols, rows);
    result.artifacts.push_back(name);
  }
  void need(const std::string& name) const {
    if (!fs::exists(dir / name)) throw MissingPrerequisite(name + " is missing; run the earlier stage first");
  }
};

void stage_synth(Context& ctx) {
  const auto& m = ctx.cfg.model;
  StokesSpectrum spec = synth_stokes_spectrum(m.n, m.d, m.beta0, m.remainder_scale, m.seed);
  OseenModel model = build_oseen(spec, m.b, m.n_unstable, m.sigma, m.obs_idx, m.seed);
  ctx.emit("model.json", model_to_json(model));
  Eigen::EigenSolver<Mat> es(model.a, false);
  std::vector<Complex> ev(es.eigenvalues().data(), es.eigenvalues().data() + model.n());
  std::sort(ev.begin(), ev.end(), [](Complex a, Complex b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  std::vector<std::vector<double>> rows;
  for (int j = 0; j < model.n(); ++j) rows.push_back({double(j), spec.mu[j], ev[j].real(), ev[j].imag()});
  ctx.emit_csv("spectrum.csv", {"index", "mu", "eig_re", "eig_im"}, rows);
}

void stage_dichotomy(Context& ctx) {
  ctx.need("model.json");
  Components c = load_components(ctx.cfg, ctx.dir, true);
  Mat pr = riesz_projector(c.model, ctx.cfg.model.sigma);
  double riesz_err = (pr - eigen_projector(c.model.a, ctx.cfg.model.sigma)).norm();
  Json dj = dichotomy_to_json(c.dich);
  dj["riesz_error"] = riesz_err;
  dj["riesz_trace"] = pr.trace();
  ctx.emit("dichotomy.json", dj);

  RngStream rng(ctx.cfg.control.seed, 0xA4);
  double fix_err = 0.0, idem_err = 0.0;
  long obs_mismatch = 0;
  for (int i = 0; i < 1000; ++i) {
    Vec phi = rng.normal_vector(c.model.n());
    Vec x = c.dich.p_sigma * phi;
    fix_err = std::max(fix_err, (apply_pi(c.pi, x) - x).norm());
    Vec p = apply_pi(c.pi, phi);
    idem_err = std::max(idem_err, (apply_pi(c.pi, p) - p).norm());
    for (int k : c.pi.obs_idx)
      if (p[k] != phi[k]) ++obs_mismatch;
  }
  Json pj;
  pj["norm_pi"] = c.pi.norm_pi;
  pj["cond_gram"] = c.geo.cond_gram;
  pj["obs_idx"] = c.pi.obs_idx;
  pj["fixed_point_error"] = fix_err;
  pj["idempotency_error"] = idem_err;
  pj["obs_mismatches"] = obs_mismatch;
  pj["G"] = to_json(c.geo.g);
  pj["Pi"] = to_json(c.pi.pi);
  ctx.emit("pi.json", pj);
  ctx.result.checks_passed = riesz_err < 1e-8 && fix_err < 1e-10 && idem_err < 1e-10 && obs_mismatch == 0;
}

void stage_certify(Context& ctx) {
  ctx.need("dichotomy.json");
  const auto& cfg = ctx.cfg;
  Components c = load_components(cfg, ctx.dir, false);
  const double tau = cfg.run.tau;
  ContractionCertificate cert = contraction_certificate(c.dich, c.model, tau);
  Json j;
  j["tau"] = tau;
  j["gamma0"] = cert.gamma0;
  j["ok"] = cert.ok;
  Json grid = Json::array();
  std::vector<double> g;
  for (double t : {1.0, 2.0, 4.0, 8.0}) {
    g.push_back(contraction_certificate(c.dich, c.model, t).gamma0);
    grid.push_back({{"tau", t}, {"gamma0", g.back()}});
  }
  j["gamma0_grid"] = grid;
  j["gamma0_decreasing"] = g[0] > g[1] && g[1] > g[2] && g[2] > g[3];
  ContourIntegrals ci = contour_bound_integrals(c.model, cfg.model.sigma, tau, 1.0, 0.75 * std::numbers::pi);
  j["contour_integrals"] = {{"theta", 1.0}, {"psi", 0.75 * std::numbers::pi}, {"I1", ci.i1}, {"I2", ci.i2}};
  SigmaLadder ladder = sigma_ladder(c.model, cfg.model.sigma, cfg.run.ladder_levels, tau);
  std::vector<double> gammas = tail_contraction(ladder, c.model, tau);
  bool tail_ok = gammas.back() < 0.5 * cert.gamma0;
  for (std::size_t k = 1; k < gammas.size(); ++k) tail_ok = tail_ok && gammas[k] < gammas[k - 1];
  j["tail_ok"] = tail_ok;
  ctx.emit("certificate.json", j);
  ctx.emit("ladder.json", ladder_to_json(ladder, gammas));
  ctx.result.checks_passed = cert.ok && tail_ok;
}

void stage_simulate(Context& ctx) {
  ctx.need("certificate.json");
  const auto& cfg = ctx.cfg;
  Components c = load_components(cfg, ctx.dir, true);
  ControlledSystem sys = make_system(c.model, c.dich, c.pi, c.law, cfg.run.tau);
  Vec w0 = random_state(c.dich, cfg.run.w0_norm, cfg.kick.seed, 0xA0);

  auto ens = run_ensemble(sys, w0, cfg.run.n_chains, cfg.run.n_steps, cfg.kick.seed, ctx.threads);
  EnvelopeReport env;
  double max_dt = 0.0;
  long entered = 0;
  std::vector<std::vector<double>> norm_rows;
  for (int k = 0; k <= cfg.run.n_steps; ++k) {
    double sum = 0.0, mx = 0.0;
    for (const auto& t : ens) {
      sum += t.norms[k];
      mx = std::max(mx, t.norms[k]);
    }
    norm_rows.push_back({double(k), sum / ens.size(), mx});
  }
  for (const auto& t : ens) {
    envelope_accumulate(env, t, sys.gamma0, sys.pi.norm_pi, sys.law.eps_hat);
    max_dt = std::max(max_dt, t.max_dt_residual);
    if (t.first_entry >= 0) ++entered;
  }
  ctx.emit_csv("norms.csv", {"step", "mean_norm", "max_norm"}, norm_rows);

  std::vector<double> ratios;
  UncontrolledRun first;
  for (int ch = 0; ch < cfg.run.demo_chains; ++ch) {
    ChainConfig cc;
    cc.n_steps = 100;
    cc.w0 = Vec::Zero(c.model.n());
    cc.seed = cfg.kick.seed;
    cc.chain = static_cast<std::uint64_t>(ch);
    cc.record_states = false;
    Trajectory ctl = run_chain(cc, sys);
    UncontrolledRun un = uncontrolled_demo(c.model, c.law, cc.w0, 100, cfg.run.tau, cfg.kick.seed, cc.chain);
    if (ch == 0) first = un;
    ratios.push_back(un.norms.back() / ctl.norms.back());
  }
  Eigen::EigenSolver<Mat> es(c.model.a, false);
  double lam_min = es.eigenvalues().real().minCoeff();
  std::vector<std::vector<double>> demo_rows;
  for (std::size_t k = 0; k < first.norms.size(); ++k) demo_rows.push_back({double(k), first.norms[k]});
  ctx.emit_csv("uncontrolled.csv", {"step", "norm"}, demo_rows);

  Json j;
  j["gamma0"] = sys.gamma0;
  j["norm_pi"] = sys.pi.norm_pi;
  j["r0"] = sys.r0();
  j["chains"] = cfg.run.n_chains;
  j["steps"] = cfg.run.n_steps;
  j["w0_norm"] = w0.norm();
  j["envelope"] = {{"certificate_valid", env.certificate_valid},
                   {"violations", env.violations},
                   {"checked", env.checked},
                   {"max_residual", env.max_residual}};
  j["max_dt_residual"] = max_dt;
  j["chains_entered_r0"] = entered;
  j["blowup"] = {{"chains", cfg.run.demo_chains},
                 {"median_ratio", median(ratios)},
                 {"min_ratio", *std::min_element(ratios.begin(), ratios.end())},
                 {"fitted_rate", first.slope},
                 {"predicted_rate", -lam_min * cfg.run.tau}};
  j["hashes"] = {{"model", ens.front().model_hash}, {"pi", ens.front().pi_hash}, {"law", ens.front().law_hash}};
  ctx.emit("simulate.json", j);
  ctx.result.checks_passed = env.certificate_valid && env.violations == 0 && median(ratios) > 1e3;
}

DensitySetup density_setup(const ExperimentConfig& cfg, const Components& c) {
  const auto& d = cfg.density;
  if (d.alpha_source == "explicit") {
    DensitySetup s;
    s.dec = build_pi_decomposition(d.alpha);
    Mat k = d.k.size() ? d.k : Mat(Mat::Identity(s.dec.n(), s.dec.n()));
    s.eps = d.eps > 0.0 ? d.eps : cfg.kick.eps_hat;
    KickLawOptions o;
    o.seed = cfg.kick.seed;
    o.proposal = Proposal::Auto;
    s.law = make_kick_law(k, s.eps, o);
    return s;
  }
  SigmaLadder ladder = sigma_ladder(c.model, cfg.model.sigma, cfg.run.ladder_levels, cfg.run.tau);
  return reduced_density_setup(ladder, c.dich, c.pi, c.law, d.level);
}

void stage_density(Context& ctx) {
  ctx.need("certificate.json");
  const auto& cfg = ctx.cfg;
  Components c = load_components(cfg, ctx.dir, true);
  DensitySetup s = density_setup(cfg, c);
  DensityOptions dopt;
  dopt.orders = {cfg.density.radial, cfg.density.angular};
  dopt.mc_fallback = true;
  dopt.seed = cfg.kick.seed;
  const int nm = s.dec.nm;

  std::vector<Vec> pts;
  pts.push_back(Vec::Zero(nm));
  const int g = cfg.density.grid;
  for (int i = 0; i < nm; ++i)
    for (int k = 1; k <= g; ++k) pts.push_back(boundary_point(s.dec, s.eps, Vec::Unit(nm, i)) * (0.8 * k / (g + 1)));
  auto mc = mc_density_oracle(s.dec, s.law, pts, cfg.density.mc_samples);
  std::vector<std::string> cols;
  for (int i = 0; i < nm; ++i) cols.push_back("x" + std::to_string(i));
  cols.insert(cols.end(), {"P", "mc", "mc_se"});
  std::vector<std::vector<double>> rows;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<double> row(pts[i].data(), pts[i].data() + nm);
    double p = density_P(s.dec, s.law, s.eps, pts[i], dopt);
    row.insert(row.end(), {p, mc[i].estimate, mc[i].std_error});
    rows.push_back(row);
    if (p > 0.0) max_rel = std::max(max_rel, std::abs(mc[i].estimate - p) / p);
  }
  ctx.emit_csv("density_grid.csv", cols, rows);

  Json j;
  j["m"] = s.dec.m;
  j["nm"] = nm;
  j["s"] = s.dec.s;
  j["jacobian"] = s.dec.jacobian;
  j["eps"] = s.eps;
  j["c_hat"] = s.law.c_hat();
  j["mc_max_relative_error"] = max_rel;
  if (nm <= 2) j["mass"] = density_mass(s.dec, s.law, s.eps, 64, 128, dopt);

  bool probe_ok = true;
  if (s.dec.m <= 3) {
    Vec xb = boundary_point(s.dec, s.eps, Vec::Unit(nm, 0));
    ExponentProbe probe = boundary_exponent_probe(s.dec, s.law, s.eps, xb, geometric_steps(s.eps), dopt);
    j["probe"] = {{"slope", probe.slope}, {"expected", 0.5 * s.dec.m}, {"r2", probe.r2}};
    probe_ok = std::abs(probe.slope - 0.5 * s.dec.m) <= 0.1;
  }
  TvOptions topt;
  topt.seed = cfg.kick.seed;
  TvStats tv = tv_ratio_stats(s.dec, s.law, s.eps, cfg.density.tv_pairs, cfg.kick.seed, 1e-3, 1e-1, topt);
  j["tv"] = {{"max_small", tv.max_small}, {"max_large", tv.max_large}, {"stable", tv.stable},
             {"separations", tv.separations}, {"ratios", tv.ratios}};
  ctx.emit("density.json", j);
  ctx.result.checks_passed = probe_ok && tv.stable;
}

void stage_mixing(Context& ctx) {
  ctx.need("simulate.json");
  const auto& cfg = ctx.cfg;
  Components c = load_components(cfg, ctx.dir, true);
  ControlledSystem sys = make_system(c.model, c.dich, c.pi, c.law, cfg.run.tau);
  const std::uint64_t seed = cfg.kick.seed;
  const double big = cfg.run.w0_norm;
  Vec wa = random_state(c.dich, big, seed, 0xA0);
  Vec wb = random_state(c.dich, big, seed, 0xB0);
  ObservableSet obs = make_observables(c.dich.x_basis, big, seed);

  MixingReport mix = mixing_decay(sys, wa, wb, cfg.run.mixing_chains, cfg.run.mixing_steps, obs, seed, ctx.threads);
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < mix.d.size(); ++k) rows.push_back({double(k), mix.d[k], mix.null_d[k]});
  ctx.emit_csv("mixing.csv", {"step", "d", "null_d"}, rows);

  ObservableSet unit_obs = make_observables(c.dich.x_basis, 1.0, seed);
  Vec zero = Vec::Zero(c.model.n());
  SllnReport s1 = slln_average(sys, zero, cfg.run.slln_steps, unit_obs, seed);
  SllnReport s2 = slln_average(sys, zero, cfg.run.slln_steps, unit_obs, mix64(seed + 1));
  bool overlap = true, zero_in_ci = true;
  for (int i = 0; i < c.model.n(); ++i) {
    overlap = overlap && std::abs(s1.state_mean[i] - s2.state_mean[i]) <= s1.state_ci[i] + s2.state_ci[i];
    zero_in_ci = zero_in_ci && std::abs(s1.state_mean[i]) <= s1.state_ci[i];
  }
  std::vector<double> cauchy;
  for (std::size_t i = 0; i + 1 < s1.checkpoints.size(); ++i)
    if (s1.checkpoints[i + 1] == 2 * s1.checkpoints[i]) {
      double diff = 0.0;
      for (std::size_t f = 0; f < unit_obs.size(); ++f)
        diff = std::max(diff, std::abs(s1.f_avg[i][f] - s1.f_avg[i + 1][f]));
      cauchy.push_back(diff);
    }

  int burn = cfg.run.burn_in ? *cfg.run.burn_in : default_burn_in(cfg.kick.eps_hat, 1.0, sys.gamma0);
  StationaryStats st = stationary_stats(sys, zero, cfg.run.stationary_steps, burn, seed);
  bool envelope_ok = st.max_norm <= sys.r0() + 1e-9;

  // Near-untruncated regime against the discrete Lyapunov solution.
  Mat q = c.pi.pi * c.law.k * c.pi.pi.transpose();
  KickLawOptions lo;
  lo.seed = seed;
  lo.proposal = Proposal::Gaussian;
  KickLaw wide = make_kick_law(c.law.k, 10.0 * std::sqrt(q.trace()) * 1.01, lo);
  ControlledSystem wide_sys = make_system(c.model, c.dich, c.pi, wide, cfg.run.tau);
  int wide_burn = std::max(20, default_burn_in(wide.eps_hat, 1.0, wide_sys.gamma0));
  StationaryStats ws = stationary_stats(wide_sys, zero, cfg.run.stationary_steps, wide_burn, seed);
  Mat sigma = discrete_lyapunov(sys.s, q, c.dich.x_basis);
  double frob = (ws.cov - sigma).norm();
  double se_frob = ws.cov_se.norm();
  bool lyap_ok = frob <= 3.0 * se_frob;

  // Stationarity: states at k and k + 10 after burn-in, across chains.
  int k0 = std::max(burn, 1) + 10;
  auto ens = run_ensemble(sys, zero, cfg.run.mixing_chains, k0 + 10, mix64(seed ^ 0xE), ctx.threads, true);
  Mat xk(c.model.n(), ens.size()), yk(c.model.n(), ens.size());
  for (std::size_t i = 0; i < ens.size(); ++i) {
    xk.col(i) = ens[i].states.col(k0);
    yk.col(i) = ens[i].states.col(k0 + 10);
  }
  EnergyTest et = energy_distance_test(xk, yk, 199, seed);

  Json j;
  j["mixing"] = {{"gamma", mix.gamma}, {"c", mix.c},          {"r2", mix.r2},
                 {"window", {mix.window_lo, mix.window_hi}},   {"noise_floor", mix.noise_floor},
                 {"conclusive", mix.conclusive},               {"note", mix.note},
                 {"gamma0", sys.gamma0}};
  j["slln"] = {{"steps", cfg.run.slln_steps},  {"mean_a", to_json(s1.state_mean)}, {"ci_a", to_json(s1.state_ci)},
               {"mean_b", to_json(s2.state_mean)}, {"ci_b", to_json(s2.state_ci)}, {"overlap", overlap},
               {"zero_in_ci", zero_in_ci},   {"cauchy", cauchy}};
  j["stationary"] = {{"burn_in", burn},
                     {"samples", st.n_samples},
                     {"min_cov_eig", st.min_cov_eig},
                     {"max_norm", st.max_norm},
                     {"envelope_ok", envelope_ok},
                     {"hist_edges", st.hist_edges},
                     {"hist_counts", st.hist_counts}};
  j["lyapunov"] = {{"eps_hat", wide.eps_hat}, {"frobenius_error", frob}, {"se_frobenius", se_frob}, {"ok", lyap_ok}};
  j["energy_test"] = {{"statistic", et.statistic}, {"p_value", et.p_value}, {"k", k0}};
  ctx.emit("mixing.json", j);
  ctx.result.checks_passed = mix.conclusive && mix.gamma < 1.0 && overlap && lyap_ok && envelope_ok &&
                             st.min_cov_eig >= -1e-10 && et.p_value >= 0.01;
}

void stage_report(Context& ctx) {
  for (const char* f : {"model.json", "dichotomy.json", "pi.json", "certificate.json", "ladder.json",
                        "simulate.json", "density.json", "mixing.json"})
    ctx.need(f);
  Json dich = read_json(ctx.dir / "dichotomy.json");
  Json pij = read_json(ctx.dir / "pi.json");
  Json cert = read_json(ctx.dir / "certificate.json");
  Json lad = read_json(ctx.dir / "ladder.json");
  Json sim = read_json(ctx.dir / "simulate.json");
  Json den = read_json(ctx.dir / "density.json");
  Json mix = read_json(ctx.dir / "mixing.json");

  Json checks = Json::array();
  bool all = true;
  auto add = [&](const std::string& name, bool ok, const Json& value, const std::string& source) {
    checks.push_back({{"name", name}, {"pass", ok}, {"value", value}, {"artifact", source}});
    all = all && ok;
  };
  add("riesz_projector", dich["riesz_error"].get<double>() < 1e-8, dich["riesz_error"], "dichotomy.json");
  add("feedback_projector",
      pij["fixed_point_error"].get<double>() < 1e-10 && pij["idempotency_error"].get<double>() < 1e-10 &&
          pij["obs_mismatches"].get<long>() == 0,
      pij["norm_pi"], "pi.json");
  add("contraction", cert["ok"].get<bool>() && cert["gamma0_decreasing"].get<bool>(), cert["gamma0"],
      "certificate.json");
  add("tail_contraction", cert["tail_ok"].get<bool>(), lad["gamma"], "ladder.json");
  add("envelope", sim["envelope"]["violations"].get<long>() == 0, sim["envelope"]["violations"], "simulate.json");
  add("blowup", sim["blowup"]["median_ratio"].get<double>() > 1e3, sim["blowup"]["median_ratio"], "simulate.json");
  if (den.contains("probe"))
    add("boundary_exponent",
        std::abs(den["probe"]["slope"].get<double>() - den["probe"]["expected"].get<double>()) <= 0.1,
        den["probe"]["slope"], "density.json");
  add("tv_lipschitz", den["tv"]["stable"].get<bool>(), den["tv"]["max_small"], "density.json");
  add("mixing", mix["mixing"]["conclusive"].get<bool>() && mix["mixing"]["gamma"].get<double>() < 1.0,
      mix["mixing"]["gamma"], "mixing.json");
  add("slln", mix["slln"]["overlap"].get<bool>(), mix["slln"]["overlap"], "mixing.json");
  add("stationary_covariance", mix["lyapunov"]["ok"].get<bool>(), mix["lyapunov"]["frobenius_error"],
      "mixing.json");
  add("stationarity", mix["energy_test"]["p_value"].get<double>() >= 0.01, mix["energy_test"]["p_value"],
      "mixing.json");

  Json j;
  j["gamma0"] = cert["gamma0"];
  j["gamma_k"] = lad["gamma"];
  j["tv_ratio"] = den["tv"]["max_small"];
  j["mixing_fit"] = mix["mixing"];
  j["envelope_violations"] = sim["envelope"]["violations"];
  if (den.contains("probe")) j["probe_slope"] = den["probe"]["slope"];
  j["checks"] = checks;
  j["all_pass"] = all;
  ctx.emit("report.json", j);
  ctx.result.checks_passed = all;
}

void update_manifest(const ExperimentConfig& cfg, const fs::path& dir, Stage stage, const StageResult& res,
                     double seconds) {
  Json man;
  if (fs::exists(dir / "manifest.json")) man = read_json(dir / "manifest.json");
  man["tool_version"] = kToolVersion;
  man["config_hash"] = sha256_hex(config_to_json(cfg).dump());
  for (const auto& a : res.artifacts) man["artifacts"][a] = sha256_hex(read_file((dir / a).string()));
  if (fs::exists(dir / "simulate.json")) man["component_hashes"] = read_json(dir / "simulate.json")["hashes"];
  man["timings"][stage_name(stage)] = seconds;
  write_json(dir / "manifest.json", man);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
  }
  Section top(root, "config", {"model", "control", "kick", "run", "density", "output"});
  ExperimentConfig cfg;
  if (!root.contains("model")) throw ValidationError("model");
  {
    Section s(root["model"], "model",
              {"n", "d", "beta0", "remainder_scale", "b", "n_unstable", "sigma", "obs_idx", "seed"});
    auto& m = cfg.model;
    m.n = s.require<int>("n");
    m.d = s.get("d", m.d);
    m.beta0 = s.get("beta0", m.beta0);
    m.remainder_scale = s.get("remainder_scale", m.remainder_scale);
    m.b = s.get("b", m.b);
    m.n_unstable = s.get("n_unstable", m.n_unstable);
    m.sigma = s.require<double>("sigma");
    m.obs_idx = s.get("obs_idx", m.obs_idx);
    m.seed = s.get<std::uint64_t>("seed", 0);
  }
  if (root.contains("control")) {
    Section s(root["control"], "control", {"geometry", "g", "seed"});
    cfg.control.geometry = s.get<std::string>("geometry", "default");
    if (s.has("g")) cfg.control.g = s.matrix("g");
    cfg.control.seed = s.get<std::uint64_t>("seed", cfg.model.seed);
  } else {
    cfg.control.seed = cfg.model.seed;
  }
  if (!root.contains("kick")) throw ValidationError("kick.eps_hat");
  {
    Section s(root["kick"], "kick", {"K", "entries", "decay", "dense", "eps_hat", "seed", "proposal"});
    auto& k = cfg.kick;
    k.k_kind = s.get<std::string>("K", "diag");
    k.entries = s.get("entries", k.entries);
    k.decay = s.get("decay", k.decay);
    if (s.has("dense")) k.dense = s.matrix("dense");
    k.eps_hat = s.require<double>("eps_hat");
    k.seed = s.get<std::uint64_t>("seed", cfg.model.seed);
    k.proposal = s.get<std::string>("proposal", k.proposal);
  }
  if (!root.contains("run")) throw ValidationError("run.tau");
  {
    Section s(root["run"], "run",
              {"tau", "n_steps", "n_chains", "burn_in", "ladder_levels", "mixing_chains", "mixing_steps", "w0_norm",
               "slln_steps", "stationary_steps", "demo_chains"});
    auto& r = cfg.run;
    r.tau = s.require<double>("tau");
    r.n_steps = s.get("n_steps", r.n_steps);
    r.n_chains = s.get("n_chains", r.n_chains);
    if (s.has("burn_in")) r.burn_in = s.require<int>("burn_in");
    r.ladder_levels = s.get("ladder_levels", r.ladder_levels);
    r.mixing_chains = s.get("mixing_chains", r.mixing_chains);
    r.mixing_steps = s.get("mixing_steps", r.mixing_steps);
    r.w0_norm = s.get("w0_norm", r.w0_norm);
    r.slln_steps = s.get("slln_steps", r.slln_steps);
    r.stationary_steps = s.get("stationary_steps", r.stationary_steps);
    r.demo_chains = s.get("demo_chains", r.demo_chains);
  }
  if (root.contains("density")) {
    Section s(root["density"], "density",
              {"alpha_source", "alpha", "K", "eps", "level", "radial", "angular", "grid", "mc_samples", "tv_pairs"});
    auto& d = cfg.density;
    d.alpha_source = s.get<std::string>("alpha_source", d.alpha_source);
    if (s.has("alpha")) d.alpha = s.matrix("alpha");
    if (s.has("K")) d.k = s.matrix("K");
    d.eps = s.get("eps", d.eps);
    d.level = s.get("level", d.level);
    d.radial = s.get("radial", d.radial);
    d.angular = s.get("angular", d.angular);
    d.grid = s.get("grid", d.grid);
    d.mc_samples = s.get("mc_samples", d.mc_samples);
    d.tv_pairs = s.get("tv_pairs", d.tv_pairs);
  }
  if (root.contains("output")) {
    Section s(root["output"], "output", {"dir"});
    cfg.output_dir = s.get<std::string>("dir", cfg.output_dir);
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  if (!fs::exists(path)) throw IoError("config not found: " + path);
  return parse_config(read_file(path));
}

Json config_to_json(const ExperimentConfig& cfg) {
  Json j;
  const auto& m = cfg.model;
  j["model"] = {{"n", m.n},       {"d", m.d},     {"beta0", m.beta0},           {"remainder_scale", m.remainder_scale},
                {"b", m.b},       {"n_unstable", m.n_unstable}, {"sigma", m.sigma}, {"obs_idx", m.obs_idx},
                {"seed", m.seed}};
  j["control"] = {{"geometry", cfg.control.geometry}, {"seed", cfg.control.seed}};
  if (cfg.control.g.size()) j["control"]["g"] = to_json(cfg.control.g);
  const auto& k = cfg.kick;
  j["kick"] = {{"K", k.k_kind}, {"decay", k.decay}, {"eps_hat", k.eps_hat}, {"seed", k.seed}, {"proposal", k.proposal}};
  if (!k.entries.empty()) j["kick"]["entries"] = k.entries;
  if (k.dense.size()) j["kick"]["dense"] = to_json(k.dense);
  const auto& r = cfg.run;
  j["run"] = {{"tau", r.tau},
              {"n_steps", r.n_steps},
              {"n_chains", r.n_chains},
              {"ladder_levels", r.ladder_levels},
              {"mixing_chains", r.mixing_chains},
              {"mixing_steps", r.mixing_steps},
              {"w0_norm", r.w0_norm},
              {"slln_steps", r.slln_steps},
              {"stationary_steps", r.stationary_steps},
              {"demo_chains", r.demo_chains}};
  if (r.burn_in) j["run"]["burn_in"] = *r.burn_in;
  const auto& d = cfg.density;
  j["density"] = {{"alpha_source", d.alpha_source}, {"eps", d.eps},           {"level", d.level},
                  {"radial", d.radial},             {"angular", d.angular},   {"grid", d.grid},
                  {"mc_samples", d.mc_samples},     {"tv_pairs", d.tv_pairs}};
  if (d.alpha.size()) j["density"]["alpha"] = to_json(d.alpha);
  if (d.k.size()) j["density"]["K"] = to_json(d.k);
  j["output"] = {{"dir", cfg.output_dir}};
  return j;
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  write_file(path, config_to_json(cfg).dump(2) + "\n");
}

void override_seeds(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.model.seed = seed;
  cfg.control.seed = seed;
  cfg.kick.seed = seed;
}

std::optional<Stage> parse_stage(const std::string& name) {
  static const std::map<std::string, Stage> table = {
      {"synth", Stage::Synth},     {"dichotomy", Stage::Dichotomy}, {"certify", Stage::Certify},
      {"simulate", Stage::Simulate}, {"density", Stage::Density},   {"mixing", Stage::Mixing},
      {"report", Stage::Report}};
  auto it = table.find(name);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::Synth: return "synth";
    case Stage::Dichotomy: return "dichotomy";
    case Stage::Certify: return "certify";
    case Stage::Simulate: return "simulate";
    case Stage::Density: return "density";
    case Stage::Mixing: return "mixing";
    case Stage::Report: return "report";
  }
  return "unknown";
}

StageResult run_command(Stage stage, const ExperimentConfig& cfg, int threads) {
  fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  Context ctx{cfg, dir, threads, {}};
  auto t0 = std::chrono::steady_clock::now();
  try {
    switch (stage) {
      case Stage::Synth: stage_synth(ctx); break;
      case Stage::Dichotomy: stage_dichotomy(ctx); break;
      case Stage::Certify: stage_certify(ctx); break;
      case Stage::Simulate: stage_simulate(ctx); break;
      case Stage::Density: stage_density(ctx); break;
      case Stage::Mixing: stage_mixing(ctx); break;
      case Stage::Report: stage_report(ctx); break;
    }
  } catch (const MissingPrerequisite&) {
    throw;
  } catch (const Error& e) {
    throw Error(stage_name(stage) + ": " + e.what());
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  update_manifest(cfg, dir, stage, ctx.result, secs);
  return ctx.result;
}

StageResult run_pipeline(const ExperimentConfig& cfg, int threads) {
  StageResult total;
  for (Stage s : {Stage::Synth, Stage::Dichotomy, Stage::Certify, Stage::Simulate, Stage::Density, Stage::Mixing,
                  Stage::Report}) {
    StageResult r = run_command(s, cfg, threads);
    total.checks_passed = total.checks_passed && r.checks_passed;
    total.artifacts.insert(total.artifacts.end(), r.artifacts.begin(), r.artifacts.end());
  }
  return total;
}

std::map<std::string, std::string> manifest_checksums(const std::string& dir) {
  Json man = read_json(fs::path(dir) / "manifest.json");
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : man["artifacts"].items()) out[k] = v.get<std::string>();
  return out;
}

}  // namespace kickstab
