// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include "kickstab/rds_engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "kickstab/errors.hpp"
#include "kickstab/serialize.hpp"

namespace kickstab {
namespace {

constexpr std::uint64_t kChainStream = 0xC4A1;

}  // namespace

double stage_threshold(double norm_pi, double eps_hat, double gamma0) {
  if (gamma0 >= 1.0) return std::numeric_limits<double>::infinity();
  return norm_pi * eps_hat / (1.0 - gamma0);
}

double ControlledSystem::r0() const { return stage_threshold(pi.norm_pi, law.eps_hat, gamma0); }

ControlledSystem make_system(const OseenModel& model, const Dichotomy& dich, const FeedbackProjector& pi,
                             const KickLaw& law, double tau) {
  ControlledSystem sys;
  const Mat s = semigroup(model, tau);
  sys.s = s * dich.p_sigma;
  sys.tau = tau;
  sys.dich = dich;
  sys.pi = pi;
  sys.law = law;
  sys.gamma0 = contraction_certificate(dich, s).gamma0;
  return sys;
}

RngStream chain_stream(std::uint64_t seed, std::uint64_t chain) { return RngStream(seed, kChainStream).child(chain); }

Vec step(const Mat& s, const FeedbackProjector& pi, KickSampler& sampler, const Vec& w) {
  Vec next = s * w;
  next.noalias() += pi.pi * sampler.sample();
  return next;
}

Trajectory run_chain(const ChainConfig& cfg, const ControlledSystem& sys) {
  const int n = sys.n();
  if (cfg.w0.size() != n) throw std::invalid_argument("w0 has wrong dimension");
  if (sys.dich.m > 0 && (sys.dich.d.transpose() * cfg.w0).norm() >= 1e-10 * std::max(1.0, cfg.w0.norm()))
    throw std::invalid_argument("w0 is not in X_sigma");

  Trajectory traj;
  traj.seed = cfg.seed;
  traj.chain = cfg.chain;
  traj.r0 = sys.r0();
  traj.model_hash = matrix_hash(sys.s);
  traj.pi_hash = matrix_hash(sys.pi.pi);
  traj.law_hash = law_hash(sys.law);
  traj.norms.reserve(cfg.n_steps + 1);
  if (cfg.record_states) traj.states.resize(n, cfg.n_steps + 1);
  if (cfg.record_kicks) traj.kicks.resize(n, cfg.n_steps);

  KickSampler sampler(sys.law, chain_stream(cfg.seed, cfg.chain));
  Vec w = cfg.w0;
  auto record = [&](int k) {
    double nw = w.norm();
    traj.norms.push_back(nw);
    if (cfg.record_states) traj.states.col(k) = w;
    if (sys.dich.m > 0) traj.max_dt_residual = std::max(traj.max_dt_residual, (sys.dich.d.transpose() * w).norm());
    if (traj.first_entry < 0 && nw <= traj.r0) traj.first_entry = k;
  };
  record(0);
  for (int k = 1; k <= cfg.n_steps; ++k) {
    Vec next = sys.s * w;
    if (!sys.law.degenerate()) {
      Vec phi = sampler.sample();
      if (cfg.record_kicks) traj.kicks.col(k - 1) = phi;
      next.noalias() += sys.pi.pi * phi;
    } else if (cfg.record_kicks) {
      traj.kicks.col(k - 1).setZero();
    }
    w = std::move(next);
    record(k);
  }
  return traj;
}

std::vector<Trajectory> run_ensemble(const ControlledSystem& sys, const Vec& w0, int n_chains, int n_steps,
                                     std::uint64_t seed, int threads, bool record_states) {
  std::vector<Trajectory> out(n_chains);
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::max(1, std::min(threads, n_chains));
  auto work = [&](int t) {
    for (int c = t; c < n_chains; c += threads) {
      ChainConfig cfg;
      cfg.tau = sys.tau;
      cfg.n_steps = n_steps;
      cfg.w0 = w0;
      cfg.seed = seed;
      cfg.chain = static_cast<std::uint64_t>(c);
      cfg.record_states = record_states;
      out[c] = run_chain(cfg, sys);
    }
  };
  if (threads == 1) {
    work(0);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        work(t);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

void envelope_accumulate(EnvelopeReport& rep, const Trajectory& traj, double gamma0, double norm_pi, double eps_hat,
                         double tol) {
  rep.certificate_valid = gamma0 < 1.0;
  if (!rep.certificate_valid) {
    rep.bound_offset = std::numeric_limits<double>::infinity();
    return;
  }
  rep.bound_offset = stage_threshold(norm_pi, eps_hat, gamma0);
  if (traj.norms.empty()) return;
  double w0 = traj.norms.front();
  double gk = 1.0;
  for (double nk : traj.norms) {
    double residual = nk - (gk * w0 + rep.bound_offset);
    rep.max_residual = std::max(rep.max_residual, residual);
    if (residual > tol) ++rep.violations;
    ++rep.checked;
    gk *= gamma0;
  }
}

EnvelopeReport envelope_check(const Trajectory& traj, double gamma0, double norm_pi, double eps_hat, double tol) {
  EnvelopeReport rep;
  envelope_accumulate(rep, traj, gamma0, norm_pi, eps_hat, tol);
  return rep;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw std::invalid_argument("fit_line needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return fit;
}

UncontrolledRun uncontrolled_demo(const OseenModel& model, const KickLaw& law, const Vec& w0, int n_steps, double tau,
                                  std::uint64_t seed, std::uint64_t chain, bool require_unstable) {
  if (require_unstable) {
    Eigen::EigenSolver<Mat> es(model.a, false);
    if (!(es.eigenvalues().real().minCoeff() < 0.0)) throw NotUnstable("no eigenvalue with negative real part");
  }
  if (n_steps < 2) throw std::invalid_argument("uncontrolled_demo needs at least two steps");
  Mat s = semigroup(model, tau);
  KickSampler sampler(law, chain_stream(seed, chain));
  UncontrolledRun run;
  Vec w = w0;
  run.norms.push_back(w.norm());
  for (int k = 1; k <= n_steps; ++k) {
    Vec next = s * w;
    if (!law.degenerate()) next += sampler.sample();
    w = std::move(next);
    run.norms.push_back(w.norm());
  }
  std::vector<double> xs, ys;
  for (int k = n_steps / 2; k <= n_steps; ++k) {
    if (run.norms[k] <= 0.0) continue;
    xs.push_back(k);
    ys.push_back(std::log(run.norms[k]));
  }
  if (xs.size() >= 2) {
    LineFit fit = fit_line(xs, ys);
    run.slope = fit.slope;
    run.intercept = fit.intercept;
  } else {
    run.slope = -std::numeric_limits<double>::infinity();
  }
  return run;
}

}  // namespace kickstab
