// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "kickstab/feedback_ops.hpp"
#include "kickstab/kick_measure.hpp"
#include "kickstab/model_builder.hpp"
#include "kickstab/spectral_dichotomy.hpp"

namespace kickstab {

/// Everything the controlled recursion needs, fixed once.
struct ControlledSystem {
  Mat s;  // S(tau) P_sigma, so roundoff never seeds the unstable modes
  double tau = 0.0;
  Dichotomy dich;
  FeedbackProjector pi;
  KickLaw law;
  double gamma0 = 0.0;

  int n() const { return static_cast<int>(s.rows()); }
  /// Stage threshold r0 = ||Pi|| eps / (1 - gamma0); +inf if gamma0 >= 1.
  double r0() const;
};

ControlledSystem make_system(const OseenModel& model, const Dichotomy& dich, const FeedbackProjector& pi,
                             const KickLaw& law, double tau);

/// Per-chain kick stream, shared by the controlled and uncontrolled runs so
/// both see the same kicks.
RngStream chain_stream(std::uint64_t seed, std::uint64_t chain);

/// r0 = ||Pi|| eps / (1 - gamma0).
double stage_threshold(double norm_pi, double eps_hat, double gamma0);

/// w' = S w + Pi phi with phi drawn from the sampler.
Vec step(const Mat& s, const FeedbackProjector& pi, KickSampler& sampler, const Vec& w);

struct ChainConfig {
  double tau = 0.0;  // informational; S is taken from the system
  int n_steps = 0;
  Vec w0;
  std::uint64_t seed = 0;
  std::uint64_t chain = 0;
  bool record_kicks = false;
  bool record_states = true;
};

struct Trajectory {
  Mat states;  // n x (N+1), empty unless recorded
  std::vector<double> norms;
  Mat kicks;  // n x N, empty unless recorded
  double max_dt_residual = 0.0;  // max_k ||D^T w^k||
  double r0 = 0.0;
  int first_entry = -1;  // first k with ||w^k|| <= r0, -1 if never
  std::uint64_t seed = 0;
  std::uint64_t chain = 0;
  std::string model_hash;
  std::string pi_hash;
  std::string law_hash;
};

/// Throws std::invalid_argument if w0 is not in X_sigma (||D^T w0|| >= 1e-10).
Trajectory run_chain(const ChainConfig& cfg, const ControlledSystem& sys);

/// Independent chains from (seed, chain index), run on `threads` workers.
/// The result does not depend on the thread count.
std::vector<Trajectory> run_ensemble(const ControlledSystem& sys, const Vec& w0, int n_chains, int n_steps,
                                     std::uint64_t seed, int threads = 0, bool record_states = false);

struct EnvelopeReport {
  bool certificate_valid = false;
  long violations = 0;
  long checked = 0;
  double max_residual = -std::numeric_limits<double>::infinity();  // max ||w^k|| - bound_k
  double bound_offset = 0.0;                                        // ||Pi|| eps / (1 - gamma0)
};

/// Checks ||w^k|| <= gamma0^k ||w^0|| + ||Pi|| eps / (1 - gamma0) per step.
EnvelopeReport envelope_check(const Trajectory& traj, double gamma0, double norm_pi, double eps_hat,
                              double tol = 1e-9);
void envelope_accumulate(EnvelopeReport& rep, const Trajectory& traj, double gamma0, double norm_pi,
                         double eps_hat, double tol = 1e-9);

struct UncontrolledRun {
  std::vector<double> norms;
  double slope = 0.0;  // per-step growth of log ||w||, tail-half least squares
  double intercept = 0.0;
};

/// w^{k+1} = S w^k + phi^{k+1} on the full space. Throws NotUnstable when no
/// eigenvalue has negative real part unless require_unstable is false.
UncontrolledRun uncontrolled_demo(const OseenModel& model, const KickLaw& law, const Vec& w0, int n_steps,
                                  double tau, std::uint64_t seed, std::uint64_t chain = 0,
                                  bool require_unstable = true);

/// Least-squares line through (x_i, y_i): returns {slope, intercept, r2}.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace kickstab
