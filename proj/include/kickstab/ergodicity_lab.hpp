// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kickstab/density_geometry.hpp"
#include "kickstab/rds_engine.hpp"

namespace kickstab {

/// f(w) = clip(<u, w> / scale) or f(w) = clip(a - |w - c| / scale), values in
/// [-1, 1]; scale >= 1 keeps the Lipschitz constant <= 1.
struct Observable {
  enum class Kind { Linear, Radial } kind = Kind::Linear;
  Vec u;
  Vec c;
  double a = 0.0;
  double scale = 1.0;

  double operator()(const Vec& w) const;
  double lipschitz() const { return 1.0 / scale; }
};

struct ObservableSet {
  std::vector<Observable> items;
  std::size_t size() const { return items.size(); }
};

/// n_linear clipped linear and n_radial radial observables with directions
/// and centers drawn in span(basis) from the seed.
ObservableSet make_observables(const Mat& basis, double scale, std::uint64_t seed, int n_linear = 20,
                               int n_radial = 10);

struct TvStats {
  std::vector<double> separations;
  std::vector<double> ratios;
  double max_small = 0.0;  // separations below sqrt(lo * hi)
  double max_large = 0.0;
  bool stable = false;     // max_small / max_large within [1/2, 2]
};

/// Ratios over n_pairs random pairs with |v1 - v2| log-uniform in
/// [lo, hi] * eps.
TvStats tv_ratio_stats(const PiDecomposition& dec, const KickLaw& law, double eps, int n_pairs, std::uint64_t seed,
                       double lo = 1e-3, double hi = 1e-1, const TvOptions& opts = {});

/// Density apparatus for one ladder level: u on X_sigma^perp, v on
/// X_{sigma sigma_k}, alpha extracted from Pi, and the kick law restricted to
/// the reduced coordinates and truncated there.
struct DensitySetup {
  PiDecomposition dec;
  KickLaw law;
  double eps = 0.0;
  Mat basis;  // n x (m + nm), [E_b, middle]
};

DensitySetup reduced_density_setup(const SigmaLadder& ladder, const Dichotomy& dich, const FeedbackProjector& pi,
                                   const KickLaw& law, int level = 1, const KickLawOptions& opts = {});

struct ConditionReport {
  double gamma0 = 0.0;
  bool contraction_ok = false;
  std::vector<double> gammas;
  bool tail_ok = false;
  bool degenerate_law = false;
  bool tv_applicable = false;
  TvStats tv;
  bool tv_ok = false;
  bool all_ok() const { return contraction_ok && tail_ok && tv_applicable && tv_ok; }
};

/// Checks contraction on X_sigma, strictly decreasing tail constants with
/// gamma_K < gamma0 / 2, and stability of the TV ratio of the reduced law.
ConditionReport condition_check(const OseenModel& model, const Dichotomy& dich, const SigmaLadder& ladder,
                                const FeedbackProjector& pi, const KickLaw& law, double tau, int tv_pairs = 20,
                                std::uint64_t seed = 0, const TvOptions& tv_opts = {});

struct MixingReport {
  std::vector<double> d;       // max over observables of |mean_A f - mean_B f|
  std::vector<double> null_d;  // same with both ensembles started at w0_A
  double noise_floor = 0.0;
  int window_lo = 0;
  int window_hi = -1;
  double c = 0.0;
  double gamma = 0.0;
  double r2 = 0.0;
  bool conclusive = false;
  std::string note;
};

/// Two ensembles from w0_A and w0_B on independent kick streams, plus a null
/// pair from w0_A, compared through the observables; log-linear fit of d_k
/// from k = 2 while d_k stays above 3x the noise floor.
MixingReport mixing_decay(const ControlledSystem& sys, const Vec& w0_a, const Vec& w0_b, int n_chains, int n_steps,
                          const ObservableSet& obs, std::uint64_t seed, int threads = 0);

struct SllnReport {
  int n_steps = 0;
  std::vector<int> checkpoints;
  std::vector<std::vector<double>> f_avg;  // per checkpoint, per observable
  std::vector<Vec> state_avg;              // per checkpoint
  Vec state_mean;
  Vec state_ci;  // 95% batch-means half width per coordinate
  std::vector<double> f_mean;
  std::vector<double> f_ci;
};

inline constexpr int kBatches = 30;

/// Running averages along one chain with 30-batch confidence intervals.
SllnReport slln_average(const ControlledSystem& sys, const Vec& w0, int n_steps, const ObservableSet& obs,
                        std::uint64_t seed, std::vector<int> checkpoints = {});

/// ceil(log(eps / |w0|) / log gamma0), 0 when |w0| <= eps.
int default_burn_in(double eps_hat, double w0_norm, double gamma0);

struct StationaryStats {
  int n_samples = 0;
  Vec mean;
  Mat cov;
  Mat cov_se;  // batch-means standard error per entry
  double min_cov_eig = 0.0;
  double max_norm = 0.0;
  std::vector<double> hist_edges;
  std::vector<long> hist_counts;
};

StationaryStats stationary_stats(const ControlledSystem& sys, const Vec& w0, int n_steps, int burn_in,
                                 std::uint64_t seed, int hist_bins = 20);

/// Solution of Sigma = T Sigma T^T + Q with T acting on span(basis), by a
/// Kronecker solve in basis coordinates.
Mat discrete_lyapunov(const Mat& t, const Mat& q, const Mat& basis);

struct EnergyTest {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample energy-distance permutation test on the columns of x and y.
EnergyTest energy_distance_test(const Mat& x, const Mat& y, int permutations, std::uint64_t seed);

}  // namespace kickstab
