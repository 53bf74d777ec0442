// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "kickstab/rng.hpp"
#include "kickstab/types.hpp"

namespace kickstab {

/// Rejection proposal for the ball-truncated Gaussian.
///
/// Gaussian: draw N(0, K), accept inside the ball. UniformBall: draw uniformly
/// in the ball, accept with probability exp(-y^T K^{-1} y / 2). Both are exact;
/// Auto picks whichever has the larger acceptance rate from a pilot run.
enum class Proposal { Gaussian, UniformBall, Auto };

enum class NormMethod { Auto, MonteCarlo, Quadrature };

struct KickLawOptions {
  Proposal proposal = Proposal::Gaussian;
  NormMethod norm_method = NormMethod::Auto;
  int norm_samples = 200000;
  int pilot_samples = 4000;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// N(0, K) conditioned on the ball of radius eps_hat. eps_hat = 0 is the
/// degenerate law concentrated at the origin.
struct KickLaw {
  Mat k;
  double eps_hat = 0.0;
  Mat chol_l;     // K = L L^T
  Mat precision;  // K^{-1}
  double log_det_k = 0.0;
  Proposal proposal = Proposal::Gaussian;  // resolved, never Auto
  double acceptance_estimate = 1.0;
  // Gaussian mass of the ball G(B) = 1 / c_hat, kept in log form.
  double log_mass = 0.0;
  double mass_rel_se = 0.0;  // standard error of the mass, relative
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  int n() const { return static_cast<int>(k.rows()); }
  bool degenerate() const { return eps_hat == 0.0; }
  double c_hat() const;
  /// Normalized N(0, K) density (not truncated).
  double gaussian_density(const Vec& y) const;
  double log_gaussian_density(const Vec& y) const;
};

/// Validates symmetry (1e-12) and positive definiteness, factors K, resolves
/// the proposal and estimates the ball mass.
KickLaw make_kick_law(const Mat& k, double eps_hat, const KickLawOptions& opts = {});

/// diag(j^{-decay}), j = 1..n.
Mat power_law_covariance(int n, double decay = 2.0);

/// Stateful sampler owning one random stream.
class KickSampler {
 public:
  static constexpr long kWindow = 1000000;
  static constexpr double kMinAcceptance = 1e-4;

  KickSampler(const KickLaw& law, RngStream rng) : law_(&law), rng_(std::move(rng)) {}
  KickSampler(const KickLaw& law, std::uint64_t stream) : KickSampler(law, RngStream(law.seed, stream)) {}

  /// One kick; throws RejectionCap when the acceptance rate over a window of
  /// 10^6 proposals drops below 1e-4.
  Vec sample();

  RngStream& rng() { return rng_; }

 private:
  const KickLaw* law_;
  RngStream rng_;
  long window_draws_ = 0;
  long window_accepts_ = 0;
};

/// Convenience wrapper over KickSampler::sample.
inline Vec sample_kick(KickSampler& sampler) { return sampler.sample(); }

/// Whether x (coordinates in an orthonormal basis of X_sigma) lies in the
/// image of the kick ball under phi -> alpha u + v, with alpha the restriction
/// of the feedback projection to X_sigma^perp.
bool support_ellipsoid_membership(const Mat& alpha, double eps_hat, const Vec& x);

/// Orthonormal basis of the range of an orthogonal projector.
Mat projector_range(const Mat& q);

/// The law N(0, U^T K U) truncated to the eps_hat ball of range(Q), in the
/// coordinates of U = projector_range(Q). Throws DegenerateCovariance if the
/// restricted covariance has an eigenvalue below 1e-14.
KickLaw project_law(const Mat& q, const KickLaw& law, KickLawOptions opts = {});

/// c_hat * chi_{eps}(y) * g(y) for a law built by project_law.
double qnu_density(const KickLaw& projected, const Vec& y);
double qnu_density(const Mat& q, const KickLaw& law, const Vec& y);

}  // namespace kickstab
