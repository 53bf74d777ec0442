// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include "kickstab/kick_measure.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "kickstab/errors.hpp"
#include "kickstab/quadrature.hpp"

namespace kickstab {
namespace {

constexpr std::uint64_t kPilotStream = 0x9170;
constexpr std::uint64_t kMassStream = 0x4d55;

double log_unit_ball_volume(int n) {
  return 0.5 * n * std::log(std::numbers::pi) - std::lgamma(0.5 * n + 1.0);
}

// Uniform draw from the ball of radius eps in R^n.
Vec uniform_ball(RngStream& rng, int n, double eps) {
  Vec z = rng.normal_vector(n);
  double nz = z.norm();
  while (nz == 0.0) {
    z = rng.normal_vector(n);
    nz = z.norm();
  }
  return z * (eps * std::pow(rng.uniform(), 1.0 / n) / nz);
}

double quad_form(const KickLaw& law, const Vec& y) {
  return y.dot(law.precision * y);
}

// log of (vol(B) * g(0)); mass = exp(this) * E_U[exp(-q/2)].
double log_ball_scale(const KickLaw& law) {
  int n = law.n();
  return log_unit_ball_volume(n) + n * std::log(law.eps_hat) - 0.5 * n * std::log(2.0 * std::numbers::pi) -
         0.5 * law.log_det_k;
}

}  // namespace

double KickLaw::c_hat() const { return std::exp(-log_mass); }

double KickLaw::log_gaussian_density(const Vec& y) const {
  return -0.5 * quad_form(*this, y) - 0.5 * n() * std::log(2.0 * std::numbers::pi) - 0.5 * log_det_k;
}

double KickLaw::gaussian_density(const Vec& y) const { return std::exp(log_gaussian_density(y)); }

Mat power_law_covariance(int n, double decay) {
  Vec diag(n);
  for (int j = 0; j < n; ++j) diag[j] = std::pow(static_cast<double>(j + 1), -decay);
  return diag.asDiagonal();
}

KickLaw make_kick_law(const Mat& k, double eps_hat, const KickLawOptions& opts) {
  if (k.rows() != k.cols() || k.rows() == 0) throw std::invalid_argument("kick covariance must be square");
  if (!(eps_hat >= 0.0)) throw std::invalid_argument("eps_hat must be nonnegative");
  double scale = std::max(1.0, k.cwiseAbs().maxCoeff());
  if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("kick covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(k, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > 0.0)) throw DegenerateCovariance("kick covariance is not positive definite");

  KickLaw law;
  law.k = k;
  law.eps_hat = eps_hat;
  law.seed = opts.seed;
  law.stream = opts.stream;
  Eigen::LLT<Mat> llt(k);
  if (llt.info() != Eigen::Success) throw DegenerateCovariance("Cholesky factorization failed");
  law.chol_l = llt.matrixL();
  law.precision = llt.solve(Mat::Identity(k.rows(), k.cols()));
  law.log_det_k = 2.0 * law.chol_l.diagonal().array().log().sum();
  if (law.degenerate()) {
    law.proposal = Proposal::Gaussian;
    return law;
  }

  const int n = law.n();
  const double log_scale = log_ball_scale(law);

  // Pilot: mean acceptance of the ball proposal; the Gaussian proposal accepts
  // with probability mass = exp(log_scale) * p_ball.
  RngStream pilot(opts.seed, kPilotStream);
  double acc_ball = 0.0;
  for (int i = 0; i < opts.pilot_samples; ++i)
    acc_ball += std::exp(-0.5 * quad_form(law, uniform_ball(pilot, n, eps_hat)));
  acc_ball /= opts.pilot_samples;
  double log_acc_gauss = std::min(0.0, log_scale + std::log(acc_ball));
  bool ball_better = std::log(acc_ball) > log_acc_gauss;

  switch (opts.proposal) {
    case Proposal::Gaussian:
      law.proposal = Proposal::Gaussian;
      break;
    case Proposal::UniformBall:
      law.proposal = Proposal::UniformBall;
      break;
    case Proposal::Auto:
      law.proposal = ball_better ? Proposal::UniformBall : Proposal::Gaussian;
      break;
  }
  law.acceptance_estimate = law.proposal == Proposal::UniformBall ? acc_ball : std::exp(log_acc_gauss);

  bool use_quad = opts.norm_method == NormMethod::Quadrature || (opts.norm_method == NormMethod::Auto && n <= 3);
  if (use_quad) {
    if (n > 3) throw std::invalid_argument("quadrature normalization needs n <= 3");
    double mass = quad::ball_integrate(n, eps_hat, [&](const Vec& y) { return law.gaussian_density(y); });
    law.log_mass = std::log(std::min(mass, 1.0));
    law.mass_rel_se = 0.0;
    return law;
  }

  RngStream rng(opts.seed, kMassStream);
  const int ns = opts.norm_samples;
  if (ball_better) {
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < ns; ++i) {
      double w = std::exp(-0.5 * quad_form(law, uniform_ball(rng, n, eps_hat)));
      sum += w;
      sum2 += w * w;
    }
    double mean = sum / ns;
    double var = std::max(0.0, sum2 / ns - mean * mean);
    law.log_mass = std::min(0.0, log_scale + std::log(mean));
    law.mass_rel_se = std::sqrt(var / ns) / mean;
  } else {
    long hits = 0;
    double eps2 = eps_hat * eps_hat;
    for (int i = 0; i < ns; ++i) {
      Vec y = law.chol_l * rng.normal_vector(n);
      if (y.squaredNorm() <= eps2) ++hits;
    }
    double p = static_cast<double>(hits) / ns;
    if (hits == 0) throw RejectionCap("ball mass estimate has no hits in " + std::to_string(ns) + " draws");
    law.log_mass = std::log(p);
    law.mass_rel_se = std::sqrt(p * (1.0 - p) / ns) / p;
  }
  return law;
}

Vec KickSampler::sample() {
  const KickLaw& law = *law_;
  const int n = law.n();
  if (law.degenerate()) return Vec::Zero(n);
  const double eps2 = law.eps_hat * law.eps_hat;
  for (;;) {
    Vec y;
    bool accept;
    if (law.proposal == Proposal::UniformBall) {
      y = uniform_ball(rng_, n, law.eps_hat);
      accept = rng_.uniform() < std::exp(-0.5 * quad_form(law, y));
    } else {
      y = law.chol_l * rng_.normal_vector(n);
      accept = y.squaredNorm() <= eps2;
    }
    ++window_draws_;
    if (accept) ++window_accepts_;
    if (window_draws_ >= kWindow) {
      double rate = static_cast<double>(window_accepts_) / window_draws_;
      window_draws_ = 0;
      window_accepts_ = 0;
      if (rate < kMinAcceptance)
        throw RejectionCap("acceptance rate " + std::to_string(rate) + " over " + std::to_string(kWindow) +
                           " proposals");
    }
    if (accept) return y;
  }
}

bool support_ellipsoid_membership(const Mat& alpha, double eps_hat, const Vec& x) {
  const Eigen::Index m = alpha.cols();
  Mat normal = alpha.transpose() * alpha + Mat::Identity(m, m);
  Vec yhat = normal.llt().solve(alpha.transpose() * x);
  double lhs = (x - alpha * yhat).squaredNorm() + yhat.squaredNorm();
  return lhs <= eps_hat * eps_hat;
}

Mat projector_range(const Mat& q) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (q + q.transpose()));
  int r = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()[i] > 0.5) ++r;
  // Eigenvalues ascend; the range is spanned by the trailing block.
  return es.eigenvectors().rightCols(r);
}

KickLaw project_law(const Mat& q, const KickLaw& law, KickLawOptions opts) {
  Mat u = projector_range(q);
  Mat kr = u.transpose() * law.k * u;
  kr = 0.5 * (kr + kr.transpose());
  if (kr.rows() == 0) throw DegenerateCovariance("projector has empty range");
  Eigen::SelfAdjointEigenSolver<Mat> es(kr, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < 1e-14)
    throw DegenerateCovariance("restricted covariance eigenvalue " + std::to_string(es.eigenvalues().minCoeff()));
  if (opts.seed == 0 && opts.stream == 0) {
    opts.seed = law.seed;
    opts.stream = law.stream + 1;
  }
  return make_kick_law(kr, law.eps_hat, opts);
}

double qnu_density(const KickLaw& projected, const Vec& y) {
  if (y.squaredNorm() > projected.eps_hat * projected.eps_hat) return 0.0;
  return std::exp(projected.log_gaussian_density(y) - projected.log_mass);
}

double qnu_density(const Mat& q, const KickLaw& law, const Vec& y) {
  return qnu_density(project_law(q, law), y);
}

}  // namespace kickstab
