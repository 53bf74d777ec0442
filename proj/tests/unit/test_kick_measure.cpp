// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kickstab/errors.hpp"
#include "kickstab/kick_measure.hpp"
#include "kickstab/quadrature.hpp"
#include "kickstab/serialize.hpp"
#include "reference.hpp"

namespace kickstab {
namespace {

using testing::Reference;

Mat diag3(double a, double b, double c) {
  Vec d(3);
  d << a, b, c;
  return d.asDiagonal();
}

TEST(KickLaw, SamplesStayInTheBall) {
  for (Proposal p : {Proposal::Gaussian, Proposal::UniformBall}) {
    KickLawOptions o;
    o.proposal = p;
    o.seed = 3;
    KickLaw law = make_kick_law(power_law_covariance(6), 0.4, o);
    KickSampler s(law, 1);
    for (int i = 0; i < 20000; ++i) EXPECT_LE(s.sample().norm(), 0.4);
  }
}

TEST(KickLaw, NearUntruncatedCovarianceMatchesK) {
  Mat k = diag3(1.0, 0.5, 0.25);
  k(0, 1) = k(1, 0) = 0.2;
  KickLawOptions o;
  o.seed = 4;
  KickLaw law = make_kick_law(k, 10.0 * std::sqrt(k.trace()), o);
  KickSampler s(law, 0);
  const int n = 1000000;
  Mat sum = Mat::Zero(3, 3), sum2 = Mat::Zero(3, 3);
  for (int i = 0; i < n; ++i) {
    Vec y = s.sample();
    Mat o2 = y * y.transpose();
    sum += o2;
    sum2 += o2.cwiseAbs2();
  }
  Mat mean = sum / n;
  Mat se = ((sum2 / n - mean.cwiseAbs2()) / n).cwiseSqrt();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_LE(std::abs(mean(i, j) - k(i, j)), 3.0 * se(i, j)) << i << "," << j;
}

TEST(KickLaw, TinyBallHitsTheRejectionCap) {
  KickLawOptions o;
  o.proposal = Proposal::Gaussian;
  o.seed = 5;
  o.norm_samples = 10000;
  KickLaw law = make_kick_law(Mat::Identity(50, 50), 1e-6, o);
  KickSampler s(law, 0);
  EXPECT_THROW(s.sample(), RejectionCap);
}

TEST(KickLaw, AutoProposalPicksTheBallWhenItIsSmall) {
  KickLawOptions o;
  o.proposal = Proposal::Auto;
  o.seed = 6;
  const auto& ref = Reference::get();
  EXPECT_EQ(ref.law.proposal, Proposal::UniformBall);
  EXPECT_GT(ref.law.acceptance_estimate, 0.9);
  KickLaw wide = make_kick_law(diag3(1.0, 1.0, 1.0), 30.0, o);
  EXPECT_EQ(wide.proposal, Proposal::Gaussian);
}

TEST(KickLaw, QuadratureMassMatchesMonteCarlo) {
  Mat k = diag3(1.0, 0.25, 1.0 / 9.0);
  KickLawOptions q;
  q.norm_method = NormMethod::Quadrature;
  KickLawOptions m;
  m.norm_method = NormMethod::MonteCarlo;
  m.seed = 7;
  KickLaw a = make_kick_law(k, 0.7, q);
  KickLaw b = make_kick_law(k, 0.7, m);
  EXPECT_NEAR(std::exp(b.log_mass - a.log_mass), 1.0, 3.0 * b.mass_rel_se);
}

TEST(KickLaw, SignSymmetricMean) {
  KickLawOptions o;
  o.seed = 8;
  KickLaw law = make_kick_law(power_law_covariance(5), 0.5, o);
  KickSampler s(law, 2);
  const int n = 1000000;
  Vec sum = Vec::Zero(5), sum2 = Vec::Zero(5);
  for (int i = 0; i < n; ++i) {
    Vec y = s.sample();
    sum += y;
    sum2 += y.cwiseAbs2();
  }
  Vec mean = sum / n;
  Vec se = ((sum2 / n - mean.cwiseAbs2()) / n).cwiseSqrt();
  for (int i = 0; i < 5; ++i) EXPECT_LE(std::abs(mean[i]), 3.0 * se[i]) << i;
}

TEST(KickLaw, StreamsAreDeterministicAndDistinct) {
  const auto& ref = Reference::get();
  KickSampler a(ref.law, 9), b(ref.law, 9), c(ref.law, 10);
  Vec x = a.sample();
  EXPECT_EQ(x, b.sample());
  EXPECT_NE(x, c.sample());
}

TEST(KickLaw, PushforwardCovariance) {
  const auto& ref = Reference::get();
  KickSampler s(ref.law, 11);
  const int n = 100000;
  Mat cov = Mat::Zero(20, 20), pcov = Mat::Zero(20, 20);
  for (int i = 0; i < n; ++i) {
    Vec y = s.sample();
    Vec p = ref.pi.pi * y;
    cov += y * y.transpose();
    pcov += p * p.transpose();
  }
  Mat want = ref.pi.pi * (cov / n) * ref.pi.pi.transpose();
  EXPECT_LT((pcov / n - want).norm(), 1e-12 * want.norm());
}

TEST(KickLaw, PushforwardTestFunctionsAreStreamDeterministic) {
  const auto& ref = Reference::get();
  auto run = [&] {
    KickSampler s(ref.law, 12);
    std::vector<double> acc(5, 0.0);
    for (int i = 0; i < 2000; ++i) {
      Vec p = ref.pi.pi * s.sample();
      acc[0] += std::tanh(100.0 * p[0]);
      acc[1] += std::cos(50.0 * p[1]);
      acc[2] += std::min(1.0, p.norm() / ref.law.eps_hat);
      acc[3] += p[10] > 0.0 ? 1.0 : 0.0;
      acc[4] += std::exp(-p.squaredNorm());
    }
    return acc;
  };
  EXPECT_EQ(run(), run());
}

TEST(SupportEllipsoid, ZeroAlphaIsTheBall) {
  Mat alpha = Mat::Zero(2, 1);
  Vec x(2);
  x << 0.6, 0.8;
  EXPECT_TRUE(support_ellipsoid_membership(alpha, 1.0, x));
  EXPECT_FALSE(support_ellipsoid_membership(alpha, 1.0, x * 1.001));
}

TEST(SupportEllipsoid, ScalarBoundary) {
  Mat alpha = Mat::Constant(1, 1, 2.0);
  const double edge = std::sqrt(5.0);
  EXPECT_TRUE(support_ellipsoid_membership(alpha, 1.0, Vec::Constant(1, edge * (1.0 - 1e-9))));
  EXPECT_FALSE(support_ellipsoid_membership(alpha, 1.0, Vec::Constant(1, edge * (1.0 + 1e-9))));
}

TEST(SupportEllipsoid, ProjectedSamplesAreMembers) {
  const auto& ref = Reference::get();
  Mat xb = ref.dich.x_basis;
  Mat alpha = xb.transpose() * ref.pi.pi * ref.dich.eb;
  KickSampler s(ref.law, 13);
  for (int i = 0; i < 100000; ++i) {
    Vec x = xb.transpose() * (ref.pi.pi * s.sample());
    ASSERT_TRUE(support_ellipsoid_membership(alpha, ref.law.eps_hat * (1.0 + 1e-12), x)) << i;
  }
}

TEST(QnuDensity, StandardNormalAtOrigin) {
  KickLaw law = make_kick_law(Mat::Identity(3, 3), 2.0);
  Mat q = Mat::Zero(3, 3);
  q(0, 0) = q(1, 1) = 1.0;
  KickLaw p = project_law(q, law);
  EXPECT_EQ(p.n(), 2);
  EXPECT_NEAR(p.gaussian_density(Vec::Zero(2)), 1.0 / (2.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(qnu_density(q, law, Vec::Zero(2)), p.c_hat() / (2.0 * std::numbers::pi), 1e-14);
  EXPECT_EQ(qnu_density(p, Vec::Constant(2, 1.5)), 0.0);
}

TEST(QnuDensity, GaussianIntegratesToOne) {
  Mat k = power_law_covariance(4);
  KickLaw law = make_kick_law(k, 1.0);
  Mat u = Mat::Zero(4, 2);
  u(0, 0) = 1.0;
  u.col(1) = Vec::Ones(4).normalized();
  u.col(1) -= u.col(1).dot(u.col(0)) * u.col(0);
  u.col(1).normalize();
  KickLaw p = project_law(u * u.transpose(), law);
  double total = quad::ball_integrate(2, 12.0, [&](const Vec& y) { return p.gaussian_density(y); }, {128, 256});
  EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(QnuDensity, TruncatedDensityIntegratesToOneWithinMonteCarloError) {
  Mat k = power_law_covariance(4);
  KickLaw law = make_kick_law(k, 0.8);
  Mat q = Mat::Zero(4, 4);
  q(1, 1) = q(2, 2) = 1.0;
  KickLawOptions o;
  o.norm_method = NormMethod::MonteCarlo;
  o.seed = 14;
  KickLaw p = project_law(q, law, o);
  double total = quad::ball_integrate(2, p.eps_hat, [&](const Vec& y) { return qnu_density(p, y); });
  EXPECT_GT(p.mass_rel_se, 0.0);
  EXPECT_NEAR(total, 1.0, 2.0 * p.mass_rel_se);
}

TEST(QnuDensity, DegenerateRestrictedCovariance) {
  Mat k = Mat::Identity(3, 3);
  k(2, 2) = 1e-20;
  KickLaw law = make_kick_law(k, 1.0);
  Mat q = Mat::Zero(3, 3);
  q(2, 2) = 1.0;
  EXPECT_THROW(project_law(q, law), DegenerateCovariance);
  EXPECT_THROW(make_kick_law(Mat::Zero(2, 2), 1.0), DegenerateCovariance);
}

TEST(KickLaw, LawHashTracksParameters) {
  KickLaw a = make_kick_law(Mat::Identity(2, 2), 1.0);
  KickLaw b = make_kick_law(Mat::Identity(2, 2), 1.0);
  KickLaw c = make_kick_law(Mat::Identity(2, 2), 0.9);
  EXPECT_EQ(law_hash(a), law_hash(b));
  EXPECT_NE(law_hash(a), law_hash(c));
}

}  // namespace
}  // namespace kickstab
