// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kickstab/errors.hpp"
#include "kickstab/linalg.hpp"
#include "kickstab/rng.hpp"
#include "kickstab/spectral_dichotomy.hpp"
#include "reference.hpp"

namespace kickstab {
namespace {

using testing::diagonal_model;
using testing::Reference;

Mat random_matrix(int n, std::uint64_t seed) {
  RngStream rng(seed);
  Mat a(n, n);
  for (int i = 0; i < n * n; ++i) a.data()[i] = rng.normal();
  return a;
}

OseenModel shifted_random(int n, double shift, double scale, std::uint64_t seed) {
  Mat a = scale * random_matrix(n, seed) + shift * Mat::Identity(n, n);
  return OseenModel::from_matrix(a, Vec::Constant(n, std::max(1.0, shift)));
}

TEST(EigSplit, DiagonalSelfAdjoint) {
  Vec diag(3);
  diag << -1.0, 1.0, 2.0;
  Dichotomy d = eig_split(diagonal_model(diag), 0.5);
  ASSERT_EQ(d.m, 1);
  EXPECT_NEAR(std::abs(d.d(0, 0)) / d.d.col(0).norm(), 1.0, 1e-14);
  Mat want = Mat::Zero(3, 3);
  want(1, 1) = want(2, 2) = 1.0;
  EXPECT_LT((d.p_sigma - want).norm(), 1e-14);
}

TEST(EigSplit, EigenvalueOnTheLineIsAGapViolation) {
  Vec diag(3);
  diag << -1.0, 1.0, 2.0;
  EXPECT_THROW(eig_split(diagonal_model(diag), 1.0), GapViolation);
}

TEST(EigSplit, NonnormalTwoByTwo) {
  Mat a(2, 2);
  a << -1.0, 5.0, 0.0, 2.0;
  Dichotomy d = eig_split(OseenModel::from_matrix(a, Vec::Ones(2)), 0.0);
  ASSERT_EQ(d.m, 1);
  Vec want(2);
  want << 3.0, -5.0;
  want.normalize();
  EXPECT_NEAR(std::abs(d.d.col(0).normalized().dot(want)), 1.0, 1e-12);
  ASSERT_EQ(d.x_basis.cols(), 1);
  Vec x(2);
  x << 5.0, 3.0;
  EXPECT_NEAR(std::abs(d.x_basis.col(0).dot(x / std::sqrt(34.0))), 1.0, 1e-12);
}

TEST(EigSplit, InvariantsOnReferenceModel) {
  const auto& ref = Reference::get();
  const Dichotomy& d = ref.dich;
  const int n = d.n();
  EXPECT_LT((d.p_sigma - d.p_sigma.transpose()).norm(), 1e-14);
  EXPECT_LT((d.p_sigma * d.p_sigma - d.p_sigma).norm(), 1e-10);
  EXPECT_NEAR(d.p_sigma.trace(), n - d.m, 1e-10);
  EXPECT_LT((d.d.transpose() * d.p_sigma).norm(), 1e-10);
  EXPECT_LT((d.p_riesz * d.p_riesz - d.p_riesz).norm(), 1e-8);
  EXPECT_NEAR(d.p_riesz.trace(), d.m, 1e-6);
  Mat s = semigroup(ref.model, Reference::kTau);
  EXPECT_LT((d.d.transpose() * s * d.p_sigma).norm(), 1e-8);
}

TEST(EigSplit, ComplexPairIsRealified) {
  Mat a(3, 3);
  a << -1.0, 2.0, 0.0, -2.0, -1.0, 0.0, 0.0, 0.0, 3.0;
  Dichotomy d = eig_split(OseenModel::from_matrix(a, Vec::Ones(3)), 0.5);
  EXPECT_EQ(d.m, 2);
  EXPECT_LT((d.eb.transpose() * d.eb - Mat::Identity(2, 2)).norm(), 1e-12);
  Vec e3 = Vec::Unit(3, 2);
  EXPECT_LT((d.p_sigma - e3 * e3.transpose()).norm(), 1e-12);
}

TEST(RieszProjector, DiagonalCase) {
  Vec diag(3);
  diag << -1.0, 1.0, 2.0;
  Mat p = riesz_projector(diagonal_model(diag), 0.5);
  Mat want = Mat::Zero(3, 3);
  want(0, 0) = 1.0;
  EXPECT_LT((p - want).norm(), 1e-10);
}

TEST(RieszProjector, RandomMatrixMatchesEigenvectorProjector) {
  // Shift a random matrix so that a clear gap sits at sigma.
  OseenModel m = shifted_random(20, 2.0, 0.4, 11);
  Eigen::EigenSolver<Mat> es(m.a, false);
  Vec ev = es.eigenvalues().real();
  std::vector<double> re(ev.data(), ev.data() + ev.size());
  std::sort(re.begin(), re.end());
  const double sigma = 0.5 * (re[2] + re[3]);
  // The gap here is small against the contour size, so more nodes are needed
  // than on the reference model.
  const Mat want = eigen_projector(m.a, sigma);
  EXPECT_LT((riesz_projector(m, sigma, 512) - want).norm(), (riesz_projector(m, sigma, 256) - want).norm());
  Mat p = riesz_projector(m, sigma, 1024);
  EXPECT_LT((p - want).norm(), 1e-8);
  EXPECT_LT((p * m.a - m.a * p).norm(), 1e-8);
}

TEST(RieszProjector, EmptyContourGivesZero) {
  Vec diag(3);
  diag << 1.0, 2.0, 3.0;
  Rect r{-3.0, -1.0, -1.0, 1.0};
  Mat p = contour_integral(diag.asDiagonal(), r, 256, [](Complex) { return Complex(1.0); });
  EXPECT_LT(p.norm(), 1e-10);
}

TEST(RieszProjector, ContourThroughEigenvalueIsRejected) {
  Vec diag(2);
  diag << 1.0, 2.0;
  Rect r{1.0, 3.0, -1.0, 1.0};
  EXPECT_THROW(contour_integral(diag.asDiagonal(), r, 64, [](Complex) { return Complex(1.0); }),
               ContourTouchesSpectrum);
}

TEST(Semigroup, DiagonalAtLogTwo) {
  Vec diag(2);
  diag << 1.0, 2.0;
  Mat s = semigroup(diagonal_model(diag), std::log(2.0));
  EXPECT_NEAR(s(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(s(1, 1), 0.25, 1e-15);
  EXPECT_NEAR(std::abs(s(0, 1)) + std::abs(s(1, 0)), 0.0, 1e-15);
}

TEST(Semigroup, ZeroTimeIsIdentity) {
  const auto& ref = Reference::get();
  EXPECT_EQ(semigroup(ref.model, 0.0), Mat::Identity(20, 20));
}

TEST(Semigroup, ContourAgreesWithScalingSquaring) {
  OseenModel m = shifted_random(10, 3.0, 0.5, 12);
  Mat a = semigroup(m, 0.7);
  Mat b = semigroup(m, 0.7, SemigroupMethod::Contour);
  EXPECT_LT((a - b).norm(), 1e-8);
}

TEST(Semigroup, ContourOnStableSubspaceOfReferenceModel) {
  const auto& ref = Reference::get();
  Mat a = semigroup(ref.model, 1.0);
  Mat b = semigroup(ref.model, 1.0, SemigroupMethod::Contour, Reference::kSigma);
  EXPECT_LT(((a - b) * ref.dich.x_basis).norm(), 1e-8);
}

TEST(Semigroup, SemigroupProperty) {
  const auto& ref = Reference::get();
  Mat lhs = semigroup(ref.model, 0.8);
  Mat rhs = semigroup(ref.model, 0.3) * semigroup(ref.model, 0.5);
  EXPECT_LT((lhs - rhs).norm(), 1e-10);
}

TEST(Contraction, DiagonalNormalCase) {
  Vec diag(3);
  diag << -1.0, 1.0, 2.0;
  OseenModel m = diagonal_model(diag);
  ContractionCertificate c = contraction_certificate(eig_split(m, 0.5), m, 1.0);
  EXPECT_NEAR(c.gamma0, std::exp(-1.0), 1e-12);
  EXPECT_TRUE(c.ok);
}

TEST(Contraction, StronglyNonnormalFails) {
  Mat a(2, 2);
  a << 1.0, 100.0, 0.0, 1.0;
  OseenModel m = OseenModel::from_matrix(a, Vec::Ones(2));
  Dichotomy full = Dichotomy::from_basis(0.5, Mat(2, 0));
  ContractionCertificate c = contraction_certificate(full, m, 0.01);
  // Independent dense norm of e^{-0.01 A}.
  Mat s(2, 2);
  s << 1.0, -1.0, 0.0, 1.0;
  s *= std::exp(-0.01);
  EXPECT_NEAR(c.gamma0, linalg::norm2(s), 1e-10);
  EXPECT_GT(c.gamma0, 1.0);
  EXPECT_FALSE(c.ok);
}

TEST(Contraction, DecreasingInTauOnReferenceModel) {
  const auto& ref = Reference::get();
  double prev = 1e300;
  for (double tau : {1.0, 2.0, 4.0}) {
    double g = contraction_certificate(ref.dich, ref.model, tau).gamma0;
    EXPECT_LT(g, prev);
    prev = g;
  }
}

TEST(Contraction, IteratesStayUnderTheCertificate) {
  const auto& ref = Reference::get();
  Mat s = semigroup(ref.model, Reference::kTau);
  double g = contraction_certificate(ref.dich, s).gamma0;
  RngStream rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    Vec w = ref.dich.p_sigma * rng.normal_vector(20);
    const double w0 = w.norm();
    for (int k = 1; k <= 50; ++k) {
      w = ref.dich.p_sigma * (s * w);
      EXPECT_LE(w.norm(), std::pow(g, k) * w0 * (1.0 + 1e-12));
    }
  }
}

TEST(ContourBound, FiniteAndDecreasingInTau) {
  const auto& ref = Reference::get();
  double prev = 1e300;
  for (double tau : {1.0, 2.0, 4.0}) {
    ContourIntegrals c = contour_bound_integrals(ref.model, Reference::kSigma, tau, 1.0, 0.75 * std::numbers::pi);
    EXPECT_TRUE(std::isfinite(c.i1) && std::isfinite(c.i2));
    EXPECT_LT(c.i1 + c.i2, prev);
    prev = c.i1 + c.i2;
  }
}

TEST(ContourBound, RightAngleIsInvalid) {
  const auto& ref = Reference::get();
  EXPECT_THROW(contour_bound_integrals(ref.model, 0.5, 1.0, 1.0, std::numbers::pi / 2), InvalidContour);
  EXPECT_THROW(contour_bound_integrals(ref.model, 0.5, 1.0, 1.0, std::numbers::pi), InvalidContour);
}

TEST(SigmaLadder, FirstSegmentInTwoDimensions) {
  auto [lo, hi] = ladder_segment(1, 2);
  EXPECT_NEAR(lo, 2.71828, 1e-5);
  EXPECT_NEAR(hi, 7.38906, 1e-5);
}

TEST(SigmaLadder, LevelsAttainTheGridMaximum) {
  const auto& ref = Reference::get();
  SigmaLadder lad = sigma_ladder(ref.model, Reference::kSigma, 3, Reference::kTau);
  Eigen::EigenSolver<Mat> es(ref.model.a, false);
  const Vec re = es.eigenvalues().real();
  double prev = Reference::kSigma;
  for (int k = 1; k <= 3; ++k) {
    auto [lo, hi] = ladder_segment(k, 2);
    const double step = (hi - lo) / 1023.0;
    double best = 0.0;
    for (int i = 0; i < 1024; ++i) {
      const double s = lo + (hi - lo) * i / 1023.0;
      if (s <= prev) continue;
      best = std::max(best, (re.array() - s).abs().minCoeff());
    }
    const double sk = lad.sigma_list[k - 1];
    EXPECT_GE(sk, lo);
    EXPECT_LE(sk, hi);
    EXPECT_NEAR((re.array() - sk).abs().minCoeff(), best, step);
    EXPECT_GT(lad.margin[k - 1], 0.0);
    if (k > 1) EXPECT_LE(lad.n_k[k - 2], lad.n_k[k - 1]);
    prev = sk;
  }
}

TEST(SigmaLadder, NestedDecompositionReconstructs) {
  const auto& ref = Reference::get();
  SigmaLadder lad = sigma_ladder(ref.model, Reference::kSigma, 2, Reference::kTau);
  RngStream rng(5);
  Mat eb = lad.e_basis.leftCols(lad.m);
  Mat mid = lad.middle_basis(2);
  Mat tail = lad.stable_basis(2);
  EXPECT_EQ(eb.cols() + mid.cols() + tail.cols(), 20);
  for (int t = 0; t < 10; ++t) {
    Vec v = rng.normal_vector(20);
    Vec sum = eb * (eb.transpose() * v) + mid * (mid.transpose() * v) + tail * (tail.transpose() * v);
    EXPECT_LT((sum - v).norm(), 1e-10);
  }
}

TEST(TailContraction, DiagonalModel) {
  Vec diag = Vec::LinSpaced(12, -0.5, 21.5);  // -0.5, 1.5, ..., 21.5
  OseenModel m = diagonal_model(diag);
  m.spectrum.d = 2;
  SigmaLadder lad = sigma_ladder(m, 0.5, 3, 1.0);
  std::vector<double> g = tail_contraction(lad, m, 1.0);
  for (int k = 0; k < 3; ++k) {
    double above = 1e300;
    for (int j = 0; j < 12; ++j)
      if (diag[j] > lad.sigma_list[k]) above = std::min(above, diag[j]);
    EXPECT_NEAR(g[k], above < 1e300 ? std::exp(-above) : 0.0, 1e-12) << k;
  }
}

TEST(TailContraction, ReferenceSequenceDecreasesAndExhausts) {
  const auto& ref = Reference::get();
  SigmaLadder lad = sigma_ladder(ref.model, Reference::kSigma, 3, Reference::kTau);
  std::vector<double> g = tail_contraction(lad, ref.model, Reference::kTau);
  double g0 = contraction_certificate(ref.dich, ref.model, Reference::kTau).gamma0;
  EXPECT_LT(g[0], g0);
  for (int k = 1; k < 3; ++k) EXPECT_LT(g[k], g[k - 1]);
  // Level 3 lies above the truncated spectrum, so its stable subspace is {0}.
  EXPECT_EQ(lad.n_k[2], 20);
  EXPECT_EQ(g[2], 0.0);
}

}  // namespace
}  // namespace kickstab
