// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "kickstab/errors.hpp"
#include "kickstab/rds_engine.hpp"
#include "reference.hpp"

namespace kickstab {
namespace {

using testing::diagonal_model;
using testing::Reference;

ControlledSystem degenerate_system() {
  const auto& ref = Reference::get();
  KickLaw zero = make_kick_law(ref.law.k, 0.0);
  return make_system(ref.model, ref.dich, ref.pi, zero, Reference::kTau);
}

Vec in_x_sigma(std::uint64_t seed, double norm) {
  const auto& ref = Reference::get();
  RngStream rng(seed);
  return (ref.dich.x_basis * rng.normal_vector(ref.dich.x_basis.cols())).normalized() * norm;
}

TEST(Step, DegenerateLawIsPureSemigroup) {
  ControlledSystem sys = degenerate_system();
  KickSampler sampler(sys.law, 0);
  Vec w = in_x_sigma(1, 3.0);
  EXPECT_EQ(step(sys.s, sys.pi, sampler, w), Vec(sys.s * w));
}

TEST(Step, StaysInXSigma) {
  const auto& ref = Reference::get();
  KickSampler sampler(ref.law, 1);
  Vec w = in_x_sigma(2, 1.0);
  for (int k = 0; k < 100; ++k) {
    w = step(ref.sys.s, ref.pi, sampler, w);
    EXPECT_LT((ref.dich.d.transpose() * w).norm(), 1e-8);
  }
}

TEST(Step, SameStreamStateIsBitwiseIdentical) {
  const auto& ref = Reference::get();
  KickSampler a(ref.law, chain_stream(3, 4)), b(ref.law, chain_stream(3, 4));
  Vec w = in_x_sigma(3, 1.0);
  EXPECT_EQ(step(ref.sys.s, ref.pi, a, w), step(ref.sys.s, ref.pi, b, w));
}

TEST(RunChain, DegenerateLawContracts) {
  ControlledSystem sys = degenerate_system();
  ChainConfig cfg;
  cfg.n_steps = 40;
  cfg.w0 = in_x_sigma(4, 5.0);
  Trajectory t = run_chain(cfg, sys);
  for (int k = 0; k <= 40; ++k) EXPECT_LE(t.norms[k], std::pow(sys.gamma0, k) * 5.0 * (1.0 + 1e-10) + 1e-300);
}

TEST(RunChain, ThresholdArithmetic) { EXPECT_NEAR(stage_threshold(2.0, 0.01, 0.5), 0.04, 1e-15); }

TEST(RunChain, SameSeedIsBitwiseIdentical) {
  const auto& ref = Reference::get();
  ChainConfig cfg;
  cfg.n_steps = 50;
  cfg.w0 = in_x_sigma(5, 1.0);
  cfg.seed = 77;
  cfg.chain = 3;
  cfg.record_kicks = true;
  Trajectory a = run_chain(cfg, ref.sys);
  Trajectory b = run_chain(cfg, ref.sys);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.kicks, b.kicks);
  EXPECT_EQ(a.model_hash, b.model_hash);
  EXPECT_EQ(a.law_hash, b.law_hash);
  for (Eigen::Index k = 0; k < a.kicks.cols(); ++k) EXPECT_LE(a.kicks.col(k).norm(), ref.law.eps_hat);
}

TEST(RunChain, RejectsInitialStateOutsideXSigma) {
  const auto& ref = Reference::get();
  ChainConfig cfg;
  cfg.n_steps = 5;
  cfg.w0 = ref.dich.d.col(0);
  EXPECT_THROW(run_chain(cfg, ref.sys), std::invalid_argument);
}

TEST(RunChain, ReportsFirstEntry) {
  const auto& ref = Reference::get();
  ChainConfig cfg;
  cfg.n_steps = 60;
  cfg.w0 = in_x_sigma(6, 100.0);
  Trajectory t = run_chain(cfg, ref.sys);
  ASSERT_GE(t.first_entry, 1);
  EXPECT_LE(t.norms[t.first_entry], ref.sys.r0());
  EXPECT_GT(t.norms[t.first_entry - 1], ref.sys.r0());
  EXPECT_LT(t.max_dt_residual, 1e-8);
}

TEST(Ensemble, IndependentOfThreadCount) {
  const auto& ref = Reference::get();
  Vec w0 = in_x_sigma(7, 10.0);
  auto a = run_ensemble(ref.sys, w0, 37, 30, 8, 1, true);
  auto b = run_ensemble(ref.sys, w0, 37, 30, 8, 4, true);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].states, b[i].states);
}

TEST(Envelope, ZeroInitialStateStaysBelowThreshold) {
  const auto& ref = Reference::get();
  for (std::uint64_t c = 0; c < 20; ++c) {
    ChainConfig cfg;
    cfg.n_steps = 100;
    cfg.w0 = Vec::Zero(20);
    cfg.chain = c;
    Trajectory t = run_chain(cfg, ref.sys);
    for (double nk : t.norms) EXPECT_LE(nk, ref.sys.r0() + 1e-12);
    EnvelopeReport rep = envelope_check(t, ref.sys.gamma0, ref.pi.norm_pi, ref.law.eps_hat);
    EXPECT_EQ(rep.violations, 0);
  }
}

TEST(Envelope, ReferenceEnsembleHasNoViolations) {
  const auto& ref = Reference::get();
  auto ens = run_ensemble(ref.sys, in_x_sigma(9, 1e4), 1000, 200, 9);
  EnvelopeReport rep;
  for (const auto& t : ens) envelope_accumulate(rep, t, ref.sys.gamma0, ref.pi.norm_pi, ref.law.eps_hat);
  EXPECT_TRUE(rep.certificate_valid);
  EXPECT_EQ(rep.checked, 1000 * 201);
  EXPECT_EQ(rep.violations, 0);
  EXPECT_LE(rep.max_residual, 1e-9);
}

TEST(Envelope, InvalidCertificateIsFlagged) {
  Trajectory t;
  t.norms = {1.0, 2.0};
  EnvelopeReport rep = envelope_check(t, 1.2, 1.0, 0.1);
  EXPECT_FALSE(rep.certificate_valid);
}

TEST(Uncontrolled, NoUnstableModeIsRejectedOrBounded) {
  Vec diag(3);
  diag << 0.3, 1.0, 2.0;
  OseenModel m = diagonal_model(diag);
  KickLaw law = make_kick_law(Mat::Identity(3, 3) * 0.01, 0.05);
  EXPECT_THROW(uncontrolled_demo(m, law, Vec::Zero(3), 50, 1.0, 1), NotUnstable);
  UncontrolledRun run = uncontrolled_demo(m, law, Vec::Zero(3), 200, 1.0, 1, 0, false);
  EXPECT_LE(run.slope, 0.01);
  EXPECT_LE(*std::max_element(run.norms.begin(), run.norms.end()), 0.05 / (1.0 - std::exp(-0.3)) + 1e-12);
}

TEST(Uncontrolled, ExactGrowthAlongUnstableMode) {
  Vec diag(3);
  diag << -1.0, 1.0, 2.0;
  OseenModel m = diagonal_model(diag);
  KickLaw zero = make_kick_law(Mat::Identity(3, 3), 0.0);
  UncontrolledRun run = uncontrolled_demo(m, zero, Vec::Unit(3, 0), 20, 0.5, 1);
  for (int k = 0; k <= 20; ++k) EXPECT_NEAR(run.norms[k] / std::exp(0.5 * k), 1.0, 1e-12);
  EXPECT_NEAR(run.slope, 0.5, 1e-12);
}

TEST(Uncontrolled, ReferenceGrowthRateMatchesDominantMode) {
  const auto& ref = Reference::get();
  Eigen::EigenSolver<Mat> es(ref.model.a, false);
  const double rate = -es.eigenvalues().real().minCoeff() * Reference::kTau;
  UncontrolledRun run = uncontrolled_demo(ref.model, ref.law, Vec::Zero(20), 100, Reference::kTau, 1);
  EXPECT_NEAR(run.slope, rate, 0.1 * rate);
}

TEST(Uncontrolled, ControlledChainStaysBoundedOnSharedStreams) {
  const auto& ref = Reference::get();
  ChainConfig cfg;
  cfg.n_steps = 100;
  cfg.w0 = Vec::Zero(20);
  cfg.seed = 1;
  Trajectory ctl = run_chain(cfg, ref.sys);
  UncontrolledRun un = uncontrolled_demo(ref.model, ref.law, cfg.w0, 100, Reference::kTau, 1);
  EXPECT_GT(un.norms.back() / ctl.norms.back(), 1e2);
}

TEST(FitLine, ExactLine) {
  LineFit f = fit_line({0.0, 1.0, 2.0, 3.0}, {1.0, 3.0, 5.0, 7.0});
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept, 1.0, 1e-14);
  EXPECT_NEAR(f.r2, 1.0, 1e-14);
}

}  // namespace
}  // namespace kickstab
