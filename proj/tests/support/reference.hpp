// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "kickstab/feedback_ops.hpp"
#include "kickstab/kick_measure.hpp"
#include "kickstab/model_builder.hpp"
#include "kickstab/rds_engine.hpp"
#include "kickstab/spectral_dichotomy.hpp"

namespace kickstab::testing {

// The desk-scale reference model: n = 20, d = 2, one unstable mode, sigma = 0.5,
// b = 0.5, eps_hat = 0.01, K = diag(j^-2), observables on the upper half.
struct Reference {
  static constexpr int kN = 20;
  static constexpr double kSigma = 0.5;
  static constexpr double kTau = 2.0;
  static constexpr double kEps = 0.01;
  static constexpr std::uint64_t kSeed = 10;

  OseenModel model;
  Dichotomy dich;
  ControlGeometry geo;
  FeedbackProjector pi;
  KickLaw law;
  ControlledSystem sys;

  static IndexSet obs_idx() {
    IndexSet idx;
    for (int i = kN / 2; i < kN; ++i) idx.push_back(i);
    return idx;
  }

  static const Reference& get() {
    static const Reference ref = [] {
      Reference r;
      StokesSpectrum spec = synth_stokes_spectrum(kN, 2, 1.0, 1.08, kSeed);
      r.model = build_oseen(spec, 0.5, 1, kSigma, obs_idx(), kSeed);
      r.dich = eig_split(r.model, kSigma);
      r.geo = default_geometry(r.dich, r.model.obs_idx, kSeed);
      r.pi = build_pi(r.dich, r.geo);
      KickLawOptions opts;
      opts.seed = kSeed;
      opts.proposal = Proposal::Auto;
      r.law = make_kick_law(power_law_covariance(kN, 2.0), kEps, opts);
      r.sys = make_system(r.model, r.dich, r.pi, r.law, kTau);
      return r;
    }();
    return ref;
  }
};

inline OseenModel diagonal_model(const Vec& diag) {
  Vec mu = diag.cwiseAbs().cwiseMax(1.0);
  return OseenModel::from_matrix(Mat(diag.asDiagonal()), mu);
}

}  // namespace kickstab::testing
