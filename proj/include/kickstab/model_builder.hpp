// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "kickstab/types.hpp"

namespace kickstab {

/// Stokes eigenvalues mu_j following beta0 * j^{2/d} with a bounded
/// logarithmic remainder.
struct StokesSpectrum {
  int n = 0;
  int d = 2;
  double beta0 = 1.0;
  double remainder_scale = 0.0;
  std::uint64_t seed = 0;
  Vec mu;

  /// Largest |mu_j - beta0 j^{2/d}| / (j^{2/d} / ln(j+2)) over j (0 if exact).
  double remainder_ratio() const;
};

struct EigenRecord {
  double re = 0.0;
  double im = 0.0;
  int multiplicity = 1;
};

/// Finite Galerkin model A = A0 + A1 in the Stokes eigenbasis.
struct OseenModel {
  StokesSpectrum spectrum;
  Mat a;   // A
  Mat a0;  // diag(mu)
  Mat a1;  // A - A0
  double relative_bound_b = 0.0;
  IndexSet obs_idx;
  std::uint64_t seed = 0;
  std::vector<EigenRecord> spectrum_cache;

  int n() const { return static_cast<int>(a.rows()); }
  /// Plain model from an explicit matrix; A0 = diag(mu) must be supplied.
  static OseenModel from_matrix(const Mat& a, const Vec& mu, IndexSet obs_idx = {});
};

/// Sample mu_j = beta0 j^{2/d} + u_j * scale * j^{2/d} / ln(j+2), u_j ~ U[-1,1],
/// then sort. Requires remainder_scale < beta0 * ln 3 so that mu stays
/// positive; throws std::invalid_argument otherwise.
StokesSpectrum synth_stokes_spectrum(int n, int d, double beta0, double remainder_scale, std::uint64_t seed);

struct BuildOptions {
  int max_attempts = 64;
  double gap_tol = 1e-6;
};

/// Random dense A1 rescaled to ||A1 A0^{-1/2}|| = b, blended with a negative
/// diagonal shift on the first n_unstable modes. The blend weight is searched
/// downward from 0.8 and the random part redrawn until exactly n_unstable
/// eigenvalues have real part < sigma. Throws ConstructionFailed.
OseenModel build_oseen(const StokesSpectrum& spec, double b, int n_unstable, double sigma, IndexSet obs_idx,
                       std::uint64_t seed, const BuildOptions& opts = {});

/// ||A1 A0^{-1/2}||_2. Throws SingularA0 if some mu <= 0.
double verify_relative_bound(const OseenModel& model);

/// Dense eigenvalues grouped into records (conjugate pairs kept separate).
std::vector<EigenRecord> eigen_records(const Mat& a, double merge_tol = 1e-8);

}  // namespace kickstab
