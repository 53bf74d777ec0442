// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "kickstab/spectral_dichotomy.hpp"
#include "kickstab/types.hpp"

namespace kickstab {

inline constexpr double kGramCondCutoff = 1e12;

/// Control directions g_1..g_m supported off the observable set, and the
/// Gram matrix M[k][j] = <d_k, g_j>.
struct ControlGeometry {
  IndexSet obs_idx;
  Mat g;
  Mat gram;
  double cond_gram = 0.0;
};

/// Build a geometry from explicit directions. Entries of `g` on obs_idx must
/// be exactly zero (std::invalid_argument otherwise).
ControlGeometry make_geometry(const Dichotomy& dich, IndexSet obs_idx, const Mat& g);

/// Default directions: d_j restricted to the complement of obs_idx. On a
/// singular Gram matrix, redraw random directions off obs_idx (seeded) up to
/// `retries` times before giving up with SingularGram.
ControlGeometry default_geometry(const Dichotomy& dich, IndexSet obs_idx, std::uint64_t seed = 0, int retries = 16);

/// The projection Pi onto X_sigma that leaves observable coordinates alone:
/// Pi phi = phi + G c with M c = -D^T phi.
struct FeedbackProjector {
  Mat pi;
  double norm_pi = 0.0;
  IndexSet obs_idx;
  int n() const { return static_cast<int>(pi.rows()); }
};

FeedbackProjector build_pi(const Dichotomy& dich, const ControlGeometry& geo);

Vec apply_pi(const FeedbackProjector& pi, const Vec& phi);

/// Extension E v0: the coordinate lift of v0 (given on obs_idx, in that
/// order), corrected into X_sigma along the control directions.
Vec build_extension(const Dichotomy& dich, const ControlGeometry& geo, const Vec& v0_obs);

/// Coordinate lift L v0 (zero off obs_idx).
Vec lift(const IndexSet& obs_idx, int n, const Vec& v0_obs);

}  // namespace kickstab
