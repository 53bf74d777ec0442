// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "kickstab/types.hpp"

namespace kickstab::linalg {

/// e^{M} by scaling and squaring with the degree-13 Pade approximant.
Mat expm(const Mat& m);

/// Largest singular value.
double norm2(const Mat& m);

/// 2-norm condition number (inf for rank-deficient input).
double cond2(const Mat& m);

/// Orthonormalize the columns of `d` in order by modified Gram-Schmidt with
/// one reorthogonalization pass. Column k of the result spans the same flag
/// as columns 0..k of the input.
Mat mgs(const Mat& d);

/// Orthonormal basis of the orthogonal complement of span(q), q orthonormal.
Mat orthonormal_complement(const Mat& q);

/// Orthonormal basis of the invariant subspace of `a` belonging to the
/// eigenvalues with real part < sigma, from an ordered real Schur form.
Mat schur_invariant_basis(const Mat& a, double sigma);

}  // namespace kickstab::linalg
