// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "kickstab/model_builder.hpp"
#include "kickstab/types.hpp"

namespace kickstab {

inline constexpr double kGapTol = 1e-6;

/// Stable/unstable splitting of R^n at level sigma.
///
/// `d` holds the adjoint unstable basis (eigenvectors of A^T with Re < sigma,
/// conjugate pairs replaced by real and imaginary parts), `eb` its
/// Gram-Schmidt orthonormalization, and `x_basis` an orthonormal basis of the
/// stable subspace X_sigma = span(d)^perp.
struct Dichotomy {
  double sigma = 0.0;
  int m = 0;
  Mat d;
  Mat eb;
  Mat x_basis;
  Mat p_sigma;  // orthogonal projector onto X_sigma
  Mat p_riesz;  // spectral projector onto the unstable invariant subspace of A
  double gap = 0.0;
  std::vector<Complex> unstable_eigenvalues;

  int n() const { return static_cast<int>(p_sigma.rows()); }
  /// Build the orthogonal pieces from an explicit adjoint basis; p_riesz is
  /// left empty.
  static Dichotomy from_basis(double sigma, const Mat& d);
};

Dichotomy eig_split(const OseenModel& model, double sigma, double gap_tol = kGapTol);

/// Closed axis-aligned rectangle in the complex plane.
struct Rect {
  double re_lo, re_hi, im_lo, im_hi;
};

/// (2 pi i)^{-1} \oint f(z) (zI - A)^{-1} dz over the counterclockwise
/// rectangle, Gauss-Legendre on each side (n_nodes / 4 per side). Throws
/// ContourTouchesSpectrum when an eigenvalue lies within `touch_tol` of the
/// contour. The imaginary residue is checked against `imag_tol` and dropped.
Mat contour_integral(const Mat& a, const Rect& rect, int n_nodes, const std::function<Complex(Complex)>& f,
                     double touch_tol = 1e-8, double imag_tol = 1e-10);

/// Riesz projector onto the invariant subspace of eigenvalues with Re < sigma.
Mat riesz_projector(const OseenModel& model, double sigma, int n_nodes = 256, double gap_tol = kGapTol);

/// Projector built from the ordered Schur bases (dense eigensolve route).
Mat eigen_projector(const Mat& a, double sigma);

enum class SemigroupMethod { ScalingSquaring, Contour };

/// S(tau) = exp(-A tau). The contour method integrates over a rectangle that
/// encloses the eigenvalues with real part > contour_sigma (all of them by
/// default), so it returns S(tau) composed with the spectral projector onto
/// that part of the spectrum.
Mat semigroup(const OseenModel& model, double tau, SemigroupMethod method = SemigroupMethod::ScalingSquaring,
              double contour_sigma = -std::numeric_limits<double>::infinity(), int n_nodes = 512);

struct ContractionCertificate {
  double gamma0 = 0.0;
  bool ok = false;
};

/// gamma0 = ||S(tau)|_{X_sigma}||_2.
ContractionCertificate contraction_certificate(const Dichotomy& dich, const OseenModel& model, double tau);
ContractionCertificate contraction_certificate(const Dichotomy& dich, const Mat& s);

struct ContourIntegrals {
  double i1 = 0.0;
  double i2 = 0.0;
};

/// The two resolvent integrals bounding the semigroup on X_sigma: the
/// vertical segment Re z = -sigma and the two rays theta + r e^{+-i psi},
/// of ||(zI + A)^{-1}|| |e^{z tau}| |dz|. Throws InvalidContour unless
/// pi/2 < psi < pi.
ContourIntegrals contour_bound_integrals(const OseenModel& model, double sigma, double tau, double theta,
                                         double psi);

struct SigmaLadder {
  double sigma = 0.0;
  int m = 0;
  std::vector<double> sigma_list;  // sigma_1 < ... < sigma_K
  std::vector<int> n_k;            // dim X_{sigma_k}^perp
  std::vector<double> margin;      // distance of sigma_k to the spectrum real parts
  Mat e_basis;                     // n x n_K orthonormal, nested in column order
  double tau = 0.0;

  int levels() const { return static_cast<int>(sigma_list.size()); }
  /// Orthogonal projector onto X_{sigma_k}^perp (k is 1-based).
  Mat q(int k) const;
  /// Orthonormal basis of X_{sigma_k} (k is 1-based).
  Mat stable_basis(int k) const;
  /// Orthonormal basis of X_{sigma sigma_k} (k is 1-based).
  Mat middle_basis(int k) const;
};

/// Endpoints of the k-th search segment [e^{2k/d}, e^{2(k+1)/d}].
std::pair<double, double> ladder_segment(int k, int d);

SigmaLadder sigma_ladder(const OseenModel& model, double sigma, int levels, double tau, int grid_points = 1024,
                         double gap_tol = kGapTol);

/// gamma_k = ||S(tau)|_{X_{sigma_k}}||_2, zero once X_{sigma_k} = {0}.
std::vector<double> tail_contraction(const SigmaLadder& ladder, const OseenModel& model, double tau);
std::vector<double> tail_contraction(const SigmaLadder& ladder, const Mat& s);

}  // namespace kickstab
