// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "kickstab/kick_measure.hpp"
#include "kickstab/quadrature.hpp"
#include "kickstab/types.hpp"

namespace kickstab {

/// Decomposition of pi(u, v) = alpha u + v on R^m (u) + R^nm (v).
///
/// Coordinates of the full space are (u, v), n = m + nm. Column j of
/// `b_basis` is b_{j+1}; columns 0..m-1 are eigenvectors of E + alpha^T alpha
/// (descending mu), columns m..m+s-1 are alpha b_i / |alpha b_i|, the rest
/// span ker alpha^T. `theta_basis` holds theta_1..theta_n, whose first m
/// columns (`theta_m`) are an orthonormal basis of ker pi.
struct PiDecomposition {
  int m = 0;
  int nm = 0;
  Mat alpha;  // nm x m
  Vec mu;     // descending, >= 1
  int s = 0;
  int near_unit = 0;  // eigenvalues in (1, 1 + 1e-10] counted as 1
  Mat b_basis;
  Mat theta_basis;
  Mat theta_m;  // n x m
  Vec alpha_b_norm;  // |alpha b_i|, i < m
  Mat r;             // theta = R b in the row convention of the basis change
  double jacobian = 1.0;
  Mat normal;        // E + alpha^T alpha
  Mat ellipse;       // (E + alpha alpha^T)^{-1}, the form of pi B
  Mat ellipse_sqrt;  // (E + alpha alpha^T)^{1/2}

  int n() const { return m + nm; }
  Vec pi(const Vec& y) const { return alpha * y.head(m) + y.tail(nm); }
};

PiDecomposition build_pi_decomposition(const Mat& alpha);

/// alpha = M^T Pi E_b: the part of Pi mapping X_sigma^perp (basis eb) into
/// the span of `middle` (orthonormal columns).
Mat alpha_from_pi(const Mat& pi, const Mat& eb, const Mat& middle);

enum class SliceClass { Outside, Boundary, Interior };

struct SliceGeometry {
  Vec x;
  SliceClass cls = SliceClass::Outside;
  Vec center;    // (u_hat, v_hat), the point of pi_x nearest the origin
  Vec center_w;  // the same point in theta coordinates of pi_0
  double radicand = 0.0;
  double radius = 0.0;  // 0 unless interior
};

/// Boundary when |eps^2 - |center|^2| <= tol * eps^2.
SliceGeometry slice_geometry(const PiDecomposition& dec, double eps, const Vec& x, double tol = 1e-8);

/// A point of the boundary of pi B in the given direction.
Vec boundary_point(const PiDecomposition& dec, double eps, const Vec& direction);

/// Gamma(w, x) = J g(theta_m w + (0, x)) with g the normalized N(0, K)
/// density of the law; w in theta coordinates of pi_0.
double gamma_integrand(const PiDecomposition& dec, const KickLaw& law, const Vec& w, const Vec& x);

struct DensityOptions {
  quad::BallOrders orders{};
  bool mc_fallback = false;
  int mc_samples = 200000;
  std::uint64_t seed = 0;
};

/// P(x) = c_hat * integral of Gamma over the slice ball; zero outside pi B.
/// Throws QuadratureUnsupported for m > 3 unless mc_fallback is set.
double density_P(const PiDecomposition& dec, const KickLaw& law, double eps, const Vec& x,
                 const DensityOptions& opts = {});

/// Integral of P over pi B by polar quadrature in the ellipse coordinates
/// (nm <= 2), with a square-root substitution at the boundary.
double density_mass(const PiDecomposition& dec, const KickLaw& law, double eps, int radial = 64,
                    int angular = 128, const DensityOptions& opts = {});

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  double bandwidth = 0.0;  // first coordinate's bandwidth
};

/// Kernel density estimate of P at x from samples of the law pushed through
/// pi; product Epanechnikov kernel, per-coordinate Silverman bandwidth when
/// bandwidth <= 0.
McEstimate mc_density_oracle(const PiDecomposition& dec, const KickLaw& law, const Vec& x, int n_samples,
                             double bandwidth = 0.0, std::uint64_t stream = 0x6b64);

/// Same estimate for several points from one sample set.
std::vector<McEstimate> mc_density_oracle(const PiDecomposition& dec, const KickLaw& law,
                                          const std::vector<Vec>& xs, int n_samples, double bandwidth = 0.0,
                                          std::uint64_t stream = 0x6b64);

struct LagrangeStep {
  Vec h;
  double lambda = 0.0;
  double residual = 0.0;  // |sum of the constraint terms - gamma0^2|
  Vec x0;                 // component of x in ker alpha^T
  Vec xj;                 // coefficients along alpha b_j, j < s
};

/// Minimizer of |c(x + h)|^2 on |h| = gamma0 via the secular equation in
/// lambda, solved by bisection. Requires gamma0 < |x|. Throws BracketFailure.
LagrangeStep lagrange_boundary_step(const PiDecomposition& dec, const Vec& x, double gamma0);

/// |c(x)|^2 = x^T (E + alpha alpha^T)^{-1} x, the objective of the step.
double slice_objective(const PiDecomposition& dec, const Vec& x);

struct ExponentProbe {
  std::vector<double> step_norms;
  std::vector<double> densities;
  double slope = 0.0;
  double r2 = 0.0;
};

/// Fit of log P(x + h) against log |h| along the Lagrange direction for the
/// given step norms. Throws ProbeOffBoundary unless x is a boundary point.
ExponentProbe boundary_exponent_probe(const PiDecomposition& dec, const KickLaw& law, double eps, const Vec& x,
                                      const std::vector<double>& steps, const DensityOptions& opts = {});

/// Geometric steps in [lo, hi] * eps.
std::vector<double> geometric_steps(double eps, int count = 10, double lo = 1e-4, double hi = 1e-1);

enum class VariationMode { Numeric, Analytic };

/// Directional derivative of P at interior x along h. Numeric: Richardson
/// extrapolated central differences with displacements {1e-3, 5e-4} * eps.
/// Analytic (m <= 2): moving-ball boundary term plus interior term. Throws
/// NotInterior.
double first_variation(const PiDecomposition& dec, const KickLaw& law, double eps, const Vec& x, const Vec& h,
                       VariationMode mode = VariationMode::Numeric, const DensityOptions& opts = {});

struct TvOptions {
  int grid = 200;  // points per axis (nm <= 2)
  quad::BallOrders orders{16, 64};
  int mc_samples = 20000;  // nm > 2
  std::uint64_t seed = 0;
};

/// Integral of |P(x - v1) - P(x - v2)| over a box covering both supports,
/// divided by |v1 - v2|. Monte Carlo over the first shifted law when nm > 2.
double tv_lipschitz_ratio(const PiDecomposition& dec, const KickLaw& law, double eps, const Vec& v1, const Vec& v2,
                          const TvOptions& opts = {});

}  // namespace kickstab
