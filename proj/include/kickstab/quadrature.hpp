// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "kickstab/types.hpp"

namespace kickstab::quad {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1] (Newton iteration on P_n).
Rule gauss_legendre(int n);

/// Gauss-Legendre rule mapped to [a, b].
Rule gauss_legendre(int n, double a, double b);

struct BallOrders {
  int radial = 64;
  int angular = 256;
};

/// Integrate f over the centered ball of the given radius in R^dim, dim <= 3.
///
/// dim 1: Gauss-Legendre on [-r, r]. dim 2: Gauss-Legendre radial x
/// trapezoid angular. dim 3: Gauss-Legendre radial x (Gauss-Legendre in
/// cos(theta) x trapezoid in phi) spherical product rule.
double ball_integrate(int dim, double radius, const std::function<double(const Vec&)>& f,
                      const BallOrders& orders = {});

/// Nodes and weights of the sphere rule used by ball_integrate (unit sphere in
/// R^dim, dim <= 3; for dim 1 the two points +-1 with weight 1).
void sphere_rule(int dim, int angular, std::vector<Vec>& dirs, std::vector<double>& weights);

/// Adaptive 15-point Gauss-Kronrod on [a, b].
double adaptive(const std::function<double(double)>& f, double a, double b, double rel_tol = 1e-10,
                double* error = nullptr);

/// Volume of the unit ball in R^dim.
double unit_ball_volume(int dim);

}  // namespace kickstab::quad
