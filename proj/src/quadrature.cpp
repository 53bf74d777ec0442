// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include "kickstab/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace kickstab::quad {

Rule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  static std::mutex mu;
  static std::map<int, Rule> cache;
  {
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(n); it != cache.end()) return it->second;
  }
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged node.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(n, r);
  return r;
}

Rule gauss_legendre(int n, double a, double b) {
  Rule r = gauss_legendre(n);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  for (int i = 0; i < n; ++i) {
    r.nodes[i] = mid + half * r.nodes[i];
    r.weights[i] *= half;
  }
  return r;
}

void sphere_rule(int dim, int angular, std::vector<Vec>& dirs, std::vector<double>& weights) {
  dirs.clear();
  weights.clear();
  if (dim == 1) {
    dirs.push_back(Vec::Constant(1, 1.0));
    dirs.push_back(Vec::Constant(1, -1.0));
    weights = {1.0, 1.0};
    return;
  }
  if (dim == 2) {
    const double h = 2.0 * std::numbers::pi / angular;
    for (int k = 0; k < angular; ++k) {
      Vec d(2);
      d << std::cos(k * h), std::sin(k * h);
      dirs.push_back(d);
      weights.push_back(h);
    }
    return;
  }
  if (dim == 3) {
    const int n_polar = std::max(2, angular / 2);
    const Rule polar = gauss_legendre(n_polar);
    const double h = 2.0 * std::numbers::pi / angular;
    for (int i = 0; i < n_polar; ++i) {
      const double c = polar.nodes[i];
      const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
      for (int k = 0; k < angular; ++k) {
        Vec d(3);
        d << s * std::cos(k * h), s * std::sin(k * h), c;
        dirs.push_back(d);
        weights.push_back(polar.weights[i] * h);
      }
    }
    return;
  }
  throw std::invalid_argument("sphere_rule: dim must be 1, 2 or 3");
}

double ball_integrate(int dim, double radius, const std::function<double(const Vec&)>& f,
                      const BallOrders& orders) {
  if (radius <= 0.0) return 0.0;
  if (dim == 1) {
    const Rule r = gauss_legendre(orders.radial, -radius, radius);
    double acc = 0.0;
    Vec t(1);
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
      t[0] = r.nodes[i];
      acc += r.weights[i] * f(t);
    }
    return acc;
  }
  if (dim != 2 && dim != 3) throw std::invalid_argument("ball_integrate: dim must be 1, 2 or 3");
  std::vector<Vec> dirs;
  std::vector<double> dw;
  sphere_rule(dim, orders.angular, dirs, dw);
  const Rule r = gauss_legendre(orders.radial, 0.0, radius);
  double acc = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    const double rho = r.nodes[i];
    const double jac = dim == 2 ? rho : rho * rho;
    double shell = 0.0;
    for (std::size_t k = 0; k < dirs.size(); ++k) shell += dw[k] * f(rho * dirs[k]);
    acc += r.weights[i] * jac * shell;
  }
  return acc;
}

double adaptive(const std::function<double(double)>& f, double a, double b, double rel_tol, double* error) {
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 30, rel_tol, &err);
  if (error) *error = err;
  return v;
}

double unit_ball_volume(int dim) {
  return std::pow(std::numbers::pi, dim / 2.0) / std::tgamma(dim / 2.0 + 1.0);
}

}  // namespace kickstab::quad
