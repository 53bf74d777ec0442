// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include "kickstab/density_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "kickstab/errors.hpp"
#include "kickstab/linalg.hpp"
#include "kickstab/rds_engine.hpp"

namespace kickstab {
namespace {

constexpr double kUnitThreshold = 1e-10;

// Gaussian restricted to the affine slice y = c + theta_m t:
// log g(c + theta t) = log g(c) - a.t - t^T q t / 2.
struct SliceGaussian {
  double log_g0 = 0.0;
  Vec a;
  Mat q;

  SliceGaussian(const PiDecomposition& dec, const KickLaw& law, const Vec& c) {
    log_g0 = law.log_gaussian_density(c);
    Mat kt = law.precision * dec.theta_m;
    a = kt.transpose() * c;
    q = dec.theta_m.transpose() * kt;
  }

  double operator()(const Vec& t) const { return std::exp(log_g0 - a.dot(t) - 0.5 * t.dot(q * t)); }
};

Vec embed_v(const PiDecomposition& dec, const Vec& x) {
  Vec y = Vec::Zero(dec.n());
  y.tail(dec.nm) = x;
  return y;
}

Vec slice_center(const PiDecomposition& dec, const Vec& x) {
  Vec u = dec.normal.llt().solve(dec.alpha.transpose() * x);
  Vec c(dec.n());
  c.head(dec.m) = u;
  c.tail(dec.nm) = x - dec.alpha * u;
  return c;
}

Mat sym_power(const Mat& a, double p) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  return es.eigenvectors() * es.eigenvalues().array().pow(p).matrix().asDiagonal() * es.eigenvectors().transpose();
}

double slice_integral(const PiDecomposition& dec, const KickLaw& law, const SliceGeometry& sg,
                      const DensityOptions& opts) {
  SliceGaussian g(dec, law, sg.center);
  if (dec.m == 0) return g(Vec::Zero(0));
  if (dec.m <= 3) return quad::ball_integrate(dec.m, sg.radius, g, opts.orders);
  if (!opts.mc_fallback)
    throw QuadratureUnsupported("slice dimension " + std::to_string(dec.m) + " needs the Monte Carlo fallback");
  RngStream rng(opts.seed, 0x5c1e);
  double acc = 0.0;
  for (int i = 0; i < opts.mc_samples; ++i) {
    Vec z = rng.normal_vector(dec.m);
    Vec t = z * (sg.radius * std::pow(rng.uniform(), 1.0 / dec.m) / z.norm());
    acc += g(t);
  }
  return acc / opts.mc_samples * quad::unit_ball_volume(dec.m) * std::pow(sg.radius, dec.m);
}

}  // namespace

PiDecomposition build_pi_decomposition(const Mat& alpha) {
  PiDecomposition dec;
  dec.m = static_cast<int>(alpha.cols());
  dec.nm = static_cast<int>(alpha.rows());
  dec.alpha = alpha;
  const int m = dec.m, nm = dec.nm, n = dec.n();

  dec.normal = Mat::Identity(m, m) + alpha.transpose() * alpha;
  Eigen::SelfAdjointEigenSolver<Mat> es(dec.normal);
  dec.mu.resize(m);
  Mat bm(m, m);
  for (int j = 0; j < m; ++j) {
    dec.mu[j] = std::max(1.0, es.eigenvalues()[m - 1 - j]);
    bm.col(j) = es.eigenvectors().col(m - 1 - j);
  }
  for (int j = 0; j < m; ++j) {
    if (dec.mu[j] > 1.0 + kUnitThreshold)
      ++dec.s;
    else if (dec.mu[j] > 1.0)
      ++dec.near_unit;
  }
  const int s = dec.s;

  Mat ab = alpha * bm;
  dec.alpha_b_norm.resize(m);
  for (int j = 0; j < m; ++j) dec.alpha_b_norm[j] = ab.col(j).norm();

  Mat bv(nm, nm);
  for (int j = 0; j < s; ++j) bv.col(j) = ab.col(j) / dec.alpha_b_norm[j];
  if (nm > s) {
    Mat comp = s > 0 ? linalg::orthonormal_complement(linalg::mgs(bv.leftCols(s))) : Mat(Mat::Identity(nm, nm));
    bv.rightCols(nm - s) = comp;
  }

  dec.b_basis = Mat::Zero(n, n);
  dec.b_basis.topLeftCorner(m, m) = bm;
  dec.b_basis.bottomRightCorner(nm, nm) = bv;

  dec.theta_basis = dec.b_basis;
  dec.r = Mat::Identity(n, n);
  dec.jacobian = 1.0;
  for (int j = 0; j < m; ++j) {
    double a2 = dec.alpha_b_norm[j] * dec.alpha_b_norm[j];
    double scale = 1.0 / std::sqrt(1.0 + a2);
    dec.theta_basis.col(j).head(m) = bm.col(j) * scale;
    dec.theta_basis.col(j).tail(nm) = -ab.col(j) * scale;
    if (j < s) {
      dec.r(j, j) = scale;
      dec.r(j, m + j) = -dec.alpha_b_norm[j] * scale;
      dec.jacobian *= scale;
    }
  }
  dec.theta_m = dec.theta_basis.leftCols(m);

  Mat outer = Mat::Identity(nm, nm) + alpha * alpha.transpose();
  dec.ellipse = outer.llt().solve(Mat::Identity(nm, nm));
  dec.ellipse_sqrt = sym_power(outer, 0.5);
  return dec;
}

Mat alpha_from_pi(const Mat& pi, const Mat& eb, const Mat& middle) { return middle.transpose() * pi * eb; }

double slice_objective(const PiDecomposition& dec, const Vec& x) { return x.dot(dec.ellipse * x); }

SliceGeometry slice_geometry(const PiDecomposition& dec, double eps, const Vec& x, double tol) {
  SliceGeometry sg;
  sg.x = x;
  sg.center = slice_center(dec, x);
  sg.center_w = -dec.theta_m.transpose() * embed_v(dec, x);
  const double e2 = eps * eps;
  sg.radicand = e2 - sg.center.squaredNorm();
  if (std::abs(sg.radicand) <= tol * e2) {
    sg.cls = SliceClass::Boundary;
  } else if (sg.radicand > 0.0) {
    sg.cls = SliceClass::Interior;
    sg.radius = std::sqrt(sg.radicand);
  } else {
    sg.cls = SliceClass::Outside;
  }
  return sg;
}

Vec boundary_point(const PiDecomposition& dec, double eps, const Vec& direction) {
  Vec x = dec.ellipse_sqrt * direction.normalized();
  return eps * x / std::sqrt(slice_objective(dec, x));
}

double gamma_integrand(const PiDecomposition& dec, const KickLaw& law, const Vec& w, const Vec& x) {
  Vec y = dec.theta_m * w + embed_v(dec, x);
  return dec.jacobian * law.gaussian_density(y);
}

double density_P(const PiDecomposition& dec, const KickLaw& law, double eps, const Vec& x,
                 const DensityOptions& opts) {
  if (dec.m > 3 && !opts.mc_fallback)
    throw QuadratureUnsupported("slice dimension " + std::to_string(dec.m) + " needs the Monte Carlo fallback");
  SliceGeometry sg = slice_geometry(dec, eps, x);
  if (sg.cls != SliceClass::Interior) return 0.0;
  return law.c_hat() * dec.jacobian * slice_integral(dec, law, sg, opts);
}

double density_mass(const PiDecomposition& dec, const KickLaw& law, double eps, int radial, int angular,
                    const DensityOptions& opts) {
  if (dec.nm < 1 || dec.nm > 2) throw QuadratureUnsupported("density_mass needs 1 <= nm <= 2");
  const quad::Rule sr = quad::gauss_legendre(radial, 0.0, 1.0);
  const double det_s = dec.ellipse_sqrt.determinant();
  double acc = 0.0;
  if (dec.nm == 1) {
    for (std::size_t i = 0; i < sr.nodes.size(); ++i) {
      double sv = sr.nodes[i];
      double rho = 1.0 - sv * sv;
      double jac = 2.0 * sv;
      for (double sign : {1.0, -1.0}) {
        Vec x = dec.ellipse_sqrt * Vec::Constant(1, sign * eps * rho);
        acc += sr.weights[i] * jac * density_P(dec, law, eps, x, opts);
      }
    }
    return acc * eps * det_s;
  }
  const double h = 2.0 * std::numbers::pi / angular;
  for (std::size_t i = 0; i < sr.nodes.size(); ++i) {
    double sv = sr.nodes[i];
    double rho = 1.0 - sv * sv;
    double jac = 2.0 * sv * rho;
    double ring = 0.0;
    for (int k = 0; k < angular; ++k) {
      Vec xi(2);
      xi << std::cos(k * h), std::sin(k * h);
      ring += density_P(dec, law, eps, dec.ellipse_sqrt * (eps * rho * xi), opts);
    }
    acc += sr.weights[i] * jac * ring * h;
  }
  return acc * eps * eps * det_s;
}

std::vector<McEstimate> mc_density_oracle(const PiDecomposition& dec, const KickLaw& law,
                                          const std::vector<Vec>& xs, int n_samples, double bandwidth,
                                          std::uint64_t stream) {
  if (n_samples < 10000) throw std::invalid_argument("mc_density_oracle needs at least 1e4 samples");
  const int nm = dec.nm;
  KickSampler sampler(law, RngStream(law.seed, stream));
  Mat pts(nm, n_samples);
  for (int i = 0; i < n_samples; ++i) pts.col(i) = dec.pi(sampler.sample());

  Vec h(nm);
  if (bandwidth > 0.0) {
    h.setConstant(bandwidth);
  } else {
    Vec mean = pts.rowwise().mean();
    double factor = 2.214 * std::pow(4.0 / ((nm + 2.0) * n_samples), 1.0 / (nm + 4.0));
    for (int i = 0; i < nm; ++i) {
      double var = (pts.row(i).array() - mean[i]).square().sum() / (n_samples - 1);
      h[i] = factor * std::sqrt(var);
    }
  }
  const double norm = std::pow(0.75, nm) / h.prod();

  std::vector<McEstimate> out;
  out.reserve(xs.size());
  for (const Vec& x : xs) {
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n_samples; ++i) {
      double k = norm;
      for (int c = 0; c < nm && k != 0.0; ++c) {
        double z = (pts(c, i) - x[c]) / h[c];
        k = std::abs(z) < 1.0 ? k * (1.0 - z * z) : 0.0;
      }
      sum += k;
      sum2 += k * k;
    }
    McEstimate e;
    e.estimate = sum / n_samples;
    double var = std::max(0.0, sum2 / n_samples - e.estimate * e.estimate);
    e.std_error = std::sqrt(var / n_samples);
    e.bandwidth = h[0];
    out.push_back(e);
  }
  return out;
}

McEstimate mc_density_oracle(const PiDecomposition& dec, const KickLaw& law, const Vec& x, int n_samples,
                             double bandwidth, std::uint64_t stream) {
  return mc_density_oracle(dec, law, std::vector<Vec>{x}, n_samples, bandwidth, stream).front();
}

LagrangeStep lagrange_boundary_step(const PiDecomposition& dec, const Vec& x, double gamma0) {
  const int s = dec.s;
  LagrangeStep out;
  if (!(gamma0 > 0.0) || gamma0 * gamma0 >= x.squaredNorm())
    throw std::invalid_argument("lagrange_boundary_step needs 0 < gamma0 < |x|");

  Mat ab = dec.alpha * dec.b_basis.topLeftCorner(dec.m, dec.m).leftCols(s);
  out.xj.resize(s);
  out.x0 = x;
  for (int j = 0; j < s; ++j) {
    double a2 = dec.alpha_b_norm[j] * dec.alpha_b_norm[j];
    out.xj[j] = ab.col(j).dot(x) / a2;
    out.x0 -= out.xj[j] * ab.col(j);
  }
  const double x0n2 = out.x0.squaredNorm();
  const double g2 = gamma0 * gamma0;
  auto lhs = [&](double lam) {
    double v = x0n2 / ((1.0 + lam) * (1.0 + lam));
    for (int j = 0; j < s; ++j) {
      double den = 1.0 + lam * dec.mu[j];
      v += out.xj[j] * out.xj[j] * dec.alpha_b_norm[j] * dec.alpha_b_norm[j] / (den * den);
    }
    return v;
  };

  double lo = 0.0, hi = 1.0;
  int doublings = 0;
  while (lhs(hi) > g2) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 60) throw BracketFailure("no sign change after 60 doublings");
  }
  for (int it = 0; it < 400 && hi - lo > 0.0; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (lhs(mid) > g2)
      lo = mid;
    else
      hi = mid;
  }
  out.lambda = std::abs(lhs(lo) - g2) < std::abs(lhs(hi) - g2) ? lo : hi;
  out.residual = std::abs(lhs(out.lambda) - g2);

  out.h = -out.x0 / (1.0 + out.lambda);
  for (int j = 0; j < s; ++j) out.h -= out.xj[j] / (1.0 + out.lambda * dec.mu[j]) * ab.col(j);
  return out;
}

std::vector<double> geometric_steps(double eps, int count, double lo, double hi) {
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) {
    double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    out[i] = eps * lo * std::pow(hi / lo, t);
  }
  return out;
}

ExponentProbe boundary_exponent_probe(const PiDecomposition& dec, const KickLaw& law, double eps, const Vec& x,
                                      const std::vector<double>& steps, const DensityOptions& opts) {
  if (slice_geometry(dec, eps, x).cls != SliceClass::Boundary) throw ProbeOffBoundary("x is not on the boundary of pi B");
  ExponentProbe probe;
  std::vector<double> lx, ly;
  for (double g : steps) {
    LagrangeStep st = lagrange_boundary_step(dec, x, g);
    double p = density_P(dec, law, eps, x + st.h, opts);
    probe.step_norms.push_back(g);
    probe.densities.push_back(p);
    if (p > 0.0) {
      lx.push_back(std::log(g));
      ly.push_back(std::log(p));
    }
  }
  if (lx.size() >= 2) {
    LineFit fit = fit_line(lx, ly);
    probe.slope = fit.slope;
    probe.r2 = fit.r2;
  }
  return probe;
}

double first_variation(const PiDecomposition& dec, const KickLaw& law, double eps, const Vec& x, const Vec& h,
                       VariationMode mode, const DensityOptions& opts) {
  SliceGeometry sg = slice_geometry(dec, eps, x);
  if (sg.cls != SliceClass::Interior) throw NotInterior("first_variation needs an interior point");
  const double hn = h.norm();
  if (hn == 0.0) return 0.0;

  if (mode == VariationMode::Numeric) {
    auto central = [&](double disp) {
      double t = disp / hn;
      return (density_P(dec, law, eps, x + t * h, opts) - density_P(dec, law, eps, x - t * h, opts)) / (2.0 * t);
    };
    double d1 = central(1e-3 * eps);
    double d2 = central(5e-4 * eps);
    return (4.0 * d2 - d1) / 3.0;
  }

  if (dec.m < 1 || dec.m > 2) throw QuadratureUnsupported("analytic first variation needs m <= 2");
  const Vec ch = slice_center(dec, h);
  const Vec w_dot = -dec.theta_m.transpose() * embed_v(dec, h);
  const double r_dot = -sg.center.dot(ch) / sg.radius;
  SliceGaussian g(dec, law, sg.center);

  std::vector<Vec> dirs;
  std::vector<double> dw;
  quad::sphere_rule(dec.m, opts.orders.angular, dirs, dw);
  const double surf = dec.m == 1 ? 1.0 : sg.radius;
  double boundary = 0.0;
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    Vec t = sg.radius * dirs[k];
    boundary += dw[k] * surf * g(t) * (dirs[k].dot(w_dot) + r_dot);
  }

  const Vec h_full = embed_v(dec, h);
  const Vec kh = law.precision * h_full;
  auto interior_f = [&](const Vec& t) {
    Vec y = sg.center + dec.theta_m * t;
    return -g(t) * y.dot(kh);
  };
  double interior = quad::ball_integrate(dec.m, sg.radius, interior_f, opts.orders);
  return law.c_hat() * dec.jacobian * (boundary + interior);
}

double tv_lipschitz_ratio(const PiDecomposition& dec, const KickLaw& law, double eps, const Vec& v1, const Vec& v2,
                          const TvOptions& opts) {
  const double sep = (v1 - v2).norm();
  if (sep == 0.0) return 0.0;
  DensityOptions dopt;
  dopt.orders = opts.orders;
  dopt.seed = opts.seed;
  const int nm = dec.nm;

  if (nm > 2) {
    KickSampler sampler(law, RngStream(opts.seed, 0x7f01));
    double acc = 0.0;
    for (int i = 0; i < opts.mc_samples; ++i) {
      Vec x = dec.pi(sampler.sample());
      double p1 = density_P(dec, law, eps, x, dopt);
      double p2 = density_P(dec, law, eps, x + v1 - v2, dopt);
      acc += p1 > 0.0 ? std::abs(1.0 - p2 / p1) : 0.0;
    }
    return acc / opts.mc_samples / sep;
  }

  Vec half(nm);
  for (int i = 0; i < nm; ++i)
    half[i] = eps * std::sqrt((Mat::Identity(nm, nm) + dec.alpha * dec.alpha.transpose())(i, i)) +
              0.5 * std::abs(v1[i] - v2[i]);
  const Vec mid = 0.5 * (v1 + v2);
  const int g = opts.grid;
  Vec step = 2.0 * half / g;
  double cell = step.prod();
  double acc = 0.0;
  Vec off(nm);
  if (nm == 1) {
    for (int i = 0; i < g; ++i) {
      off[0] = -half[0] + (i + 0.5) * step[0];
      acc += std::abs(density_P(dec, law, eps, off + mid - v1, dopt) - density_P(dec, law, eps, off + mid - v2, dopt));
    }
  } else {
    for (int i = 0; i < g; ++i)
      for (int j = 0; j < g; ++j) {
        off[0] = -half[0] + (i + 0.5) * step[0];
        off[1] = -half[1] + (j + 0.5) * step[1];
        acc += std::abs(density_P(dec, law, eps, off + mid - v1, dopt) -
                        density_P(dec, law, eps, off + mid - v2, dopt));
      }
  }
  return acc * cell / sep;
}

}  // namespace kickstab
