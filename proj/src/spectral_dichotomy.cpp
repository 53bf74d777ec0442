// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include "kickstab/spectral_dichotomy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "kickstab/errors.hpp"
#include "kickstab/linalg.hpp"
#include "kickstab/quadrature.hpp"

namespace kickstab {

namespace {

std::vector<Complex> eigenvalues(const Mat& a) {
  Eigen::EigenSolver<Mat> es(a, false);
  return {es.eigenvalues().begin(), es.eigenvalues().end()};
}

double line_gap(const std::vector<Complex>& ev, double sigma) {
  double gap = std::numeric_limits<double>::infinity();
  for (const Complex& z : ev) gap = std::min(gap, std::abs(z.real() - sigma));
  return gap;
}

// Flip so the entry of largest magnitude is positive; normalize to unit length.
void canonicalize(Eigen::Ref<Vec> v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  if (v[idx] < 0.0) v = -v;
  v.normalize();
}

// Real-ified eigenvectors of `at` for eigenvalues with Re < sigma, ordered by
// real part, then |imaginary part|, then index.
Mat unstable_real_basis(const Mat& at, double sigma, std::vector<Complex>& picked) {
  Eigen::EigenSolver<Mat> es(at, true);
  const CVec ev = es.eigenvalues();
  const CMat vecs = es.eigenvectors();
  std::vector<int> idx;
  for (int i = 0; i < ev.size(); ++i)
    if (ev[i].real() < sigma && ev[i].imag() >= 0.0) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) {
    if (ev[x].real() != ev[y].real()) return ev[x].real() < ev[y].real();
    if (std::abs(ev[x].imag()) != std::abs(ev[y].imag())) return std::abs(ev[x].imag()) < std::abs(ev[y].imag());
    return x < y;
  });
  std::vector<Vec> cols;
  picked.clear();
  for (int i : idx) {
    const CVec v = vecs.col(i);
    if (ev[i].imag() == 0.0) {
      cols.push_back(v.real());
      picked.push_back(ev[i]);
    } else {
      cols.push_back(v.real());
      cols.push_back(v.imag());
      picked.push_back(ev[i]);
      picked.push_back(std::conj(ev[i]));
    }
  }
  Mat d(at.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    d.col(static_cast<Eigen::Index>(k)) = cols[k];
    canonicalize(d.col(static_cast<Eigen::Index>(k)));
  }
  return d;
}

bool full_column_rank(const Mat& d) {
  if (d.cols() == 0) return true;
  Eigen::JacobiSVD<Mat> svd(d);
  const auto& sv = svd.singularValues();
  return sv(sv.size() - 1) > 1e-10 * std::max(1.0, sv(0));
}

double distance_to_segment(Complex z, Complex a, Complex b) {
  const Complex ab = b - a;
  const double t = std::clamp(((z - a) * std::conj(ab)).real() / std::norm(ab), 0.0, 1.0);
  return std::abs(z - (a + t * ab));
}

}  // namespace

Dichotomy Dichotomy::from_basis(double sigma, const Mat& d) {
  Dichotomy out;
  out.sigma = sigma;
  out.m = static_cast<int>(d.cols());
  out.d = d;
  const Eigen::Index n = d.rows();
  out.eb = out.m > 0 ? linalg::mgs(d) : Mat(n, 0);
  out.x_basis = linalg::orthonormal_complement(out.eb);
  out.p_sigma = Mat::Identity(n, n) - out.eb * out.eb.transpose();
  return out;
}

Dichotomy eig_split(const OseenModel& model, double sigma, double gap_tol) {
  const Mat& a = model.a;
  const auto ev = eigenvalues(a);
  const double gap = line_gap(ev, sigma);
  if (gap <= gap_tol) {
    std::ostringstream os;
    os << "eig_split: an eigenvalue real part lies within " << gap << " of sigma = " << sigma;
    throw GapViolation(os.str());
  }
  std::vector<Complex> picked;
  Mat d = unstable_real_basis(a.transpose(), sigma, picked);
  const int m = static_cast<int>(std::count_if(ev.begin(), ev.end(), [&](const Complex& z) { return z.real() < sigma; }));
  if (d.cols() != m || !full_column_rank(d)) {
    // Defective eigenvalues: fall back to the Schur basis, which also spans
    // the associated vectors.
    d = linalg::schur_invariant_basis(a.transpose(), sigma);
  }
  Dichotomy out = Dichotomy::from_basis(sigma, d);
  out.gap = gap;
  out.unstable_eigenvalues = picked;
  out.p_riesz = eigen_projector(a, sigma);
  return out;
}

Mat eigen_projector(const Mat& a, double sigma) {
  const Eigen::Index n = a.rows();
  const Mat v = linalg::schur_invariant_basis(a, sigma);
  if (v.cols() == 0) return Mat::Zero(n, n);
  const Mat w = linalg::schur_invariant_basis(a.transpose(), sigma);
  return v * (w.transpose() * v).partialPivLu().solve(w.transpose());
}

Mat contour_integral(const Mat& a, const Rect& rect, int n_nodes, const std::function<Complex(Complex)>& f,
                     double touch_tol, double imag_tol) {
  const Eigen::Index n = a.rows();
  const Complex corners[4] = {{rect.re_lo, rect.im_lo}, {rect.re_hi, rect.im_lo}, {rect.re_hi, rect.im_hi},
                              {rect.re_lo, rect.im_hi}};
  for (const Complex& z : eigenvalues(a)) {
    for (int s = 0; s < 4; ++s) {
      if (distance_to_segment(z, corners[s], corners[(s + 1) % 4]) < touch_tol) {
        std::ostringstream os;
        os << "contour passes within " << touch_tol << " of eigenvalue " << z;
        throw ContourTouchesSpectrum(os.str());
      }
    }
  }
  const int per_side = std::max(4, n_nodes / 4);
  const quad::Rule rule = quad::gauss_legendre(per_side);
  const CMat ac = a.cast<Complex>();
  CMat acc = CMat::Zero(n, n);
  const CMat id = CMat::Identity(n, n);
  for (int s = 0; s < 4; ++s) {
    const Complex z0 = corners[s];
    const Complex z1 = corners[(s + 1) % 4];
    const Complex half = 0.5 * (z1 - z0);
    const Complex mid = 0.5 * (z0 + z1);
    for (int i = 0; i < per_side; ++i) {
      const Complex z = mid + half * rule.nodes[i];
      const Complex weight = rule.weights[i] * half * f(z);
      acc += weight * (z * id - ac).partialPivLu().solve(id);
    }
  }
  acc /= Complex(0.0, 2.0 * std::numbers::pi);
  const double residue = acc.imag().norm();
  if (residue > imag_tol * std::max(1.0, acc.real().norm())) {
    std::ostringstream os;
    os << "contour_integral: imaginary residue " << residue << " exceeds tolerance";
    throw ContourTouchesSpectrum(os.str());
  }
  return acc.real();
}

Mat riesz_projector(const OseenModel& model, double sigma, int n_nodes, double gap_tol) {
  const auto ev = eigenvalues(model.a);
  const double gap = line_gap(ev, sigma);
  if (gap <= gap_tol) throw GapViolation("riesz_projector: spectrum touches Re z = sigma");
  double min_re = sigma, max_im = 0.0;
  bool any = false;
  for (const Complex& z : ev) {
    if (z.real() < sigma) {
      any = true;
      min_re = std::min(min_re, z.real());
      max_im = std::max(max_im, std::abs(z.imag()));
    }
  }
  Rect rect{sigma - 1.0, sigma, -1.0, 1.0};
  if (any) {
    const double pad = std::max({sigma - min_re, gap, 1.0});
    rect = {min_re - pad, sigma, -(max_im + pad), max_im + pad};
  }
  return contour_integral(model.a, rect, n_nodes, [](Complex) { return Complex(1.0, 0.0); });
}

Mat semigroup(const OseenModel& model, double tau, SemigroupMethod method, double contour_sigma, int n_nodes) {
  if (tau < 0.0) throw std::invalid_argument("semigroup: tau must be nonnegative");
  const Eigen::Index n = model.a.rows();
  if (method == SemigroupMethod::ScalingSquaring) {
    if (tau == 0.0) return Mat::Identity(n, n);
    return linalg::expm(-tau * model.a);
  }
  const auto ev = eigenvalues(model.a);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, max_im = 0.0;
  for (const Complex& z : ev) {
    if (z.real() <= contour_sigma) continue;
    lo = std::min(lo, z.real());
    hi = std::max(hi, z.real());
    max_im = std::max(max_im, std::abs(z.imag()));
  }
  if (!(hi >= lo)) return Mat::Zero(n, n);
  const double pad = std::max(1.0, 0.25 * (hi - lo));
  const double re_lo = std::isfinite(contour_sigma) ? contour_sigma : lo - pad;
  const Rect rect{re_lo, hi + pad, -(max_im + pad), max_im + pad};
  return contour_integral(model.a, rect, n_nodes, [tau](Complex z) { return std::exp(-z * tau); });
}

ContractionCertificate contraction_certificate(const Dichotomy& dich, const Mat& s) {
  ContractionCertificate c;
  c.gamma0 = dich.x_basis.cols() == 0 ? 0.0 : linalg::norm2(s * dich.x_basis);
  c.ok = c.gamma0 < 1.0;
  return c;
}

ContractionCertificate contraction_certificate(const Dichotomy& dich, const OseenModel& model, double tau) {
  return contraction_certificate(dich, semigroup(model, tau));
}

ContourIntegrals contour_bound_integrals(const OseenModel& model, double sigma, double tau, double theta,
                                         double psi) {
  if (!(psi > std::numbers::pi / 2 && psi < std::numbers::pi))
    throw InvalidContour("contour_bound_integrals: psi must lie in (pi/2, pi)");
  if (!(theta > 0.0)) throw InvalidContour("contour_bound_integrals: theta must be positive");
  const Eigen::Index n = model.a.rows();
  const CMat ac = model.a.cast<Complex>();
  const CMat id = CMat::Identity(n, n);
  auto resolvent_norm = [&](Complex z) {
    Eigen::JacobiSVD<CMat> svd(z * id + ac);
    const double smin = svd.singularValues()(n - 1);
    if (smin == 0.0) throw InvalidContour("contour_bound_integrals: contour meets -spectrum(A)");
    return 1.0 / smin;
  };

  ContourIntegrals out;
  const double half_height = (sigma + theta) * std::tan(std::numbers::pi - psi);
  const double decay = std::exp(-sigma * tau);
  out.i1 = quad::adaptive([&](double y) { return resolvent_norm(Complex(-sigma, y)) * decay; }, -half_height,
                          half_height);

  // Rays theta + r e^{+-i psi}; the two are conjugate, so ||.|| agrees on both.
  const Complex dir = std::polar(1.0, psi);
  const double r0 = (sigma + theta) / std::abs(std::cos(psi));
  auto ray = [&](double r) {
    const Complex z = theta + r * dir;
    return resolvent_norm(z) * std::exp(z.real() * tau);
  };
  double r_end = r0 + 1.0;
  for (int it = 0; it < 200 && ray(r_end) > 1e-16; ++it) r_end = r0 + 2.0 * (r_end - r0);
  out.i2 = 2.0 * quad::adaptive(ray, r0, r_end);
  return out;
}

std::pair<double, double> ladder_segment(int k, int d) {
  return {std::exp(2.0 * k / d), std::exp(2.0 * (k + 1) / d)};
}

Mat SigmaLadder::q(int k) const {
  const Mat e = e_basis.leftCols(n_k.at(k - 1));
  return e * e.transpose();
}

Mat SigmaLadder::stable_basis(int k) const { return linalg::orthonormal_complement(e_basis.leftCols(n_k.at(k - 1))); }

Mat SigmaLadder::middle_basis(int k) const { return e_basis.middleCols(m, n_k.at(k - 1) - m); }

SigmaLadder sigma_ladder(const OseenModel& model, double sigma, int levels, double tau, int grid_points,
                         double gap_tol) {
  if (levels < 1) throw std::invalid_argument("sigma_ladder: need at least one level");
  const auto ev = eigenvalues(model.a);
  SigmaLadder ladder;
  ladder.sigma = sigma;
  ladder.tau = tau;
  double previous = sigma;
  for (int k = 1; k <= levels; ++k) {
    const auto [lo, hi] = ladder_segment(k, model.spectrum.d);
    double best = -1.0, best_s = lo;
    for (int i = 0; i < grid_points; ++i) {
      const double s = lo + (hi - lo) * i / (grid_points - 1);
      if (s <= previous) continue;
      const double dist = line_gap(ev, s);
      if (dist > best) {
        best = dist;
        best_s = s;
      }
    }
    if (best <= gap_tol) {
      std::ostringstream os;
      os << "sigma_ladder: every grid point of segment " << k << " lies within " << gap_tol << " of the spectrum";
      throw EmptyGap(os.str());
    }
    ladder.sigma_list.push_back(best_s);
    ladder.margin.push_back(best);
    ladder.n_k.push_back(
        static_cast<int>(std::count_if(ev.begin(), ev.end(), [&](const Complex& z) { return z.real() < best_s; })));
    previous = best_s;
  }
  const Dichotomy base = eig_split(model, sigma, gap_tol);
  const Dichotomy top = eig_split(model, ladder.sigma_list.back(), gap_tol);
  ladder.m = base.m;
  ladder.e_basis = top.eb;
  return ladder;
}

std::vector<double> tail_contraction(const SigmaLadder& ladder, const Mat& s) {
  std::vector<double> gammas;
  for (int k = 1; k <= ladder.levels(); ++k) {
    const Mat basis = ladder.stable_basis(k);
    gammas.push_back(basis.cols() == 0 ? 0.0 : linalg::norm2(s * basis));
  }
  return gammas;
}

std::vector<double> tail_contraction(const SigmaLadder& ladder, const OseenModel& model, double tau) {
  return tail_contraction(ladder, semigroup(model, tau));
}

}  // namespace kickstab
