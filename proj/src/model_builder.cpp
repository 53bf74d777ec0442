// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include "kickstab/model_builder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kickstab/errors.hpp"
#include "kickstab/linalg.hpp"
#include "kickstab/rng.hpp"

namespace kickstab {

double StokesSpectrum::remainder_ratio() const {
  double worst = 0.0;
  for (int j = 1; j <= n; ++j) {
    const double lead = std::pow(static_cast<double>(j), 2.0 / d);
    const double envelope = lead / std::log(j + 2.0);
    worst = std::max(worst, std::abs(mu[j - 1] - beta0 * lead) / envelope);
  }
  return worst;
}

StokesSpectrum synth_stokes_spectrum(int n, int d, double beta0, double remainder_scale, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("synth_stokes_spectrum: n must be >= 1");
  if (d != 2 && d != 3) throw std::invalid_argument("synth_stokes_spectrum: d must be 2 or 3");
  if (!(beta0 > 0.0)) throw std::invalid_argument("synth_stokes_spectrum: beta0 must be positive");
  if (remainder_scale < 0.0 || remainder_scale >= beta0 * std::log(3.0))
    throw std::invalid_argument("synth_stokes_spectrum: remainder_scale must lie in [0, beta0 ln 3)");

  StokesSpectrum s;
  s.n = n;
  s.d = d;
  s.beta0 = beta0;
  s.remainder_scale = remainder_scale;
  s.seed = seed;
  s.mu.resize(n);
  RngStream rng(seed, 0x5370);
  for (int j = 1; j <= n; ++j) {
    const double lead = std::pow(static_cast<double>(j), 2.0 / d);
    const double u = remainder_scale > 0.0 ? rng.uniform(-1.0, 1.0) : 0.0;
    s.mu[j - 1] = beta0 * lead + u * remainder_scale * lead / std::log(j + 2.0);
  }
  // Both envelope edges are nondecreasing in j, so the sorted values keep the
  // per-index bound.
  std::sort(s.mu.begin(), s.mu.end());
  return s;
}

std::vector<EigenRecord> eigen_records(const Mat& a, double merge_tol) {
  Eigen::EigenSolver<Mat> es(a, false);
  std::vector<Complex> ev(es.eigenvalues().begin(), es.eigenvalues().end());
  std::sort(ev.begin(), ev.end(), [](const Complex& x, const Complex& y) {
    if (x.real() != y.real()) return x.real() < y.real();
    return x.imag() < y.imag();
  });
  std::vector<EigenRecord> out;
  for (const Complex& z : ev) {
    if (!out.empty() && std::abs(out.back().re - z.real()) < merge_tol &&
        std::abs(out.back().im - z.imag()) < merge_tol) {
      ++out.back().multiplicity;
      continue;
    }
    out.push_back({z.real(), z.imag(), 1});
  }
  return out;
}

OseenModel OseenModel::from_matrix(const Mat& a, const Vec& mu, IndexSet obs_idx) {
  OseenModel m;
  m.spectrum.n = static_cast<int>(mu.size());
  m.spectrum.mu = mu;
  m.a = a;
  m.a0 = mu.asDiagonal();
  m.a1 = a - m.a0;
  m.obs_idx = std::move(obs_idx);
  m.relative_bound_b = (mu.array() > 0.0).all() ? verify_relative_bound(m) : 0.0;
  m.spectrum_cache = eigen_records(a);
  return m;
}

double verify_relative_bound(const OseenModel& model) {
  const Vec& mu = model.spectrum.mu;
  if ((mu.array() <= 0.0).any()) throw SingularA0("verify_relative_bound: A0 has a non-positive eigenvalue");
  const Vec inv_sqrt = mu.array().rsqrt();
  return linalg::norm2(model.a1 * inv_sqrt.asDiagonal());
}

namespace {

int count_below(const Mat& a, double sigma, double gap_tol, bool& gap_ok) {
  Eigen::EigenSolver<Mat> es(a, false);
  int count = 0;
  gap_ok = true;
  for (const Complex& z : es.eigenvalues()) {
    if (z.real() < sigma) ++count;
    if (std::abs(z.real() - sigma) <= gap_tol) gap_ok = false;
  }
  return count;
}

}  // namespace

OseenModel build_oseen(const StokesSpectrum& spec, double b, int n_unstable, double sigma, IndexSet obs_idx,
                       std::uint64_t seed, const BuildOptions& opts) {
  const int n = spec.n;
  if (n_unstable < 0 || n_unstable >= n) throw std::invalid_argument("build_oseen: need 0 <= n_unstable < n");
  if (b < 0.0) throw std::invalid_argument("build_oseen: b must be nonnegative");
  if ((spec.mu.array() <= 0.0).any()) throw SingularA0("build_oseen: A0 has a non-positive eigenvalue");
  for (int i : obs_idx)
    if (i < 0 || i >= n) throw std::invalid_argument("build_oseen: obs_idx out of range");

  const Mat a0 = spec.mu.asDiagonal();
  const Vec inv_sqrt = spec.mu.array().rsqrt();

  auto finish = [&](const Mat& a1) {
    OseenModel m;
    m.spectrum = spec;
    m.a0 = a0;
    m.a1 = a1;
    m.a = a0 + a1;
    m.obs_idx = obs_idx;
    m.seed = seed;
    m.relative_bound_b = b == 0.0 ? 0.0 : verify_relative_bound(m);
    m.spectrum_cache = eigen_records(m.a);
    return m;
  };

  if (b == 0.0) {
    bool gap_ok = true;
    if (count_below(a0, sigma, opts.gap_tol, gap_ok) == n_unstable && gap_ok) return finish(Mat::Zero(n, n));
    throw ConstructionFailed("build_oseen: b = 0 leaves the unperturbed spectrum, which has " +
                             std::to_string(count_below(a0, sigma, opts.gap_tol, gap_ok)) +
                             " eigenvalues below sigma (1 attempt)");
  }

  Mat shift = Mat::Zero(n, n);
  for (int j = 0; j < n_unstable; ++j) shift(j, j) = -std::sqrt(spec.mu[j]);

  RngStream rng(seed, 0xA1);
  int attempts = 0;
  for (int draw = 0; draw < opts.max_attempts; ++draw) {
    Mat noise(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) noise(i, j) = rng.normal();
    noise /= linalg::norm2(noise * inv_sqrt.asDiagonal());
    for (int step = 0; step <= 8; ++step) {
      const double t = n_unstable > 0 ? 0.8 - 0.1 * step : 0.0;
      ++attempts;
      Mat blend = (1.0 - t) * noise + t * shift;
      blend *= b / linalg::norm2(blend * inv_sqrt.asDiagonal());
      bool gap_ok = true;
      if (count_below(a0 + blend, sigma, opts.gap_tol, gap_ok) == n_unstable && gap_ok) return finish(blend);
      if (n_unstable == 0) break;
    }
  }
  throw ConstructionFailed("build_oseen: could not realize " + std::to_string(n_unstable) +
                           " unstable eigenvalues after " + std::to_string(attempts) + " attempts");
}

}  // namespace kickstab
