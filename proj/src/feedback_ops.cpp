// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include "kickstab/feedback_ops.hpp"

#include <sstream>
#include <stdexcept>

#include "kickstab/errors.hpp"
#include "kickstab/linalg.hpp"
#include "kickstab/rng.hpp"

namespace kickstab {

namespace {

void check_gram(const ControlGeometry& geo) {
  if (geo.gram.rows() != geo.gram.cols())
    throw SingularGram("control geometry: need as many directions as unstable modes");
  if (!(geo.cond_gram < kGramCondCutoff)) {
    std::ostringstream os;
    os << "control geometry: Gram matrix condition number " << geo.cond_gram << " exceeds " << kGramCondCutoff;
    throw SingularGram(os.str());
  }
}

}  // namespace

ControlGeometry make_geometry(const Dichotomy& dich, IndexSet obs_idx, const Mat& g) {
  if (g.rows() != dich.n()) throw std::invalid_argument("make_geometry: direction length mismatch");
  for (int i : obs_idx) {
    if (i < 0 || i >= dich.n()) throw std::invalid_argument("make_geometry: obs_idx out of range");
    if ((g.row(i).array() != 0.0).any())
      throw std::invalid_argument("make_geometry: control directions must vanish on obs_idx");
  }
  ControlGeometry geo;
  geo.obs_idx = std::move(obs_idx);
  geo.g = g;
  geo.gram = dich.d.transpose() * g;
  geo.cond_gram = linalg::cond2(geo.gram);
  return geo;
}

ControlGeometry default_geometry(const Dichotomy& dich, IndexSet obs_idx, std::uint64_t seed, int retries) {
  Mat g = dich.d;
  for (int i : obs_idx) g.row(i).setZero();
  ControlGeometry geo = make_geometry(dich, obs_idx, g);
  RngStream rng(seed, 0x6e0);
  for (int attempt = 0; attempt < retries && !(geo.cond_gram < kGramCondCutoff); ++attempt) {
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
    for (int i : obs_idx) g.row(i).setZero();
    geo = make_geometry(dich, obs_idx, g);
  }
  check_gram(geo);
  return geo;
}

FeedbackProjector build_pi(const Dichotomy& dich, const ControlGeometry& geo) {
  check_gram(geo);
  const int n = dich.n();
  FeedbackProjector out;
  out.obs_idx = geo.obs_idx;
  if (dich.m == 0) {
    out.pi = Mat::Identity(n, n);
  } else {
    // Column j of Pi is e_j + G c_j with M c_j = -D^T e_j.
    const Mat c = geo.gram.fullPivLu().solve(-dich.d.transpose());
    out.pi = Mat::Identity(n, n) + geo.g * c;
  }
  for (int i : geo.obs_idx) {
    out.pi.row(i).setZero();
    out.pi(i, i) = 1.0;
  }
  out.norm_pi = linalg::norm2(out.pi);
  return out;
}

Vec apply_pi(const FeedbackProjector& pi, const Vec& phi) { return pi.pi * phi; }

Vec lift(const IndexSet& obs_idx, int n, const Vec& v0_obs) {
  if (v0_obs.size() != static_cast<Eigen::Index>(obs_idx.size()))
    throw std::invalid_argument("lift: v0 length must match obs_idx");
  Vec out = Vec::Zero(n);
  for (std::size_t k = 0; k < obs_idx.size(); ++k) out[obs_idx[k]] = v0_obs[static_cast<Eigen::Index>(k)];
  return out;
}

Vec build_extension(const Dichotomy& dich, const ControlGeometry& geo, const Vec& v0_obs) {
  check_gram(geo);
  const Vec lv = lift(geo.obs_idx, dich.n(), v0_obs);
  if (dich.m == 0) return lv;
  const Vec c = geo.gram.fullPivLu().solve(-dich.d.transpose() * lv);
  Vec out = lv + geo.g * c;
  for (int i : geo.obs_idx) out[i] = lv[i];
  return out;
}

}  // namespace kickstab
