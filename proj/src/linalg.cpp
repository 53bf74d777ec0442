// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include "kickstab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <lapacke.h>

namespace kickstab::linalg {

namespace {

// Degree-13 Pade coefficients (Higham 2005).
constexpr double kPade13[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                              1187353796428800.0,  129060195264000.0,   10559470521600.0,
                              670442572800.0,      33522128640.0,       1323241920.0,
                              40840800.0,          960960.0,            16380.0,
                              182.0,               1.0};
constexpr double kTheta13 = 5.371920351148152;

thread_local double g_select_sigma = 0.0;

lapack_logical select_below_sigma(const double* wr, const double* /*wi*/) {
  return *wr < g_select_sigma ? 1 : 0;
}

}  // namespace

Mat expm(const Mat& m) {
  const Eigen::Index n = m.rows();
  if (n == 0) return m;
  const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  if (norm1 > kTheta13) s = static_cast<int>(std::ceil(std::log2(norm1 / kTheta13)));
  const Mat a = m / std::ldexp(1.0, s);
  const Mat id = Mat::Identity(n, n);
  const Mat a2 = a * a;
  const Mat a4 = a2 * a2;
  const Mat a6 = a4 * a2;
  const double* b = kPade13;
  const Mat u_inner = b[13] * a6 + b[11] * a4 + b[9] * a2;
  const Mat u = a * (a6 * u_inner + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
  const Mat v_inner = b[12] * a6 + b[10] * a4 + b[8] * a2;
  const Mat v = a6 * v_inner + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
  Mat r = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < s; ++k) r = r * r;
  return r;
}

double norm2(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

double cond2(const Mat& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / smin;
}

Mat mgs(const Mat& d) {
  Mat q = d;
  for (Eigen::Index k = 0; k < q.cols(); ++k) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index j = 0; j < k; ++j) q.col(k) -= q.col(j).dot(q.col(k)) * q.col(j);
    }
    const double nrm = q.col(k).norm();
    if (nrm == 0.0) throw std::invalid_argument("mgs: linearly dependent columns");
    q.col(k) /= nrm;
  }
  return q;
}

Mat orthonormal_complement(const Mat& q) {
  const Eigen::Index n = q.rows();
  const Eigen::Index m = q.cols();
  if (m == 0) return Mat::Identity(n, n);
  Eigen::HouseholderQR<Mat> qr(q);
  const Mat full = qr.householderQ() * Mat::Identity(n, n);
  return full.rightCols(n - m);
}

Mat schur_invariant_basis(const Mat& a, double sigma) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  Mat t = a;
  Mat z(n, n);
  Vec wr(n), wi(n);
  lapack_int sdim = 0;
  g_select_sigma = sigma;
  const lapack_int info = LAPACKE_dgees(LAPACK_COL_MAJOR, 'V', 'S', select_below_sigma, n, t.data(), n,
                                        &sdim, wr.data(), wi.data(), z.data(), n);
  if (info != 0 && info != n + 2) throw std::runtime_error("dgees failed, info=" + std::to_string(info));
  return z.leftCols(sdim);
}

}  // namespace kickstab::linalg
