// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include "kickstab/ergodicity_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "kickstab/errors.hpp"

namespace kickstab {
namespace {

constexpr double kT29 = 2.045229642132703;  // 0.975 quantile of Student t, 29 dof

double clip1(double v) { return std::clamp(v, -1.0, 1.0); }

// Mean of every observable at every step across an ensemble, summed in chain
// order: result(k, f).
Mat ensemble_means(const std::vector<Trajectory>& ens, const ObservableSet& obs) {
  const int steps = static_cast<int>(ens.front().states.cols());
  Mat out = Mat::Zero(steps, static_cast<Eigen::Index>(obs.size()));
  for (const Trajectory& t : ens)
    for (int k = 0; k < steps; ++k)
      for (std::size_t f = 0; f < obs.size(); ++f) out(k, f) += obs.items[f](t.states.col(k));
  return out / static_cast<double>(ens.size());
}

std::vector<double> max_abs_diff(const Mat& a, const Mat& b) {
  std::vector<double> d(a.rows());
  for (Eigen::Index k = 0; k < a.rows(); ++k) d[k] = (a.row(k) - b.row(k)).cwiseAbs().maxCoeff();
  return d;
}

}  // namespace

double Observable::operator()(const Vec& w) const {
  if (kind == Kind::Linear) return clip1(u.dot(w) / scale);
  return clip1(a - (w - c).norm() / scale);
}

ObservableSet make_observables(const Mat& basis, double scale, std::uint64_t seed, int n_linear, int n_radial) {
  if (scale < 1.0) throw std::invalid_argument("observable scale must be >= 1");
  RngStream rng(seed, 0x0b5);
  ObservableSet set;
  const Eigen::Index r = basis.cols();
  for (int i = 0; i < n_linear; ++i) {
    Observable f;
    f.kind = Observable::Kind::Linear;
    f.u = (basis * rng.normal_vector(r)).normalized();
    f.scale = scale;
    set.items.push_back(f);
  }
  for (int i = 0; i < n_radial; ++i) {
    Observable f;
    f.kind = Observable::Kind::Radial;
    f.c = (basis * rng.normal_vector(r)).normalized() * (scale * rng.uniform(0.0, 0.5));
    f.a = rng.uniform(0.0, 1.0);
    f.scale = scale;
    f.u = Vec::Zero(basis.rows());
    set.items.push_back(f);
  }
  return set;
}

TvStats tv_ratio_stats(const PiDecomposition& dec, const KickLaw& law, double eps, int n_pairs, std::uint64_t seed,
                       double lo, double hi, const TvOptions& opts) {
  RngStream rng(seed, 0x7e57);
  TvStats st;
  const double split = std::sqrt(lo * hi);
  for (int i = 0; i < n_pairs; ++i) {
    double sep = eps * lo * std::pow(hi / lo, n_pairs == 1 ? 0.0 : static_cast<double>(i) / (n_pairs - 1));
    Vec v1 = rng.normal_vector(dec.nm) * (0.1 * eps);
    Vec dir = rng.normal_vector(dec.nm).normalized();
    Vec v2 = v1 + sep * dir;
    TvOptions o = opts;
    o.seed = mix64(seed + static_cast<std::uint64_t>(i));
    double ratio = tv_lipschitz_ratio(dec, law, eps, v1, v2, o);
    st.separations.push_back(sep);
    st.ratios.push_back(ratio);
    if (sep < split * eps)
      st.max_small = std::max(st.max_small, ratio);
    else
      st.max_large = std::max(st.max_large, ratio);
  }
  if (st.max_large > 0.0) {
    double q = st.max_small / st.max_large;
    st.stable = q >= 0.5 && q <= 2.0;
  }
  return st;
}

DensitySetup reduced_density_setup(const SigmaLadder& ladder, const Dichotomy& dich, const FeedbackProjector& pi,
                                   const KickLaw& law, int level, const KickLawOptions& opts) {
  DensitySetup setup;
  Mat middle = ladder.middle_basis(level);
  if (middle.cols() == 0) throw EmptyGap("ladder level has an empty middle subspace");
  setup.basis.resize(dich.n(), dich.m + middle.cols());
  setup.basis << dich.eb, middle;
  setup.dec = build_pi_decomposition(alpha_from_pi(pi.pi, dich.eb, middle));
  Mat kr = setup.basis.transpose() * law.k * setup.basis;
  kr = 0.5 * (kr + kr.transpose());
  KickLawOptions o = opts;
  o.proposal = Proposal::Auto;
  if (o.seed == 0) o.seed = law.seed;
  setup.law = make_kick_law(kr, law.eps_hat, o);
  setup.eps = law.eps_hat;
  return setup;
}

ConditionReport condition_check(const OseenModel& model, const Dichotomy& dich, const SigmaLadder& ladder,
                                const FeedbackProjector& pi, const KickLaw& law, double tau, int tv_pairs,
                                std::uint64_t seed, const TvOptions& tv_opts) {
  ConditionReport rep;
  Mat s = semigroup(model, tau);
  ContractionCertificate cert = contraction_certificate(dich, s);
  rep.gamma0 = cert.gamma0;
  rep.contraction_ok = cert.ok;
  rep.gammas = tail_contraction(ladder, s);
  rep.tail_ok = !rep.gammas.empty() && rep.gammas.back() < 0.5 * rep.gamma0;
  for (std::size_t k = 1; k < rep.gammas.size(); ++k)
    if (!(rep.gammas[k] < rep.gammas[k - 1])) rep.tail_ok = false;

  rep.degenerate_law = law.degenerate();
  if (rep.degenerate_law) return rep;
  try {
    DensitySetup setup = reduced_density_setup(ladder, dich, pi, law);
    rep.tv = tv_ratio_stats(setup.dec, setup.law, setup.eps, tv_pairs, seed, 1e-3, 1e-1, tv_opts);
    rep.tv_applicable = true;
    rep.tv_ok = rep.tv.stable;
  } catch (const Error&) {
    rep.tv_applicable = false;
  }
  return rep;
}

MixingReport mixing_decay(const ControlledSystem& sys, const Vec& w0_a, const Vec& w0_b, int n_chains, int n_steps,
                          const ObservableSet& obs, std::uint64_t seed, int threads) {
  if (n_chains < 500) throw std::invalid_argument("mixing_decay needs at least 500 chains");
  auto ens_a = run_ensemble(sys, w0_a, n_chains, n_steps, mix64(seed ^ 0xA), threads, true);
  auto ens_b = run_ensemble(sys, w0_b, n_chains, n_steps, mix64(seed ^ 0xB), threads, true);
  auto ens_c = run_ensemble(sys, w0_a, n_chains, n_steps, mix64(seed ^ 0xC), threads, true);
  Mat ma = ensemble_means(ens_a, obs);
  Mat mb = ensemble_means(ens_b, obs);
  Mat mc = ensemble_means(ens_c, obs);

  MixingReport rep;
  rep.d = max_abs_diff(ma, mb);
  rep.null_d = max_abs_diff(ma, mc);
  rep.noise_floor = std::accumulate(rep.null_d.begin() + 1, rep.null_d.end(), 0.0) / n_steps;

  rep.window_lo = 2;
  rep.window_hi = n_steps;
  for (int k = 2; k <= n_steps; ++k)
    if (!(rep.d[k] > 3.0 * rep.noise_floor)) {
      rep.window_hi = k - 1;
      break;
    }
  if (rep.window_hi - rep.window_lo + 1 < 5) {
    rep.note = "InconclusiveFit: window shorter than 5 steps";
    return rep;
  }
  std::vector<double> xs, ys;
  for (int k = rep.window_lo; k <= rep.window_hi; ++k) {
    xs.push_back(k);
    ys.push_back(std::log(rep.d[k]));
  }
  LineFit fit = fit_line(xs, ys);
  rep.r2 = fit.r2;
  rep.gamma = std::exp(fit.slope);
  rep.c = std::exp(fit.intercept);
  rep.conclusive = fit.r2 > 0.9;
  if (!rep.conclusive) rep.note = "InconclusiveFit: R^2 below 0.9";
  return rep;
}

SllnReport slln_average(const ControlledSystem& sys, const Vec& w0, int n_steps, const ObservableSet& obs,
                        std::uint64_t seed, std::vector<int> checkpoints) {
  if (checkpoints.empty())
    for (long p = 1000; p <= n_steps; p *= 10) {
      checkpoints.push_back(static_cast<int>(p));
      if (2 * p <= n_steps) checkpoints.push_back(static_cast<int>(2 * p));
    }
  std::sort(checkpoints.begin(), checkpoints.end());

  SllnReport rep;
  rep.n_steps = n_steps;
  rep.checkpoints = checkpoints;
  const int n = sys.n();
  const std::size_t nf = obs.size();
  const int batch = n_steps / kBatches;
  if (batch < 1) throw std::invalid_argument("slln_average needs at least 30 steps");

  KickSampler sampler(sys.law, chain_stream(seed, 0));
  Vec w = w0;
  Vec state_sum = Vec::Zero(n);
  std::vector<double> f_sum(nf, 0.0);
  Mat batch_state = Mat::Zero(n, kBatches);
  Mat batch_f = Mat::Zero(static_cast<Eigen::Index>(nf), kBatches);
  std::size_t next_cp = 0;
  for (int k = 1; k <= n_steps; ++k) {
    Vec next = sys.s * w;
    next.noalias() += sys.pi.pi * sampler.sample();
    w = std::move(next);
    state_sum += w;
    int b = (k - 1) / batch;
    if (b < kBatches) batch_state.col(b) += w;
    for (std::size_t f = 0; f < nf; ++f) {
      double v = obs.items[f](w);
      f_sum[f] += v;
      if (b < kBatches) batch_f(f, b) += v;
    }
    while (next_cp < checkpoints.size() && checkpoints[next_cp] == k) {
      std::vector<double> avg(nf);
      for (std::size_t f = 0; f < nf; ++f) avg[f] = f_sum[f] / k;
      rep.f_avg.push_back(avg);
      rep.state_avg.push_back(state_sum / k);
      ++next_cp;
    }
  }
  batch_state /= batch;
  batch_f /= batch;
  auto ci = [](const Eigen::RowVectorXd& means) {
    double mu = means.mean();
    double var = (means.array() - mu).square().sum() / (kBatches - 1);
    return std::pair{mu, kT29 * std::sqrt(var / kBatches)};
  };
  rep.state_mean.resize(n);
  rep.state_ci.resize(n);
  for (int i = 0; i < n; ++i) {
    auto [mu, half] = ci(batch_state.row(i));
    rep.state_mean[i] = mu;
    rep.state_ci[i] = half;
  }
  for (std::size_t f = 0; f < nf; ++f) {
    auto [mu, half] = ci(batch_f.row(f));
    rep.f_mean.push_back(mu);
    rep.f_ci.push_back(half);
  }
  return rep;
}

int default_burn_in(double eps_hat, double w0_norm, double gamma0) {
  if (w0_norm <= eps_hat || gamma0 <= 0.0) return 0;
  if (gamma0 >= 1.0) throw std::invalid_argument("burn-in needs gamma0 < 1");
  return static_cast<int>(std::ceil(std::log(eps_hat / w0_norm) / std::log(gamma0)));
}

StationaryStats stationary_stats(const ControlledSystem& sys, const Vec& w0, int n_steps, int burn_in,
                                 std::uint64_t seed, int hist_bins) {
  const int n = sys.n();
  const int batch = n_steps / kBatches;
  if (batch < 2) throw std::invalid_argument("stationary_stats needs at least 60 steps");
  KickSampler sampler(sys.law, chain_stream(seed, 0));
  Vec w = w0;
  for (int k = 0; k < burn_in; ++k) {
    Vec next = sys.s * w;
    next.noalias() += sys.pi.pi * sampler.sample();
    w = std::move(next);
  }
  StationaryStats st;
  st.n_samples = batch * kBatches;
  Vec sum = Vec::Zero(n);
  Mat outer = Mat::Zero(n, n);
  std::vector<Mat> batch_outer(kBatches, Mat::Zero(n, n));
  std::vector<double> norms;
  norms.reserve(st.n_samples);
  for (int k = 0; k < st.n_samples; ++k) {
    Vec next = sys.s * w;
    next.noalias() += sys.pi.pi * sampler.sample();
    w = std::move(next);
    sum += w;
    Mat ww = w * w.transpose();
    outer += ww;
    batch_outer[k / batch] += ww;
    norms.push_back(w.norm());
  }
  st.mean = sum / st.n_samples;
  st.cov = outer / st.n_samples - st.mean * st.mean.transpose();
  st.cov = 0.5 * (st.cov + st.cov.transpose());
  Mat bmean = Mat::Zero(n, n);
  for (auto& b : batch_outer) {
    b /= batch;
    bmean += b;
  }
  bmean /= kBatches;
  Mat var = Mat::Zero(n, n);
  for (const auto& b : batch_outer) var += (b - bmean).cwiseAbs2();
  st.cov_se = (var / ((kBatches - 1.0) * kBatches)).cwiseSqrt();

  Eigen::SelfAdjointEigenSolver<Mat> es(st.cov, Eigen::EigenvaluesOnly);
  st.min_cov_eig = es.eigenvalues().minCoeff();
  st.max_norm = *std::max_element(norms.begin(), norms.end());
  if (!std::isfinite(st.max_norm)) throw std::runtime_error("stationary_stats: trajectory diverged");
  st.hist_counts.assign(hist_bins, 0);
  st.hist_edges.resize(hist_bins + 1);
  double top = st.max_norm > 0.0 ? st.max_norm : 1.0;
  for (int i = 0; i <= hist_bins; ++i) st.hist_edges[i] = top * i / hist_bins;
  for (double v : norms) st.hist_counts[std::min(hist_bins - 1, static_cast<int>(v / top * hist_bins))]++;
  return st;
}

Mat discrete_lyapunov(const Mat& t, const Mat& q, const Mat& basis) {
  const Eigen::Index r = basis.cols();
  Mat tr = basis.transpose() * t * basis;
  Mat qr = basis.transpose() * q * basis;
  Mat sys = Mat::Identity(r * r, r * r);
  // vec(T X T^T) = (T kron T) vec(X), column-major vec.
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j) sys.block(i * r, j * r, r, r) -= tr(i, j) * tr;
  Vec rhs = Eigen::Map<const Vec>(qr.data(), r * r);
  Vec sol = sys.partialPivLu().solve(rhs);
  Mat xr = Eigen::Map<const Mat>(sol.data(), r, r);
  xr = 0.5 * (xr + xr.transpose());
  return basis * xr * basis.transpose();
}

EnergyTest energy_distance_test(const Mat& x, const Mat& y, int permutations, std::uint64_t seed) {
  const Eigen::Index nx = x.cols(), ny = y.cols(), nt = nx + ny;
  Mat pooled(x.rows(), nt);
  pooled << x, y;
  Mat dist(nt, nt);
  for (Eigen::Index i = 0; i < nt; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < nt; ++j) dist(i, j) = dist(j, i) = (pooled.col(i) - pooled.col(j)).norm();
  }
  auto stat = [&](const std::vector<Eigen::Index>& idx) {
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (Eigen::Index i = 0; i < nx; ++i) {
      for (Eigen::Index j = 0; j < ny; ++j) sxy += dist(idx[i], idx[nx + j]);
      for (Eigen::Index j = 0; j < nx; ++j) sxx += dist(idx[i], idx[j]);
    }
    for (Eigen::Index i = 0; i < ny; ++i)
      for (Eigen::Index j = 0; j < ny; ++j) syy += dist(idx[nx + i], idx[nx + j]);
    double e = 2.0 * sxy / (nx * ny) - sxx / (nx * nx) - syy / (ny * ny);
    return static_cast<double>(nx * ny) / nt * e;
  };
  std::vector<Eigen::Index> idx(nt);
  std::iota(idx.begin(), idx.end(), 0);
  EnergyTest out;
  out.statistic = stat(idx);
  RngStream rng(seed, 0xE7);
  int exceed = 0;
  for (int p = 0; p < permutations; ++p) {
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    if (stat(idx) >= out.statistic) ++exceed;
  }
  out.p_value = (1.0 + exceed) / (permutations + 1.0);
  return out;
}

}  // namespace kickstab
