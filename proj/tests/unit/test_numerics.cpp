// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "kickstab/linalg.hpp"
#include "kickstab/quadrature.hpp"
#include "kickstab/rng.hpp"
#include "kickstab/serialize.hpp"

namespace kickstab {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("kickstab_numerics_" + name);
  fs::remove_all(p);
  return p;
}

TEST(Linalg, ExpmOfDiagonal) {
  Mat a = Vec::LinSpaced(4, -1.0, 2.0).asDiagonal();
  Mat e = linalg::expm(a);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(e(i, i), std::exp(a(i, i)), 1e-13 * std::exp(a(i, i)));
  EXPECT_NEAR((e - Mat(e.diagonal().asDiagonal())).norm(), 0.0, 1e-14);
}

TEST(Linalg, ExpmOfNilpotent) {
  Mat a = Mat::Zero(3, 3);
  a(0, 1) = 1.0;
  a(1, 2) = 1.0;
  Mat e = linalg::expm(a);
  Mat want = Mat::Identity(3, 3) + a + 0.5 * a * a;
  EXPECT_LT((e - want).norm(), 1e-14);
}

TEST(Linalg, ModifiedGramSchmidtIsOrthonormal) {
  RngStream rng(1);
  Mat d(8, 3);
  for (int j = 0; j < 3; ++j) d.col(j) = rng.normal_vector(8);
  Mat q = linalg::mgs(d);
  EXPECT_LT((q.transpose() * q - Mat::Identity(3, 3)).norm(), 1e-13);
  Mat c = linalg::orthonormal_complement(q);
  EXPECT_EQ(c.cols(), 5);
  EXPECT_LT((q.transpose() * c).norm(), 1e-13);
}

TEST(Quadrature, GaussLegendreIsExactForPolynomials) {
  quad::Rule r = quad::gauss_legendre(8, 0.0, 2.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) acc += r.weights[i] * std::pow(r.nodes[i], 15);
  EXPECT_NEAR(acc, std::pow(2.0, 16) / 16.0, 1e-9);
}

TEST(Quadrature, BallVolumes) {
  for (int dim = 1; dim <= 3; ++dim) {
    double v = quad::ball_integrate(dim, 1.5, [](const Vec&) { return 1.0; }, {16, 32});
    EXPECT_NEAR(v, quad::unit_ball_volume(dim) * std::pow(1.5, dim), 1e-12) << dim;
  }
}

TEST(Quadrature, SphereWeightsSumToArea) {
  std::vector<Vec> dirs;
  std::vector<double> w;
  quad::sphere_rule(3, 32, dirs, w);
  double area = 0.0;
  for (double x : w) area += x;
  EXPECT_NEAR(area, 4.0 * std::numbers::pi, 1e-12);
  for (const Vec& d : dirs) EXPECT_NEAR(d.norm(), 1.0, 1e-14);
}

TEST(Quadrature, BallSecondMoment) {
  // Integral of |t|^2 over the unit 3-ball is 4 pi / 5.
  double v = quad::ball_integrate(3, 1.0, [](const Vec& t) { return t.squaredNorm(); }, {16, 32});
  EXPECT_NEAR(v, 4.0 * std::numbers::pi / 5.0, 1e-12);
}

TEST(Quadrature, AdaptiveGaussKronrod) {
  double err = 0.0;
  double v = quad::adaptive([](double x) { return std::exp(-x * x); }, -6.0, 6.0, 1e-12, &err);
  EXPECT_NEAR(v, std::sqrt(std::numbers::pi), 1e-12);
}

TEST(Serialize, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Serialize, FormatDoubleRoundTrips) {
  RngStream rng(2);
  for (int i = 0; i < 1000; ++i) {
    double x = rng.normal() * std::pow(10.0, rng.uniform(-20.0, 20.0));
    EXPECT_EQ(std::stod(format_double(x)), x);
  }
}

TEST(Serialize, MatrixJsonRoundTrip) {
  RngStream rng(3);
  Mat m(3, 4);
  for (int i = 0; i < 12; ++i) m.data()[i] = rng.normal();
  Mat back = mat_from_json(Json::parse(to_json(m).dump()));
  EXPECT_EQ(back, m);
}

TEST(Serialize, MatrixHashSeesShape) {
  Mat a = Mat::Zero(2, 3);
  Mat b = Mat::Zero(3, 2);
  EXPECT_NE(matrix_hash(a), matrix_hash(b));
  EXPECT_EQ(matrix_hash(a), matrix_hash(Mat::Zero(2, 3)));
}

TEST(EmitSeries, EmptyRowsGiveHeaderOnly) {
  fs::path dir = scratch("empty");
  fs::create_directories(dir);
  emit_series((dir / "s.csv").string(), {"a", "b"}, {});
  EXPECT_EQ(read_file((dir / "s.csv").string()), "a,b\n");
}

TEST(EmitSeries, RowCountAndRoundTrip) {
  fs::path dir = scratch("rows");
  fs::create_directories(dir);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 17; ++i) rows.push_back({double(i), 1.0 / 3.0 + i, std::exp(-i * 1.7)});
  emit_series((dir / "s.csv").string(), {"k", "x", "y"}, rows);
  std::istringstream in(read_file((dir / "s.csv").string()));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "k,x,y");
  int count = 0;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    for (int c = 0; c < 3; ++c) {
      std::getline(cells, cell, ',');
      EXPECT_EQ(std::stod(cell), rows[count][c]);
    }
    ++count;
  }
  EXPECT_EQ(count, 17);
}

TEST(EmitSeries, ReEmissionIsByteIdentical) {
  fs::path dir = scratch("twice");
  fs::create_directories(dir);
  std::vector<std::vector<double>> rows = {{0.1, 0.2}, {1e-300, -7.25}};
  emit_series((dir / "a.csv").string(), {"u", "v"}, rows);
  emit_series((dir / "b.csv").string(), {"u", "v"}, rows);
  EXPECT_EQ(read_file((dir / "a.csv").string()), read_file((dir / "b.csv").string()));
}

TEST(EmitSeries, RaggedRowsAndBadPathThrow) {
  fs::path dir = scratch("bad");
  fs::create_directories(dir);
  EXPECT_ANY_THROW(emit_series((dir / "r.csv").string(), {"a", "b"}, {{1.0}}));
  EXPECT_ANY_THROW(emit_series((dir / "missing" / "x.csv").string(), {"a"}, {{1.0}}));
}

}  // namespace
}  // namespace kickstab
