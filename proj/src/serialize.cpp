// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include "kickstab/serialize.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "kickstab/errors.hpp"

namespace kickstab {

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out(2 * len, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = hex[digest[i] >> 4];
    out[2 * i + 1] = hex[digest[i] & 0xf];
  }
  return out;
}

std::string matrix_hash(const Mat& m) {
  std::string bytes;
  const std::int64_t shape[2] = {m.rows(), m.cols()};
  bytes.append(reinterpret_cast<const char*>(shape), sizeof(shape));
  // Row-major so the hash does not depend on storage order.
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      bytes.append(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  return sha256_hex(bytes);
}

std::string law_hash(const KickLaw& law) {
  std::ostringstream os;
  os << matrix_hash(law.k) << ':' << format_double(law.eps_hat) << ':' << law.seed << ':' << law.stream << ':'
     << static_cast<int>(law.proposal);
  return sha256_hex(os.str());
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

Json to_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const Vec& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Mat mat_from_json(const Json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw ParseError("ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

Vec vec_from_json(const Json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

Json model_to_json(const OseenModel& model) {
  Json j;
  j["n"] = model.n();
  j["d"] = model.spectrum.d;
  j["beta0"] = model.spectrum.beta0;
  j["remainder_scale"] = model.spectrum.remainder_scale;
  j["b"] = model.relative_bound_b;
  j["mu"] = to_json(model.spectrum.mu);
  j["A"] = to_json(model.a);
  j["obs_idx"] = model.obs_idx;
  j["seed"] = model.seed;
  return j;
}

OseenModel model_from_json(const Json& j) {
  try {
    Vec mu = vec_from_json(j.at("mu"));
    OseenModel model = OseenModel::from_matrix(mat_from_json(j.at("A")), mu, j.at("obs_idx").get<IndexSet>());
    model.spectrum.d = j.at("d").get<int>();
    model.spectrum.beta0 = j.at("beta0").get<double>();
    model.spectrum.remainder_scale = j.value("remainder_scale", 0.0);
    model.spectrum.seed = j.at("seed").get<std::uint64_t>();
    model.seed = model.spectrum.seed;
    model.relative_bound_b = j.value("b", model.relative_bound_b);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

Json dichotomy_to_json(const Dichotomy& dich) {
  Json j;
  j["sigma"] = dich.sigma;
  j["m"] = dich.m;
  j["gap"] = dich.gap;
  Json ev = Json::array();
  for (const Complex& z : dich.unstable_eigenvalues) ev.push_back({z.real(), z.imag()});
  j["unstable_eigenvalues"] = ev;
  j["D"] = to_json(dich.d);
  j["Eb"] = to_json(dich.eb);
  return j;
}

Json ladder_to_json(const SigmaLadder& ladder, const std::vector<double>& gamma) {
  Json j;
  j["sigma"] = ladder.sigma;
  j["tau"] = ladder.tau;
  j["sigma_list"] = ladder.sigma_list;
  j["n_k"] = ladder.n_k;
  j["margin"] = ladder.margin;
  j["gamma"] = gamma;
  j["basis"] = to_json(ladder.e_basis);
  return j;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void emit_series(const std::string& path, const std::vector<std::string>& columns,
                 const std::vector<std::vector<double>>& rows) {
  std::string text;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) text += ',';
    text += columns[c];
  }
  text += '\n';
  for (const auto& row : rows) {
    if (row.size() != columns.size()) throw std::invalid_argument("emit_series: ragged row");
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) text += ',';
      text += format_double(row[c]);
    }
    text += '\n';
  }
  write_file(path, text);
}

}  // namespace kickstab
