// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "kickstab/kick_measure.hpp"
#include "kickstab/model_builder.hpp"
#include "kickstab/spectral_dichotomy.hpp"
#include "kickstab/types.hpp"

namespace kickstab {

using Json = nlohmann::ordered_json;

std::string sha256_hex(const std::string& bytes);
/// SHA-256 of the shape and raw little-endian doubles of a matrix.
std::string matrix_hash(const Mat& m);
std::string law_hash(const KickLaw& law);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);

Json to_json(const Mat& m);  // row-major nested arrays
Json to_json(const Vec& v);
Mat mat_from_json(const Json& j);
Vec vec_from_json(const Json& j);

Json model_to_json(const OseenModel& model);
OseenModel model_from_json(const Json& j);
Json dichotomy_to_json(const Dichotomy& dich);
Json ladder_to_json(const SigmaLadder& ladder, const std::vector<double>& gamma);

/// Write a CSV with a header row and round-trip exact floats. Throws IoError.
void emit_series(const std::string& path, const std::vector<std::string>& columns,
                 const std::vector<std::vector<double>>& rows);

/// Write text to a file, throwing IoError on failure.
void write_file(const std::string& path, const std::string& text);
std::string read_file(const std::string& path);

}  // namespace kickstab
