// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kickstab/serialize.hpp"
#include "kickstab/types.hpp"

namespace kickstab {

inline constexpr const char* kToolVersion = "0.1.0";

struct ModelSection {
  int n = 0;
  int d = 2;
  double beta0 = 1.0;
  double remainder_scale = 0.0;
  double b = 0.5;
  int n_unstable = 1;
  double sigma = 0.0;
  IndexSet obs_idx;  // default: upper half of the coordinates
  std::uint64_t seed = 0;
};

struct ControlSection {
  std::string geometry = "default";  // "default" | "explicit"
  Mat g;                             // explicit directions, n x m
  std::uint64_t seed = 0;
};

struct KickSection {
  std::string k_kind = "diag";  // "diag" | "dense"
  std::vector<double> entries;  // diag entries; empty means j^{-decay}
  double decay = 2.0;
  Mat dense;
  double eps_hat = 0.0;
  std::uint64_t seed = 0;
  std::string proposal = "auto";  // "gaussian" | "ball" | "auto"
};

struct RunSection {
  double tau = 0.0;
  int n_steps = 200;
  int n_chains = 1000;
  std::optional<int> burn_in;  // default from the contraction estimate
  int ladder_levels = 3;
  int mixing_chains = 500;
  int mixing_steps = 100;
  double w0_norm = 1e4;
  int slln_steps = 100000;
  int stationary_steps = 60000;
  int demo_chains = 100;
};

struct DensitySection {
  std::string alpha_source = "pi";  // "pi" | "explicit"
  Mat alpha;
  Mat k;  // explicit-mode covariance on R^{m + nm}; identity when empty
  double eps = 0.0;  // explicit-mode radius; kick.eps_hat when 0
  int level = 1;
  int radial = 64;
  int angular = 256;
  int grid = 5;  // points per axis of the exported density grid
  int mc_samples = 200000;
  int tv_pairs = 20;
};

struct ExperimentConfig {
  ModelSection model;
  ControlSection control;
  KickSection kick;
  RunSection run;
  DensitySection density;
  std::string output_dir = "out";
};

/// Parse, default and validate. Unknown keys are rejected. Throws ParseError
/// (with line and column) or ValidationError naming the offending field.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
Json config_to_json(const ExperimentConfig& cfg);
void save_config(const ExperimentConfig& cfg, const std::string& path);

/// Replace every seed in the config.
void override_seeds(ExperimentConfig& cfg, std::uint64_t seed);

enum class Stage { Synth, Dichotomy, Certify, Simulate, Density, Mixing, Report };

std::optional<Stage> parse_stage(const std::string& name);
std::string stage_name(Stage s);

struct StageResult {
  bool checks_passed = true;
  std::vector<std::string> artifacts;
};

/// Run one stage into cfg.output_dir, updating manifest.json. Throws
/// MissingPrerequisite when an earlier stage's artifact is absent; module
/// errors are rethrown with the stage name prepended.
StageResult run_command(Stage stage, const ExperimentConfig& cfg, int threads = 0);

/// synth through report in order.
StageResult run_pipeline(const ExperimentConfig& cfg, int threads = 0);

/// Artifact checksums recorded in the manifest (name -> sha256).
std::map<std::string, std::string> manifest_checksums(const std::string& dir);

}  // namespace kickstab
