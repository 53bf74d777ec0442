// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "kickstab/errors.hpp"
#include "kickstab/experiment.hpp"

namespace kickstab {
namespace {

namespace fs = std::filesystem;

const char* kMinimal = R"({
  "model": {"n": 10, "sigma": 0.5, "seed": 3},
  "kick": {"eps_hat": 0.01},
  "run": {"tau": 2.0}
})";

std::string small_config(const std::string& dir) {
  return R"({
  "model": {"n": 10, "remainder_scale": 1.08, "sigma": 0.5, "seed": 10},
  "kick": {"eps_hat": 0.01},
  "run": {"tau": 2.0, "n_steps": 50, "n_chains": 40, "mixing_chains": 500, "mixing_steps": 30,
          "slln_steps": 20000, "stationary_steps": 10000, "demo_chains": 10, "w0_norm": 100.0},
  "density": {"mc_samples": 20000, "grid": 3},
  "output": {"dir": ")" + dir + R"("}
})";
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("kickstab_test_" + name);
  fs::remove_all(p);
  return p;
}

TEST(Config, MinimalConfigGetsDefaults) {
  ExperimentConfig cfg = parse_config(kMinimal);
  EXPECT_EQ(cfg.model.n, 10);
  EXPECT_EQ(cfg.model.d, 2);
  EXPECT_EQ(cfg.model.n_unstable, 1);
  EXPECT_EQ(cfg.run.n_steps, 200);
  EXPECT_EQ(cfg.kick.proposal, "auto");
  ASSERT_EQ(cfg.model.obs_idx.size(), 5u);
  EXPECT_EQ(cfg.model.obs_idx.front(), 5);
  EXPECT_EQ(cfg.model.obs_idx.back(), 9);
}

TEST(Config, MissingEpsHatNamesTheField) {
  try {
    parse_config(R"({"model": {"n": 10, "sigma": 0.5}, "kick": {}, "run": {"tau": 2.0}})");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("kick.eps_hat"), std::string::npos) << e.what();
  }
}

TEST(Config, UnknownKeyIsRejected) {
  EXPECT_THROW(parse_config(R"({"model": {"n": 10, "sigma": 0.5, "colour": 1},
                                "kick": {"eps_hat": 0.01}, "run": {"tau": 2.0}})"),
               ValidationError);
  EXPECT_THROW(parse_config(R"({"model": {"n": 10, "sigma": 0.5}, "kick": {"eps_hat": 0.01},
                                "run": {"tau": 2.0}, "extras": {}})"),
               ValidationError);
}

TEST(Config, WrongTypeIsRejected) {
  EXPECT_THROW(parse_config(R"({"model": {"n": "ten", "sigma": 0.5}, "kick": {"eps_hat": 0.01},
                                "run": {"tau": 2.0}})"),
               ValidationError);
}

TEST(Config, SyntaxErrorReportsLine) {
  try {
    parse_config("{\n  \"model\": {\n    \"n\": 10,,\n  }\n}");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, SaveLoadRoundTrip) {
  fs::path dir = scratch("roundtrip");
  fs::create_directories(dir);
  ExperimentConfig a = parse_config(small_config((dir / "out").string()));
  save_config(a, (dir / "a.json").string());
  ExperimentConfig b = load_config((dir / "a.json").string());
  EXPECT_EQ(config_to_json(a).dump(), config_to_json(b).dump());
  EXPECT_THROW(load_config((dir / "missing.json").string()), IoError);
  fs::remove_all(dir);
}

TEST(Config, SeedOverrideReplacesEverySeed) {
  ExperimentConfig cfg = parse_config(kMinimal);
  override_seeds(cfg, 77);
  EXPECT_EQ(cfg.model.seed, 77u);
  EXPECT_EQ(cfg.control.seed, 77u);
  EXPECT_EQ(cfg.kick.seed, 77u);
}

TEST(Stages, NamesRoundTrip) {
  for (Stage s : {Stage::Synth, Stage::Dichotomy, Stage::Certify, Stage::Simulate, Stage::Density, Stage::Mixing,
                  Stage::Report})
    EXPECT_EQ(parse_stage(stage_name(s)), s);
  EXPECT_FALSE(parse_stage("simulat").has_value());
}

TEST(Stages, SimulateNeedsEarlierArtifacts) {
  fs::path dir = scratch("prereq");
  ExperimentConfig cfg = parse_config(small_config(dir.string()));
  run_command(Stage::Synth, cfg);
  run_command(Stage::Dichotomy, cfg);
  EXPECT_THROW(run_command(Stage::Simulate, cfg), MissingPrerequisite);
  fs::remove_all(dir);
}

TEST(Stages, PipelineIsReproducible) {
  fs::path a = scratch("pipe_a"), b = scratch("pipe_b");
  StageResult ra = run_pipeline(parse_config(small_config(a.string())), 1);
  StageResult rb = run_pipeline(parse_config(small_config(b.string())), 2);
  EXPECT_EQ(ra.checks_passed, rb.checks_passed);
  auto ca = manifest_checksums(a.string()), cb = manifest_checksums(b.string());
  EXPECT_FALSE(ca.empty());
  EXPECT_EQ(ca, cb);
  EXPECT_TRUE(fs::exists(a / "report.json"));
  fs::remove_all(a);
  fs::remove_all(b);
}

}  // namespace
}  // namespace kickstab
