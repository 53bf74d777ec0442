// Copyright 2026 The kickstab Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver for the staged experiment pipeline.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "kickstab/errors.hpp"
#include "kickstab/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;
constexpr int kRuntime = 3;

const char* const kStages[] = {"synth", "dichotomy", "certify", "simulate", "density", "mixing", "report"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kickstab: feedback stabilization under bounded random kicks"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::optional<std::uint64_t> seed_override;

  auto add_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--threads", threads, "worker threads for ensemble runs")->check(CLI::PositiveNumber);
    sub->add_option("--seed-override", seed_override, "replace every seed in the config");
  };
  for (const char* name : kStages) add_flags(app.add_subcommand(name, std::string("run the ") + name + " stage"));
  add_flags(app.add_subcommand("all", "run every stage in order"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    kickstab::ExperimentConfig cfg = kickstab::load_config(config_path);
    if (seed_override) kickstab::override_seeds(cfg, *seed_override);
    if (!out_dir.empty()) cfg.output_dir = out_dir;

    kickstab::StageResult res;
    if (sub->get_name() == "all") {
      res = kickstab::run_pipeline(cfg, threads);
    } else {
      res = kickstab::run_command(*kickstab::parse_stage(sub->get_name()), cfg, threads);
    }
    for (const auto& a : res.artifacts) std::cout << cfg.output_dir << "/" << a << "\n";
    if (!res.checks_passed) {
      std::cerr << sub->get_name() << ": one or more checks failed\n";
      return kCheckFailed;
    }
    return kOk;
  } catch (const kickstab::ParseError& e) {
    std::cerr << "config parse error: " << e.what() << "\n";
    return kUsage;
  } catch (const kickstab::ValidationError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << sub->get_name() << " failed: " << e.what() << "\n";
    return kRuntime;
  }
}
