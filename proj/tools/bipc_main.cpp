// bipc: run adaptation experiments, ablation grids and the invariant self-test.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "bipc/experiment.hpp"
#include "bipc/selfcheck.hpp"

namespace {

using namespace bipc;

cli::ExperimentConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cli::ConfigError("", "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return cli::parse_config(ss.str());
}

int report(const std::vector<cli::RunRecord>& records) {
  int code = cli::kExitOk;
  for (const auto& r : records) {
    if (r.mode == cli::Mode::fig1) {
      std::printf("%s: feature_distance=%.4f probability_distance=%.4f probability_smaller=%s\n",
                  r.name.c_str(), r.distances.feature_distance, r.distances.probability_distance,
                  r.distances.probability_distance < r.distances.feature_distance ? "true" : "false");
    } else if (r.complete) {
      std::printf("%s: target_acc=%.4f (%s)\n", r.name.c_str(), r.final_target_acc,
                  r.directory.string().c_str());
    } else {
      std::printf("%s: INCOMPLETE %s\n", r.name.c_str(), r.error.c_str());
      code = cli::kExitDiverged;
    }
  }
  return code;
}

template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const cli::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return cli::kExitConfig;
  } catch (const TrainingDiverged& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return cli::kExitDiverged;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::kExitIo;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bidirectional probability calibration for domain adaptation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string axis;

  auto* run = app.add_subcommand("run", "Run the pipeline selected by the config's mode");
  run->add_option("config", config_path, "Config file")->required();

  auto* grid = app.add_subcommand("grid", "Run an ablation grid on shared data and seed");
  grid->add_option("config", config_path, "Config file")->required();
  grid->add_option("--axis", axis, "beta_variant | penalty_variant | components | pda_threshold")
      ->required();

  auto* fig1 = app.add_subcommand("fig1", "Domain gap in feature vs probability space");
  fig1->add_option("config", config_path, "Config file")->required();

  auto* selftest = app.add_subcommand("selftest", "Run the invariant self-checks");

  CLI11_PARSE(app, argc, argv);

  if (*run) return guarded([&] { return report(cli::run_experiment(load(config_path))); });
  if (*grid)
    return guarded([&] {
      return report(cli::run_grid(load(config_path), cli::parse_axis(axis)));
    });
  if (*fig1)
    return guarded([&] {
      auto cfg = load(config_path);
      cfg.mode = cli::Mode::fig1;
      return report(cli::run_experiment(cfg));
    });
  if (*selftest) {
    int failed = 0;
    for (const auto& c : run_selfchecks()) {
      std::printf("%s  %s%s%s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                  c.detail.empty() ? "" : ": ", c.detail.c_str());
      failed += !c.passed;
    }
    return failed == 0 ? 0 : 1;
  }
  return 0;
}
