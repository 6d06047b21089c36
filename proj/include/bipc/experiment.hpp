#pragma once

// Experiment pipelines behind the command line: data generation, pretraining,
// adaptation runs, ablation grids and the report files they write.
//
// Per run directory:
//   epochs.csv    epoch,target_acc,l_cls,l_cpa,l_cgi,lambda2,lambda3,eta
//   summary.json  run metadata and final metrics (no wall-clock fields)
//   params.ckpt   final parameters (checkpoint text format)
//   timing.txt    wall time in seconds; the only non-reproducible output
// fig1 mode writes distances.json instead of training.
// A grid writes one run directory per point and <axis>_comparison.csv.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bipc/config.hpp"
#include "bipc/metrics.hpp"
#include "bipc/trainer.hpp"

namespace bipc::cli {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitDiverged = 3, kExitIo = 4 };

enum class Axis { beta_variant, penalty_variant, components, pda_threshold };

const char* axis_name(Axis a) noexcept;
Axis parse_axis(const std::string& text);

struct RunRecord {
  std::string name;
  Mode mode = Mode::uda;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<train::EpochRecord> epochs;
  bool complete = false;
  std::string error;
  double pretrain_heldout_acc = 0.0;
  double final_target_acc = 0.0;
  metrics::Fig1Distances distances;  // after adaptation, or of the pretrained model in fig1 mode
  double wall_seconds = 0.0;
  std::filesystem::path directory;
};

/// Data pair and pretrained model shared by every run of one experiment.
struct Prepared {
  data::UdaPair pair;
  model::ParamGroups pretrained;
  double pretrain_heldout_acc = 0.0;
};

Prepared prepare(const ExperimentConfig& cfg);

/// `cfg.output_dir`, resolved against $BIPC_OUTPUT_ROOT when that is set and
/// the directory is relative.
std::filesystem::path output_root(const ExperimentConfig& cfg);

/// Runs the pipeline selected by cfg.mode. Ablation modes run the matching grid.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg);

/// One run per grid point on shared data and seed. A failing point is
/// recorded as incomplete and the grid continues.
std::vector<RunRecord> run_grid(const ExperimentConfig& base, Axis axis);

/// Grid points as (name, config) pairs, in report order.
std::vector<std::pair<std::string, ExperimentConfig>> grid_points(const ExperimentConfig& base,
                                                                  Axis axis);

/// Training configuration for a mode (baseline zeroes lambda2/lambda3, pda
/// enables the mask).
train::ScheduleConfig effective_schedule(const ExperimentConfig& cfg);
train::TrainConfig effective_train(const ExperimentConfig& cfg);

// Report files.
std::string epochs_csv(const std::vector<train::EpochRecord>& epochs);
std::vector<train::EpochRecord> parse_epochs_csv(const std::string& text);
std::string summary_json(const RunRecord& record);
/// Writes `contents` to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace bipc::cli
