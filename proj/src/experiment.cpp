#include "bipc/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace bipc::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* kEpochsHeader = "epoch,target_acc,l_cls,l_cpa,l_cgi,lambda2,lambda3,eta";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

model::Architecture architecture(const ExperimentConfig& cfg) {
  return {cfg.generator.dim, cfg.hidden, cfg.feature_dim, cfg.generator.pretrain_classes,
          cfg.generator.task_classes};
}

json distances_json(const metrics::Fig1Distances& d) {
  json j;
  j["feature_distance"] = d.feature_distance;
  j["probability_distance"] = d.probability_distance;
  j["probability_smaller"] = d.probability_distance < d.feature_distance;
  return j;
}

void write_run_files(const RunRecord& r, const std::optional<model::ParamGroups>& params) {
  fs::create_directories(r.directory);
  write_atomic(r.directory / "epochs.csv", epochs_csv(r.epochs));
  write_atomic(r.directory / "summary.json", summary_json(r));
  write_atomic(r.directory / "timing.txt", fmt(r.wall_seconds) + "\n");
  if (params) {
    std::ostringstream out;
    model::write_checkpoint(out, *params);
    write_atomic(r.directory / "params.ckpt", out.str());
  }
}

RunRecord run_one(const ExperimentConfig& cfg, const Prepared& prep, const std::string& name,
                  const fs::path& dir) {
  const auto start = std::chrono::steady_clock::now();
  RunRecord r;
  r.name = name;
  r.mode = cfg.mode;
  r.seed = cfg.seed;
  r.config_hash = config_hash(cfg);
  r.pretrain_heldout_acc = prep.pretrain_heldout_acc;
  r.directory = dir;

  std::optional<model::ParamGroups> final_params;
  if (cfg.mode == Mode::fig1) {
    r.distances = metrics::fig1_analog(prep.pretrained, prep.pair.source.inputs,
                                       prep.pair.target.inputs, cfg.seed);
    r.complete = true;
  } else {
    try {
      auto result = train::train(prep.pretrained, prep.pair.source, prep.pair.target,
                                 prep.pair.target_labels, effective_schedule(cfg),
                                 effective_train(cfg),
                                 [&](const train::EpochRecord& e) { r.epochs.push_back(e); });
      r.final_target_acc = result.report.final_target_acc;
      r.distances = result.report.final_distances;
      r.complete = true;
      final_params = std::move(result.params);
    } catch (const TrainingDiverged& e) {
      r.error = e.what();
    } catch (const ContractViolation& e) {
      r.error = e.what();
    }
  }
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_run_files(r, final_params);
  if (cfg.mode == Mode::fig1) write_atomic(dir / "distances.json", distances_json(r.distances).dump(2) + "\n");
  return r;
}

std::string comparison_csv(const std::vector<RunRecord>& records) {
  std::string out = "point,complete,final_target_acc,feature_distance,probability_distance\n";
  for (const auto& r : records)
    out += r.name + "," + (r.complete ? "true" : "false") + "," + fmt(r.final_target_acc) + "," +
           fmt(r.distances.feature_distance) + "," + fmt(r.distances.probability_distance) + "\n";
  return out;
}

std::vector<RunRecord> run_points(const ExperimentConfig& base, Axis axis, const Prepared& prep) {
  const fs::path root = output_root(base) / axis_name(axis);
  std::vector<RunRecord> records;
  for (const auto& [name, cfg] : grid_points(base, axis))
    records.push_back(run_one(cfg, prep, name, root / name));
  write_atomic(output_root(base) / (std::string(axis_name(axis)) + "_comparison.csv"),
               comparison_csv(records));
  return records;
}

}  // namespace

const char* axis_name(Axis a) noexcept {
  switch (a) {
    case Axis::beta_variant: return "beta_variant";
    case Axis::penalty_variant: return "penalty_variant";
    case Axis::components: return "components";
    case Axis::pda_threshold: return "pda_threshold";
  }
  return "?";
}

Axis parse_axis(const std::string& text) {
  for (auto a : {Axis::beta_variant, Axis::penalty_variant, Axis::components, Axis::pda_threshold})
    if (text == axis_name(a)) return a;
  throw ConfigError("axis", "unknown axis '" + text +
                                "' (expected beta_variant, penalty_variant, components or "
                                "pda_threshold)");
}

Prepared prepare(const ExperimentConfig& cfg) {
  validate(cfg);
  data::GeneratorSpec spec = cfg.generator;
  spec.seed = derive_seed(cfg.seed, "data");
  Prepared p;
  p.pair = data::make_uda_pair(spec);
  const auto task = data::make_pretrain_task(spec);
  Rng init_rng = stream(cfg.seed, "init");
  Rng pretrain_rng = stream(cfg.seed, "pretrain");
  auto result = model::pretrain(model::init_params(architecture(cfg), init_rng), task.train,
                                task.heldout, cfg.pretrain, pretrain_rng);
  p.pretrained = std::move(result.params);
  p.pretrain_heldout_acc = result.heldout_accuracy;
  return p;
}

fs::path output_root(const ExperimentConfig& cfg) {
  fs::path dir(cfg.output_dir);
  if (dir.is_relative())
    if (const char* root = std::getenv("BIPC_OUTPUT_ROOT"); root && *root) return fs::path(root) / dir;
  return dir;
}

train::ScheduleConfig effective_schedule(const ExperimentConfig& cfg) {
  train::ScheduleConfig s = cfg.schedule;
  if (cfg.mode == Mode::baseline) {
    s.lambda2_a = 0.0;
    s.lambda3_a = 0.0;
  }
  return s;
}

train::TrainConfig effective_train(const ExperimentConfig& cfg) {
  train::TrainConfig t = cfg.train;
  t.seed = cfg.seed;
  t.pda.reset();
  if (cfg.mode == Mode::pda) t.pda = train::PdaConfig{cfg.pda_threshold};
  return t;
}

std::vector<std::pair<std::string, ExperimentConfig>> grid_points(const ExperimentConfig& base,
                                                                  Axis axis) {
  std::vector<std::pair<std::string, ExperimentConfig>> points;
  ExperimentConfig cfg = base;
  if (cfg.mode != Mode::pda || axis != Axis::pda_threshold) cfg.mode = Mode::uda;
  switch (axis) {
    case Axis::beta_variant:
      for (auto v : {loss::BetaVariant::constant_half, loss::BetaVariant::exp_neg_entropy,
                     loss::BetaVariant::max_prob, loss::BetaVariant::exp_neg_kl}) {
        ExperimentConfig c = cfg;
        c.train.beta_variant = v;
        points.emplace_back(loss::name(v), c);
      }
      break;
    case Axis::penalty_variant:
      for (auto v : {loss::PenaltyVariant::ge, loss::PenaltyVariant::cge, loss::PenaltyVariant::gi,
                     loss::PenaltyVariant::cgi_noreg, loss::PenaltyVariant::cgi}) {
        ExperimentConfig c = cfg;
        c.train.penalty_variant = v;
        points.emplace_back(loss::name(v), c);
      }
      break;
    case Axis::components: {
      struct Row {
        const char* name;
        bool cpa;
        bool cgi;
        bool backbone;
      };
      for (const Row& row : {Row{"cls", false, false, false}, Row{"cls_cpa", true, false, false},
                             Row{"cls_cgi_theta_h_theta", false, true, true},
                             Row{"cls_cpa_cgi_theta_h_theta", true, true, true},
                             Row{"cls_cgi_theta_h", false, true, false},
                             Row{"cls_cpa_cgi_theta_h", true, true, false}}) {
        ExperimentConfig c = cfg;
        if (!row.cpa) c.schedule.lambda2_a = 0.0;
        if (!row.cgi) c.schedule.lambda3_a = 0.0;
        c.train.cgi_updates_backbone = row.backbone;
        points.emplace_back(row.name, c);
      }
      break;
    }
    case Axis::pda_threshold:
      for (int t : base.pda_sweep) {
        ExperimentConfig c = cfg;
        c.mode = Mode::pda;
        c.pda_threshold = t;
        points.emplace_back("T" + std::to_string(t), c);
      }
      break;
  }
  return points;
}

std::vector<RunRecord> run_grid(const ExperimentConfig& base, Axis axis) {
  const Prepared prep = prepare(base);
  return run_points(base, axis, prep);
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.mode) {
    case Mode::ablation_beta: return run_grid(cfg, Axis::beta_variant);
    case Mode::ablation_penalty: return run_grid(cfg, Axis::penalty_variant);
    case Mode::ablation_components: return run_grid(cfg, Axis::components);
    default: break;
  }
  const Prepared prep = prepare(cfg);
  return {run_one(cfg, prep, mode_name(cfg.mode), output_root(cfg))};
}

std::string epochs_csv(const std::vector<train::EpochRecord>& epochs) {
  std::string out = std::string(kEpochsHeader) + "\n";
  for (const auto& e : epochs)
    out += std::to_string(e.epoch) + "," + fmt(e.target_acc) + "," + fmt(e.l_cls) + "," +
           fmt(e.l_cpa) + "," + fmt(e.l_cgi) + "," + fmt(e.lambda2) + "," + fmt(e.lambda3) + "," +
           fmt(e.eta) + "\n";
  return out;
}

std::vector<train::EpochRecord> parse_epochs_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kEpochsHeader)
    throw ContractViolation("epochs.csv: unexpected header");
  std::vector<train::EpochRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 8) throw ContractViolation("epochs.csv: expected 8 columns");
    train::EpochRecord e;
    try {
      e.epoch = std::stoi(cells[0]);
      double* fields[] = {&e.target_acc, &e.l_cls, &e.l_cpa, &e.l_cgi,
                          &e.lambda2,    &e.lambda3, &e.eta};
      for (std::size_t k = 0; k < 7; ++k) *fields[k] = std::stod(cells[k + 1]);
    } catch (const std::exception&) {
      throw ContractViolation("epochs.csv: malformed row '" + line + "'");
    }
    out.push_back(e);
  }
  return out;
}

std::string summary_json(const RunRecord& r) {
  json j;
  j["name"] = r.name;
  j["mode"] = mode_name(r.mode);
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  j["complete"] = r.complete;
  if (!r.error.empty()) j["error"] = r.error;
  j["epochs_completed"] = r.epochs.size();
  j["pretrain_heldout_acc"] = r.pretrain_heldout_acc;
  if (r.mode != Mode::fig1) j["final_target_acc"] = r.final_target_acc;
  j["distances"] = distances_json(r.distances);
  return j.dump(2) + "\n";
}

void write_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace bipc::cli
