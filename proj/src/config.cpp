#include "bipc/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

namespace bipc::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text, const char* kind) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || text.empty())
    throw ConfigError(key, std::string("expected ") + kind + ", got '" + text + "'");
  return value;
}

int parse_int(const std::string& key, const std::string& text) {
  return parse_number<int>(key, text, "an integer");
}

double parse_double(const std::string& key, const std::string& text) {
  return parse_number<double>(key, text, "a number");
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& text, F item) {
  std::vector<T> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(item(trim(part)));
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F item) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + item(values[i]);
  return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define BIPC_INT(KEY, MEMBER)                                                              \
  Field{KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = parse_int(KEY, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }}
#define BIPC_REAL(KEY, MEMBER)                                                                 \
  Field{KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = parse_double(KEY, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.MEMBER); }}
#define BIPC_BOOL(KEY, MEMBER)                                                               \
  Field{KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = parse_bool(KEY, v); }, \
        [](const ExperimentConfig& c) { return fmt_bool(c.MEMBER); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"seed",
            [](ExperimentConfig& c, const std::string& v) {
              c.seed = parse_number<std::uint64_t>("seed", v, "an unsigned integer");
            },
            [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      Field{"mode",
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.mode = parse_mode(v);
              } catch (const ContractViolation& e) {
                throw ConfigError("mode", e.what());
              }
            },
            [](const ExperimentConfig& c) { return std::string(mode_name(c.mode)); }},
      Field{"output.dir", [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
            [](const ExperimentConfig& c) { return c.output_dir; }},
      BIPC_INT("generator.dim", generator.dim),
      BIPC_INT("generator.pretrain_classes", generator.pretrain_classes),
      BIPC_INT("generator.task_classes", generator.task_classes),
      BIPC_INT("generator.target_classes", generator.target_classes),
      BIPC_INT("generator.samples_per_class", generator.samples_per_class),
      BIPC_INT("generator.pretrain_samples_per_class", generator.pretrain_samples_per_class),
      BIPC_REAL("generator.heldout_fraction", generator.heldout_fraction),
      BIPC_REAL("generator.cluster_spread", generator.cluster_spread),
      BIPC_REAL("generator.shift.rotation", generator.shift.rotation),
      Field{"generator.shift.translation",
            [](ExperimentConfig& c, const std::string& v) {
              c.generator.shift.translation = parse_list<double>(
                  v, [](const std::string& s) { return parse_double("generator.shift.translation", s); });
            },
            [](const ExperimentConfig& c) { return join(c.generator.shift.translation, fmt); }},
      BIPC_REAL("generator.shift.noise", generator.shift.noise),
      BIPC_REAL("generator.pretrain_rotation_max", generator.pretrain_rotation_max),
      BIPC_REAL("generator.pretrain_translation_max", generator.pretrain_translation_max),
      Field{"model.hidden",
            [](ExperimentConfig& c, const std::string& v) {
              c.hidden = parse_list<int>(
                  v, [](const std::string& s) { return parse_int("model.hidden", s); });
            },
            [](const ExperimentConfig& c) {
              return join(c.hidden, [](int h) { return std::to_string(h); });
            }},
      BIPC_INT("model.feature_dim", feature_dim),
      BIPC_INT("pretrain.epochs", pretrain.epochs),
      BIPC_INT("pretrain.batch_size", pretrain.batch_size),
      BIPC_REAL("pretrain.lr", pretrain.lr),
      BIPC_REAL("pretrain.momentum", pretrain.momentum),
      BIPC_REAL("pretrain.weight_decay", pretrain.weight_decay),
      BIPC_REAL("schedule.eta0", schedule.eta0),
      BIPC_REAL("schedule.tau", schedule.tau),
      BIPC_REAL("schedule.upsilon", schedule.upsilon),
      BIPC_REAL("schedule.head_lr_multiplier", schedule.head_lr_multiplier),
      BIPC_REAL("schedule.lambda1", schedule.lambda1),
      BIPC_REAL("schedule.lambda2_a", schedule.lambda2_a),
      BIPC_REAL("schedule.lambda3_a", schedule.lambda3_a),
      BIPC_REAL("schedule.delta", schedule.delta),
      BIPC_BOOL("schedule.printed_lambda", schedule.printed_lambda),
      BIPC_INT("train.epochs", train.epochs),
      BIPC_INT("train.batch_size", train.batch_size),
      BIPC_BOOL("train.cgi_updates_backbone", train.cgi_updates_backbone),
      Field{"train.beta_variant",
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.train.beta_variant = loss::parse_beta_variant(v);
              } catch (const ContractViolation& e) {
                throw ConfigError("train.beta_variant", e.what());
              }
            },
            [](const ExperimentConfig& c) { return std::string(loss::name(c.train.beta_variant)); }},
      Field{"train.penalty_variant",
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.train.penalty_variant = loss::parse_penalty_variant(v);
              } catch (const ContractViolation& e) {
                throw ConfigError("train.penalty_variant", e.what());
              }
            },
            [](const ExperimentConfig& c) {
              return std::string(loss::name(c.train.penalty_variant));
            }},
      BIPC_REAL("train.smoothing", train.smoothing),
      Field{"train.focal_gamma",
            [](ExperimentConfig& c, const std::string& v) {
              c.train.focal_gamma = v == "none" ? std::nullopt
                                                : std::optional(parse_double("train.focal_gamma", v));
            },
            [](const ExperimentConfig& c) {
              return c.train.focal_gamma ? fmt(*c.train.focal_gamma) : std::string("none");
            }},
      BIPC_REAL("train.momentum", train.momentum),
      BIPC_REAL("train.weight_decay", train.weight_decay),
      BIPC_INT("train.pda_threshold", pda_threshold),
      Field{"grid.pda_thresholds",
            [](ExperimentConfig& c, const std::string& v) {
              c.pda_sweep = parse_list<int>(
                  v, [](const std::string& s) { return parse_int("grid.pda_thresholds", s); });
            },
            [](const ExperimentConfig& c) {
              return join(c.pda_sweep, [](int t) { return std::to_string(t); });
            }},
  };
  return table;
}

#undef BIPC_INT
#undef BIPC_REAL
#undef BIPC_BOOL

void keyed(const std::function<void()>& check) {
  try {
    check();
  } catch (const ContractViolation& e) {
    // Validation messages start with the dotted key they concern.
    std::string msg = e.what();
    std::string key = msg.substr(0, msg.find(' '));
    while (!key.empty() && (key.back() == ',' || key.back() == ':')) key.pop_back();
    throw ConfigError(key, msg);
  }
}

}  // namespace

const char* mode_name(Mode m) noexcept {
  switch (m) {
    case Mode::uda: return "uda";
    case Mode::pda: return "pda";
    case Mode::baseline: return "baseline";
    case Mode::fig1: return "fig1";
    case Mode::ablation_beta: return "ablation_beta";
    case Mode::ablation_penalty: return "ablation_penalty";
    case Mode::ablation_components: return "ablation_components";
  }
  return "?";
}

Mode parse_mode(const std::string& text) {
  for (auto m : {Mode::uda, Mode::pda, Mode::baseline, Mode::fig1, Mode::ablation_beta,
                 Mode::ablation_penalty, Mode::ablation_components})
    if (text == mode_name(m)) return m;
  throw ContractViolation("unknown mode '" + text + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

void validate(const ExperimentConfig& cfg) {
  keyed([&] { data::validate(cfg.generator); });
  keyed([&] { train::validate(cfg.schedule); });
  keyed([&] { train::validate(cfg.train); });
  if (cfg.output_dir.empty()) throw ConfigError("output.dir", "must not be empty");
  if (cfg.hidden.empty()) throw ConfigError("model.hidden", "at least one hidden layer is required");
  for (int h : cfg.hidden)
    if (h < 1) throw ConfigError("model.hidden", "layer widths must be positive");
  if (cfg.feature_dim < 1) throw ConfigError("model.feature_dim", "must be positive");
  if (cfg.pretrain.epochs < 0) throw ConfigError("pretrain.epochs", "must be non-negative");
  if (cfg.pretrain.batch_size < 1) throw ConfigError("pretrain.batch_size", "must be positive");
  if (!(cfg.pretrain.lr > 0.0)) throw ConfigError("pretrain.lr", "must be positive");
  if (cfg.pretrain.momentum < 0.0 || cfg.pretrain.momentum >= 1.0)
    throw ConfigError("pretrain.momentum", "must be in [0, 1)");
  if (cfg.pretrain.weight_decay < 0.0)
    throw ConfigError("pretrain.weight_decay", "must be non-negative");
  if (cfg.pda_threshold < 0) throw ConfigError("train.pda_threshold", "must be non-negative");
  if (cfg.pda_sweep.empty()) throw ConfigError("grid.pda_thresholds", "must not be empty");
  for (int t : cfg.pda_sweep)
    if (t < 0) throw ConfigError("grid.pda_thresholds", "thresholds must be non-negative");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;

  std::istringstream in(text);
  std::string line;
  std::map<std::string, int> seen;
  for (int number = 1; std::getline(in, line); ++number) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", "config line " + std::to_string(number) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(key, "unknown key");
    if (seen.count(key))
      throw ConfigError(key, "duplicate key (first set on line " + std::to_string(seen[key]) + ")");
    seen[key] = number;
    it->second->set(cfg, value);
  }
  validate(cfg);
  return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::vector<std::string> lines;
  for (const auto& f : fields())
    if (f.key != "output.dir") lines.push_back(f.key + " = " + f.get(cfg));
  std::sort(lines.begin(), lines.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& l : lines)
    for (unsigned char ch : l + "\n") {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace bipc::cli
