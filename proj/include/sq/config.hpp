#ifndef SQ_CONFIG_HPP_
#define SQ_CONFIG_HPP_

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sq/errors.hpp"
#include "sq/partition.hpp"
#include "sq/quantizer.hpp"
#include "sq/schedule.hpp"
#include "sq/trainer.hpp"

namespace sq {

/// Resolved run configuration. String fields keep the config-file spelling;
/// to_train_config()/make_run_schedule() translate to engine types.
struct RunSpec {
  std::string scheme = "twn";              // fwn | sbin | bwn | twn
  std::string granularity = "channel";     // channel | element
  std::string partition_mode = "stochastic";  // stochastic | deterministic | fixed
  std::string prob_fn = "linear";          // constant | linear | softmax | sigmoid
  std::string schedule = "exp";            // exp | avg | tune | flat:<r>
  std::size_t iters_per_stage = 2000;
  double lr = 0.1;
  std::vector<std::size_t> lr_decay_steps;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 100;
  std::uint64_t seed = 1;
  std::string dataset = "synthetic";       // mnist | cifar10 | synthetic
  std::string data_dir = "data";
  std::string out_dir = "runs/out";
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': invalid number '" + value +
                      "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key,
                               const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': invalid integer '" + value +
                      "'");
  }
}

inline void expect_value(const std::string& key, const std::string& value,
                         std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string options;
  for (const char* a : allowed) {
    if (!options.empty()) options += ", ";
    options += a;
  }
  throw ConfigError("config key '" + key + "': invalid value '" + value +
                    "' (expected one of: " + options + ")");
}

}  // namespace detail

/// Apply one `key = value` assignment; unknown keys are config errors that
/// name the offending key.
inline void apply_config_entry(RunSpec& spec, const std::string& key,
                               const std::string& value) {
  if (key == "scheme") {
    detail::expect_value(key, value, {"fwn", "sbin", "bwn", "twn"});
    spec.scheme = value;
  } else if (key == "granularity") {
    detail::expect_value(key, value, {"channel", "element"});
    spec.granularity = value;
  } else if (key == "partition_mode") {
    detail::expect_value(key, value, {"stochastic", "deterministic", "fixed"});
    spec.partition_mode = value;
  } else if (key == "prob_fn") {
    detail::expect_value(key, value,
                         {"constant", "linear", "softmax", "sigmoid"});
    spec.prob_fn = value;
  } else if (key == "schedule") {
    if (value != "exp" && value != "avg" && value != "tune" &&
        value.rfind("flat:", 0) != 0)
      throw ConfigError("config key 'schedule': invalid value '" + value +
                        "' (expected exp, avg, tune, or flat:<ratio>)");
    if (value.rfind("flat:", 0) == 0) {
      const double r = detail::parse_double(key, value.substr(5));
      if (r < 0.0 || r > 1.0)
        throw ConfigError("config key 'schedule': flat ratio '" + value +
                          "' outside [0,1]");
    }
    spec.schedule = value;
  } else if (key == "iters_per_stage") {
    spec.iters_per_stage = detail::parse_u64(key, value);
    if (spec.iters_per_stage < 1)
      throw ConfigError("config key 'iters_per_stage': must be >= 1");
  } else if (key == "lr") {
    spec.lr = detail::parse_double(key, value);
    if (spec.lr <= 0) throw ConfigError("config key 'lr': must be positive");
  } else if (key == "lr_decay_steps") {
    spec.lr_decay_steps.clear();
    if (!value.empty() && value != "none") {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ','))
        spec.lr_decay_steps.push_back(
            detail::parse_u64(key, detail::trim(item)));
    }
  } else if (key == "momentum") {
    spec.momentum = detail::parse_double(key, value);
    if (spec.momentum < 0 || spec.momentum >= 1)
      throw ConfigError("config key 'momentum': must be in [0,1)");
  } else if (key == "weight_decay") {
    spec.weight_decay = detail::parse_double(key, value);
    if (spec.weight_decay < 0)
      throw ConfigError("config key 'weight_decay': must be >= 0");
  } else if (key == "batch_size") {
    spec.batch_size = detail::parse_u64(key, value);
    if (spec.batch_size < 1)
      throw ConfigError("config key 'batch_size': must be >= 1");
  } else if (key == "seed") {
    spec.seed = detail::parse_u64(key, value);
  } else if (key == "dataset") {
    detail::expect_value(key, value, {"mnist", "cifar10", "synthetic"});
    spec.dataset = value;
  } else if (key == "data_dir") {
    spec.data_dir = value;
  } else if (key == "out_dir") {
    spec.out_dir = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

/// Flat `key = value` file with `#` comments and blank lines.
inline RunSpec parse_config_text(const std::string& text,
                                 RunSpec spec = RunSpec{}) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    apply_config_entry(spec, detail::trim(line.substr(0, eq)),
                       detail::trim(line.substr(eq + 1)));
  }
  return spec;
}

inline RunSpec load_config_file(const std::string& path,
                                RunSpec spec = RunSpec{}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(spec));
}

// ---- translation to engine types --------------------------------------------

inline TrainConfig to_train_config(const RunSpec& spec) {
  TrainConfig cfg;
  cfg.quantized = spec.scheme != "fwn";
  if (spec.scheme == "sbin")
    cfg.scheme.kind = QuantKind::StochasticBinary;
  else if (spec.scheme == "bwn")
    cfg.scheme.kind = QuantKind::BWN;
  else
    cfg.scheme.kind = QuantKind::TWN;
  cfg.granularity = spec.granularity == "element" ? Granularity::ElementWise
                                                  : Granularity::ChannelWise;
  cfg.partition_mode = spec.partition_mode == "deterministic"
                           ? PartitionMode::Deterministic
                           : (spec.partition_mode == "fixed"
                                  ? PartitionMode::Fixed
                                  : PartitionMode::Stochastic);
  if (spec.prob_fn == "constant")
    cfg.prob_fn.kind = ProbabilityKind::Constant;
  else if (spec.prob_fn == "softmax")
    cfg.prob_fn.kind = ProbabilityKind::Softmax;
  else if (spec.prob_fn == "sigmoid")
    cfg.prob_fn.kind = ProbabilityKind::Sigmoid;
  else
    cfg.prob_fn.kind = ProbabilityKind::Linear;
  cfg.lr = spec.lr;
  cfg.lr_decay_steps = spec.lr_decay_steps;
  cfg.momentum = spec.momentum;
  cfg.weight_decay = spec.weight_decay;
  cfg.batch_size = spec.batch_size;
  cfg.seed = spec.seed;
  return cfg;
}

inline SqSchedule make_run_schedule(const RunSpec& spec) {
  if (spec.schedule == "exp")
    return SqSchedule::make(ScheduleMode::Exponential, spec.iters_per_stage);
  if (spec.schedule == "avg")
    return SqSchedule::make(ScheduleMode::Average, spec.iters_per_stage);
  if (spec.schedule == "tune")
    return SqSchedule::make(ScheduleMode::FineTune, spec.iters_per_stage);
  // flat:<r>, diagnostics only
  const double r = detail::parse_double("schedule", spec.schedule.substr(5));
  return SqSchedule::custom({{r, spec.iters_per_stage}});
}

/// Canonical serialization, also the manifest's config block.
inline std::vector<std::pair<std::string, std::string>> config_entries(
    const RunSpec& spec) {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::string steps;
  for (std::size_t i = 0; i < spec.lr_decay_steps.size(); ++i) {
    if (i) steps += ",";
    steps += std::to_string(spec.lr_decay_steps[i]);
  }
  return {
      {"scheme", spec.scheme},
      {"granularity", spec.granularity},
      {"partition_mode", spec.partition_mode},
      {"prob_fn", spec.prob_fn},
      {"schedule", spec.schedule},
      {"iters_per_stage", std::to_string(spec.iters_per_stage)},
      {"lr", fmt(spec.lr)},
      {"lr_decay_steps", steps},
      {"momentum", fmt(spec.momentum)},
      {"weight_decay", fmt(spec.weight_decay)},
      {"batch_size", std::to_string(spec.batch_size)},
      {"seed", std::to_string(spec.seed)},
      {"dataset", spec.dataset},
      {"data_dir", spec.data_dir},
      {"out_dir", spec.out_dir},
  };
}

/// FNV-1a over the canonical `key=value` lines; stored in checkpoints.
inline std::uint64_t config_digest(const RunSpec& spec) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto absorb = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : config_entries(spec)) {
    absorb(k);
    absorb("=");
    absorb(v);
    absorb("\n");
  }
  return h;
}

}  // namespace sq

#endif  // SQ_CONFIG_HPP_
