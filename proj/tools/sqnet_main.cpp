// sqnet - train, evaluate, export, and inspect low-bit networks trained
// with stochastic quantization.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sq/sq.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitFormat = 4;
constexpr int kExitDiverged = 5;

struct Overrides {
  std::vector<std::pair<std::string, std::string>> entries;

  void add_flags(CLI::App* cmd) {
    static const char* keys[] = {
        "scheme",       "granularity", "partition_mode", "prob_fn",
        "schedule",     "iters_per_stage", "lr",         "lr_decay_steps",
        "momentum",     "weight_decay", "batch_size",    "seed",
        "dataset",      "data_dir",    "out_dir"};
    for (const char* key : keys) {
      const std::string name = "--" + std::string(key);
      cmd->add_option_function<std::string>(
          name,
          [this, key](const std::string& v) { entries.emplace_back(key, v); },
          "override config key '" + std::string(key) + "'");
    }
  }

  sq::RunSpec resolve(const std::string& config_path) const {
    sq::RunSpec spec;
    if (!config_path.empty()) spec = sq::load_config_file(config_path);
    for (const auto& [k, v] : entries) sq::apply_config_entry(spec, k, v);
    return spec;
  }
};

sq::Dataset& pick_split(sq::DataBundle& bundle, const std::string& split) {
  if (split == "train") return bundle.train;
  if (split == "test") return bundle.test;
  throw sq::ConfigError("unknown split '" + split + "'");
}

std::string sniff_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sq::IoError("cannot open " + path);
  char tag[4] = {0, 0, 0, 0};
  in.read(tag, 4);
  return std::string(tag, 4);
}

sq::QuantScheme scheme_from_name(const std::string& name) {
  sq::QuantScheme scheme;
  if (name == "sbin")
    scheme.kind = sq::QuantKind::StochasticBinary;
  else if (name == "bwn")
    scheme.kind = sq::QuantKind::BWN;
  else if (name == "twn")
    scheme.kind = sq::QuantKind::TWN;
  else
    throw sq::ConfigError("unknown scheme '" + name + "'");
  return scheme;
}

int cmd_train(const Overrides& overrides, const std::string& config_path,
              const std::string& pretrained, bool quiet) {
  const sq::RunSpec spec = overrides.resolve(config_path);
  const sq::DataBundle data = sq::load_bundle(spec);

  sq::RunOptions options;
  options.pretrained_path = pretrained;
  const std::size_t total = sq::make_run_schedule(spec).total_iterations();
  const std::size_t report = std::max<std::size_t>(1, total / 20);
  if (!quiet)
    options.on_metric = [&](const sq::MetricRow& row) {
      if (row.iteration % report == 0 || row.iteration + 1 == total)
        std::fprintf(stderr,
                     "iter %6zu/%zu  stage %zu  ratio %.3f  loss %.4f  lr %g\n",
                     row.iteration, total, row.stage + 1, row.ratio, row.loss,
                     row.lr);
    };

  const sq::RunOutcome outcome = sq::run_training(spec, data, options);

  nlohmann::json j;
  j["out_dir"] = outcome.out_dir;
  j["final_test_error"] = outcome.final_test_error;
  j["final_test_loss"] = outcome.final_test_loss;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset,
             const std::string& data_dir, const std::string& split,
             std::uint64_t seed) {
  sq::RunSpec spec;
  spec.dataset = dataset;
  spec.data_dir = data_dir;
  spec.seed = seed;
  sq::DataBundle bundle = sq::load_bundle(spec);
  sq::Dataset& ds = pick_split(bundle, split);

  sq::EvalResult result;
  const std::string magic = sniff_magic(checkpoint);
  if (magic == "SQQX") {
    sq::LoadedExport loaded = sq::load_quantized(checkpoint);
    result = sq::evaluate(loaded.net, ds, false);
  } else {
    sq::LoadedCheckpoint loaded = sq::load_checkpoint(checkpoint);
    const bool quantized = loaded.meta.scheme_kind != sq::kSchemeFullPrecision;
    sq::QuantScheme scheme;
    if (quantized)
      scheme.kind = static_cast<sq::QuantKind>(loaded.meta.scheme_kind);
    result = sq::evaluate(loaded.net, ds, quantized, scheme);
  }

  nlohmann::json j;
  j["top1_error"] = result.top1_error;
  j["mean_loss"] = result.mean_loss;
  j["count"] = result.count;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_export(const std::string& checkpoint, const std::string& out,
               const std::string& scheme_flag) {
  sq::LoadedCheckpoint loaded = sq::load_checkpoint(checkpoint);
  sq::QuantScheme scheme;
  if (!scheme_flag.empty()) {
    scheme = scheme_from_name(scheme_flag);
  } else if (loaded.meta.scheme_kind != sq::kSchemeFullPrecision) {
    scheme.kind = static_cast<sq::QuantKind>(loaded.meta.scheme_kind);
  } else {
    throw sq::ConfigError(
        "checkpoint is full-precision; pass --scheme bwn|twn|sbin");
  }
  sq::export_quantized(out, loaded.net, loaded.meta.arch, scheme);
  nlohmann::json j;
  j["export"] = out;
  j["arch"] = loaded.meta.arch;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_inspect(const std::string& checkpoint, const std::string& scheme_flag) {
  sq::LoadedCheckpoint loaded = sq::load_checkpoint(checkpoint);
  sq::QuantScheme scheme;
  if (!scheme_flag.empty())
    scheme = scheme_from_name(scheme_flag);
  else if (loaded.meta.scheme_kind != sq::kSchemeFullPrecision)
    scheme.kind = static_cast<sq::QuantKind>(loaded.meta.scheme_kind);

  nlohmann::json layers = nlohmann::json::array();
  sq::Network& net = loaded.net;
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto* wl = dynamic_cast<sq::WeightedLayer*>(&net.layer(i));
    if (!wl) continue;
    auto view = sq::reshape_as_matrix(wl->weights());
    const auto rows = sq::quantize_rows(scheme, view);
    const auto errors = sq::channel_errors(view, rows);

    nlohmann::json layer;
    layer["name"] = net.name(i);
    layer["rows"] = view.rows();
    layer["cols"] = view.cols();
    layer["errors"] = errors;

    nlohmann::json probs;
    for (const auto& [label, kind] :
         {std::pair{"constant", sq::ProbabilityKind::Constant},
          std::pair{"linear", sq::ProbabilityKind::Linear},
          std::pair{"softmax", sq::ProbabilityKind::Softmax},
          std::pair{"sigmoid", sq::ProbabilityKind::Sigmoid}}) {
      sq::ProbabilityFn fn;
      fn.kind = kind;
      probs[label] = sq::quantization_probabilities(errors, fn);
    }
    layer["probabilities"] = probs;

    double alpha_min = rows[0].alpha, alpha_max = rows[0].alpha,
           alpha_sum = 0.0;
    for (const auto& q : rows) {
      alpha_min = std::min(alpha_min, q.alpha);
      alpha_max = std::max(alpha_max, q.alpha);
      alpha_sum += q.alpha;
    }
    layer["alpha"] = {{"min", alpha_min},
                      {"max", alpha_max},
                      {"mean", alpha_sum / double(rows.size())}};
    if (scheme.kind == sq::QuantKind::TWN) {
      std::vector<double> deltas(view.rows());
      for (std::size_t r = 0; r < view.rows(); ++r)
        deltas[r] = (scheme.twn_threshold_coeff /
                     static_cast<double>(view.cols())) *
                    sq::l1_norm(view.row(r));
      double dmin = deltas[0], dmax = deltas[0], dsum = 0.0;
      for (double d : deltas) {
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
        dsum += d;
      }
      layer["delta"] = {{"min", dmin},
                        {"max", dmax},
                        {"mean", dsum / double(deltas.size())}};
    }
    layers.push_back(layer);
  }

  nlohmann::json j;
  j["arch"] = loaded.meta.arch;
  j["iteration"] = loaded.meta.iteration;
  j["scheme"] = scheme.kind == sq::QuantKind::TWN
                    ? "twn"
                    : (scheme.kind == sq::QuantKind::BWN ? "bwn" : "sbin");
  j["layers"] = layers;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_ablate(const Overrides& overrides, const std::string& config_path,
               std::size_t threads, bool quiet) {
  const sq::RunSpec base = overrides.resolve(config_path);
  const sq::DataBundle data = sq::load_bundle(base);

  std::size_t done = 0;
  const auto cells = sq::run_ablation(
      base, data, threads, [&](const sq::AblationCell& cell) {
        ++done;
        if (!quiet)
          std::fprintf(stderr, "[%2zu/72] %s/%s/%s/%s  %s\n", done,
                       cell.granularity.c_str(), cell.partition_mode.c_str(),
                       cell.prob_fn.c_str(), cell.schedule.c_str(),
                       cell.diverged
                           ? "diverged"
                           : ("err " + std::to_string(cell.test_error))
                                 .c_str());
      });

  std::printf("%-9s %-13s %-9s %-6s %-9s %s\n", "granular", "partition",
              "prob_fn", "sched", "test_err", "status");
  for (const auto& c : cells)
    std::printf("%-9s %-13s %-9s %-6s %-9.4f %s\n", c.granularity.c_str(),
                c.partition_mode.c_str(), c.prob_fn.c_str(),
                c.schedule.c_str(), c.test_error,
                c.diverged ? "DIVERGED" : "ok");
  std::printf("results written to %s/ablation.csv\n", base.out_dir.c_str());
  return kExitOk;
}

int cmd_synth_data(const std::string& out_dir, std::size_t n_train,
                   std::size_t n_test, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const sq::Dataset train =
      sq::make_synthetic_split(n_train, 0xD1617 + seed, 1, "train");
  const sq::Dataset test =
      sq::make_synthetic_split(n_test, 0xD1617 + seed, 2, "test");
  sq::write_synthetic_idx(
      train, (fs::path(out_dir) / "train-images-idx3-ubyte").string(),
      (fs::path(out_dir) / "train-labels-idx1-ubyte").string());
  sq::write_synthetic_idx(
      test, (fs::path(out_dir) / "t10k-images-idx3-ubyte").string(),
      (fs::path(out_dir) / "t10k-labels-idx1-ubyte").string());
  std::printf("wrote %zu train / %zu test images to %s\n", n_train, n_test,
              out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic quantization trainer for low-bit networks"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "run staged SQ training");
  std::string train_config, train_pretrained;
  bool train_quiet = false;
  Overrides train_overrides;
  train->add_option("--config", train_config, "flat key=value config file");
  train->add_option("--pretrained", train_pretrained,
                    "full-precision checkpoint for schedule=tune");
  train->add_flag("--quiet", train_quiet, "suppress progress output");
  train_overrides.add_flags(train);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or export");
  std::string eval_ckpt, eval_dataset = "synthetic", eval_dir = "data",
              eval_split = "test";
  std::uint64_t eval_seed = 1;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--dataset", eval_dataset, "mnist | cifar10 | synthetic");
  eval->add_option("--data-dir", eval_dir);
  eval->add_option("--split", eval_split, "train | test");
  eval->add_option("--seed", eval_seed, "seed for dataset=synthetic");

  // export
  auto* exp = app.add_subcommand("export", "write low-bit weights (SQQX)");
  std::string export_ckpt, export_out, export_scheme;
  exp->add_option("--checkpoint", export_ckpt)->required();
  exp->add_option("--out", export_out)->required();
  exp->add_option("--scheme", export_scheme, "bwn | twn | sbin");

  // inspect
  auto* inspect = app.add_subcommand(
      "inspect", "per-layer quantization errors and probabilities");
  std::string inspect_ckpt, inspect_scheme;
  inspect->add_option("--checkpoint", inspect_ckpt)->required();
  inspect->add_option("--scheme", inspect_scheme, "bwn | twn | sbin");

  // ablate
  auto* ablate = app.add_subcommand(
      "ablate", "run the granularity/partition/probability/schedule grid");
  std::string ablate_config;
  std::size_t ablate_threads = 1;
  bool ablate_quiet = false;
  Overrides ablate_overrides;
  ablate->add_option("--config", ablate_config);
  ablate->add_option("--threads", ablate_threads);
  ablate->add_flag("--quiet", ablate_quiet);
  ablate_overrides.add_flags(ablate);

  // synth-data
  auto* synth = app.add_subcommand(
      "synth-data", "write a synthetic digits dataset as IDX files");
  std::string synth_out = "data";
  std::size_t synth_train = 6000, synth_test = 1000;
  std::uint64_t synth_seed = 1;
  synth->add_option("--out", synth_out);
  synth->add_option("--train", synth_train);
  synth->add_option("--test", synth_test);
  synth->add_option("--seed", synth_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed())
      return cmd_train(train_overrides, train_config, train_pretrained,
                       train_quiet);
    if (eval->parsed())
      return cmd_eval(eval_ckpt, eval_dataset, eval_dir, eval_split,
                      eval_seed);
    if (exp->parsed()) return cmd_export(export_ckpt, export_out, export_scheme);
    if (inspect->parsed()) return cmd_inspect(inspect_ckpt, inspect_scheme);
    if (ablate->parsed())
      return cmd_ablate(ablate_overrides, ablate_config, ablate_threads,
                        ablate_quiet);
    if (synth->parsed())
      return cmd_synth_data(synth_out, synth_train, synth_test, synth_seed);
  } catch (const sq::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const sq::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const sq::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitFormat;
  } catch (const sq::CorruptionError& e) {
    std::fprintf(stderr, "corrupt file: %s\n", e.what());
    return kExitFormat;
  } catch (const sq::DivergedError& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
