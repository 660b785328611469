#ifndef SQ_RUNNER_HPP_
#define SQ_RUNNER_HPP_

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sq/checkpoint.hpp"
#include "sq/config.hpp"
#include "sq/dataio.hpp"
#include "sq/errors.hpp"
#include "sq/nets.hpp"
#include "sq/trainer.hpp"

namespace sq {

inline constexpr const char* kVersionString = "sqnet 1.0.0";
inline constexpr std::uint64_t kStreamMaster = 0x3A57E2;

struct MetricRow {
  std::size_t iteration = 0;
  std::size_t stage = 0;
  double ratio = 0.0;
  double loss = 0.0;
  double lr = 0.0;
};

struct StageEval {
  std::size_t stage = 0;
  double ratio = 0.0;
  std::string checkpoint;
  double top1_error = 0.0;
  double mean_loss = 0.0;
};

struct RunOutcome {
  std::vector<MetricRow> metrics;
  std::vector<StageEval> stage_evals;
  double final_test_error = 0.0;
  double final_test_loss = 0.0;
  std::string out_dir;
};

struct RunOptions {
  bool write_files = true;
  std::string pretrained_path;  // required by the tune schedule
  std::function<void(const MetricRow&)> on_metric;
};

namespace detail {

inline std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<MetricRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "iteration,stage,ratio,loss,lr\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g\n", r.iteration,
                  r.stage, r.ratio, r.loss, r.lr);
    out << buf;
  }
}

inline nlohmann::json config_json(const RunSpec& spec) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : config_entries(spec)) j[k] = v;
  return j;
}

}  // namespace detail

/// Load the configured dataset.
inline DataBundle load_bundle(const RunSpec& spec) {
  if (spec.dataset == "mnist") return load_mnist(spec.data_dir);
  if (spec.dataset == "cifar10") return load_cifar10(spec.data_dir);
  if (spec.dataset == "synthetic")
    return make_synthetic_digits(6000, 1000, 0xD1617 + spec.seed);
  throw ConfigError("config key 'dataset': invalid value '" + spec.dataset +
                    "'");
}

/// Copy weights and buffers (not momenta) from a full-precision checkpoint,
/// used by the fine-tune schedule as the starting point.
inline void load_pretrained_weights(Network& net, const std::string& path) {
  LoadedCheckpoint loaded = load_checkpoint(path);
  if (loaded.net.size() != net.size())
    throw CorruptionError(path + ": architecture mismatch for fine-tuning");
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto dst_params = net.layer(i).params();
    auto src_params = loaded.net.layer(i).params();
    if (dst_params.size() != src_params.size())
      throw CorruptionError(path + ": parameter mismatch for fine-tuning");
    for (std::size_t p = 0; p < dst_params.size(); ++p) {
      if (!src_params[p].value->same_shape(*dst_params[p].value))
        throw CorruptionError(path + ": shape mismatch for fine-tuning");
      *dst_params[p].value = *src_params[p].value;
    }
    auto dst_buffers = net.layer(i).buffers();
    auto src_buffers = loaded.net.layer(i).buffers();
    for (std::size_t b = 0; b < dst_buffers.size(); ++b)
      *dst_buffers[b].second = *src_buffers[b].second;
  }
}

/// Stage-by-stage training driver: runs the full schedule, checkpoints at
/// every stage boundary, and writes metrics.csv / summary.json /
/// manifest.json when file output is enabled.
inline RunOutcome run_training(const RunSpec& spec, const DataBundle& data,
                               const RunOptions& options = {}) {
  namespace fs = std::filesystem;
  const std::string started_at = detail::iso8601_now();

  const std::string arch = arch_for_dataset(spec.dataset);
  TrainConfig cfg = to_train_config(spec);
  SqSchedule sched = make_run_schedule(spec);

  Network net = make_network(arch);
  net.init_params(cfg.seed);
  if (sched.from_pretrained()) {
    if (options.pretrained_path.empty())
      throw ConfigError(
          "schedule 'tune' needs a pretrained full-precision checkpoint "
          "(pass --pretrained)");
    load_pretrained_weights(net, options.pretrained_path);
  }

  Trainer trainer(net, cfg, sched);
  const std::size_t total = sched.total_iterations();
  const std::size_t batches_per_epoch =
      data.train.size() / cfg.batch_size;
  if (batches_per_epoch == 0)
    throw ArgumentError("batch size exceeds training set size");

  RunOutcome outcome;
  outcome.out_dir = spec.out_dir;
  outcome.metrics.reserve(total);

  if (options.write_files) fs::create_directories(spec.out_dir);
  auto out_path = [&](const std::string& name) {
    return (fs::path(spec.out_dir) / name).string();
  };

  auto checkpoint_meta = [&](std::size_t t) {
    CheckpointMeta meta;
    meta.config_digest = config_digest(spec);
    meta.scheme_kind = cfg.quantized
                           ? static_cast<std::uint8_t>(cfg.scheme.kind)
                           : kSchemeFullPrecision;
    meta.granularity = static_cast<std::uint8_t>(cfg.granularity);
    meta.iteration = t;
    meta.seed = cfg.seed;
    meta.arch = arch;
    meta.rng_state = Rng::for_stream(cfg.seed, kStreamMaster, t).state();
    return meta;
  };

  Tensor x;
  std::vector<int> y;
  std::size_t epoch = static_cast<std::size_t>(-1);
  BatchIterator batches(data.train, cfg.batch_size, cfg.seed, 0);

  for (std::size_t t = 0; t < total; ++t) {
    const std::size_t e = t / batches_per_epoch;
    if (e != epoch) {
      epoch = e;
      batches = BatchIterator(data.train, cfg.batch_size, cfg.seed, epoch);
      batches.skip(t % batches_per_epoch);
    }
    if (!batches.next(x, y))
      throw StateError("batch iterator exhausted unexpectedly");

    const std::size_t stage = sched.stage_at(t);
    MetricRow row;
    row.iteration = t;
    row.stage = stage;
    row.ratio = cfg.quantized ? sched.ratio_at(t) : 0.0;
    row.lr = trainer.learning_rate_at(t);
    row.loss = trainer.step(x, y);
    outcome.metrics.push_back(row);
    if (options.on_metric) options.on_metric(row);

    const bool stage_end =
        t + 1 == sched.stage_begin(stage) + sched.stages()[stage].iterations;
    if (stage_end) {
      StageEval se;
      se.stage = stage;
      se.ratio = sched.stages()[stage].ratio;
      const EvalResult er =
          evaluate(net, data.test, cfg.quantized, cfg.scheme);
      se.top1_error = er.top1_error;
      se.mean_loss = er.mean_loss;
      if (options.write_files) {
        se.checkpoint = out_path("stage_" + std::to_string(stage + 1) + ".sqck");
        save_checkpoint(se.checkpoint, net, checkpoint_meta(t + 1),
                        trainer.fixed_state());
      }
      outcome.stage_evals.push_back(se);
    }
  }

  outcome.final_test_error = outcome.stage_evals.back().top1_error;
  outcome.final_test_loss = outcome.stage_evals.back().mean_loss;

  if (options.write_files) {
    save_checkpoint(out_path("final.sqck"), net, checkpoint_meta(total),
                    trainer.fixed_state());
    if (cfg.quantized)
      export_quantized(out_path("final.sqqx"), net, arch, cfg.scheme);
    detail::write_metrics_csv(out_path("metrics.csv"), outcome.metrics);

    nlohmann::json summary;
    summary["arch"] = arch;
    summary["config"] = detail::config_json(spec);
    summary["stages"] = nlohmann::json::array();
    for (const auto& se : outcome.stage_evals)
      summary["stages"].push_back({{"stage", se.stage + 1},
                                   {"ratio", se.ratio},
                                   {"checkpoint", se.checkpoint},
                                   {"top1_error", se.top1_error},
                                   {"mean_loss", se.mean_loss}});
    summary["final"] = {{"checkpoint", out_path("final.sqck")},
                        {"top1_error", outcome.final_test_error},
                        {"mean_loss", outcome.final_test_loss}};
    if (cfg.quantized) summary["final"]["export"] = out_path("final.sqqx");
    std::ofstream sout(out_path("summary.json"));
    sout << summary.dump(2) << "\n";

    nlohmann::json manifest;
    manifest["code_version"] = kVersionString;
    manifest["config"] = detail::config_json(spec);
    manifest["arch"] = arch;
    manifest["dataset"] = {{"name", spec.dataset},
                           {"data_dir", spec.data_dir},
                           {"train_size", data.train.size()},
                           {"test_size", data.test.size()}};
    manifest["out_dir"] = spec.out_dir;
    manifest["total_iterations"] = total;
    manifest["started_at"] = started_at;
    manifest["finished_at"] = detail::iso8601_now();
    std::ofstream mout(out_path("manifest.json"));
    mout << manifest.dump(2) << "\n";
  }
  return outcome;
}

// ---- ablation grid -----------------------------------------------------------

struct AblationCell {
  std::string granularity;
  std::string partition_mode;
  std::string prob_fn;
  std::string schedule;
  bool diverged = false;
  double test_error = 1.0;
  double test_loss = 0.0;
};

inline const std::vector<std::string>& ablation_granularities() {
  static const std::vector<std::string> v{"channel", "element"};
  return v;
}
inline const std::vector<std::string>& ablation_partitions() {
  static const std::vector<std::string> v{"stochastic", "deterministic",
                                          "fixed"};
  return v;
}
inline const std::vector<std::string>& ablation_prob_fns() {
  static const std::vector<std::string> v{"constant", "linear", "softmax",
                                          "sigmoid"};
  return v;
}
inline const std::vector<std::string>& ablation_schedules() {
  static const std::vector<std::string> v{"exp", "avg", "tune"};
  return v;
}

/// Run the full granularity x partition x probability x schedule grid from
/// one base spec. Trains a full-precision model first to seed the tune
/// cells. Cells run in-memory; results land in ablation.csv under out_dir.
inline std::vector<AblationCell> run_ablation(
    const RunSpec& base, const DataBundle& data, std::size_t n_threads = 1,
    const std::function<void(const AblationCell&)>& on_done = nullptr) {
  namespace fs = std::filesystem;
  fs::create_directories(base.out_dir);

  RunSpec fwn = base;
  fwn.scheme = "fwn";
  fwn.schedule = "exp";
  fwn.out_dir = (fs::path(base.out_dir) / "pretrained").string();
  run_training(fwn, data);
  const std::string pretrained =
      (fs::path(fwn.out_dir) / "final.sqck").string();

  std::vector<AblationCell> cells;
  for (const auto& g : ablation_granularities())
    for (const auto& p : ablation_partitions())
      for (const auto& f : ablation_prob_fns())
        for (const auto& s : ablation_schedules())
          cells.push_back({g, p, f, s});

  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&]() {
    for (;;) {
      std::size_t idx;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= cells.size()) return;
        idx = next++;
      }
      AblationCell& cell = cells[idx];
      RunSpec spec = base;
      spec.granularity = cell.granularity;
      spec.partition_mode = cell.partition_mode;
      spec.prob_fn = cell.prob_fn;
      spec.schedule = cell.schedule;
      RunOptions opt;
      opt.write_files = false;
      opt.pretrained_path = pretrained;
      try {
        const RunOutcome out = run_training(spec, data, opt);
        cell.test_error = out.final_test_error;
        cell.test_loss = out.final_test_loss;
      } catch (const DivergedError&) {
        cell.diverged = true;
      }
      if (on_done) {
        std::lock_guard<std::mutex> lock(mu);
        on_done(cell);
      }
    }
  };

  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::ofstream csv((fs::path(base.out_dir) / "ablation.csv").string());
  csv << "granularity,partition_mode,prob_fn,schedule,diverged,test_error,"
         "test_loss\n";
  char buf[64];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g", c.diverged ? 1 : 0,
                  c.test_error, c.test_loss);
    csv << c.granularity << ',' << c.partition_mode << ',' << c.prob_fn << ','
        << c.schedule << ',' << buf << "\n";
  }
  return cells;
}

// ---- loss curve analysis -----------------------------------------------------

struct BoundaryAnalysis {
  std::size_t stage = 0;        // stage entered at this boundary
  double pre_boundary_ma = 0.0;  // trailing moving average before the jump
  double spike_ma = 0.0;         // leading average right after the jump
  double recovery_ma = 0.0;      // trailing average at the end of the stage
  bool spiked = false;
  bool recovered = false;
};

/// Detect the quantization shock at each interior stage boundary: the mean
/// loss right after the ratio jump versus the trailing moving average
/// before it, and whether the stage recovers below that average.
inline std::vector<BoundaryAnalysis> analyze_stage_boundaries(
    const std::vector<MetricRow>& metrics, const SqSchedule& sched,
    std::size_t ma_window = 100, std::size_t spike_window = 20,
    double spike_factor = 1.10) {
  auto mean_range = [&](std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += metrics[i].loss;
    return s / static_cast<double>(end - begin);
  };

  std::vector<BoundaryAnalysis> out;
  for (std::size_t stage = 1; stage < sched.stage_count(); ++stage) {
    const std::size_t b = sched.stage_begin(stage);
    const std::size_t stage_end = b + sched.stages()[stage].iterations;
    if (stage_end > metrics.size()) break;
    BoundaryAnalysis ba;
    ba.stage = stage;
    const std::size_t pre_lo = b >= ma_window ? b - ma_window : 0;
    ba.pre_boundary_ma = mean_range(pre_lo, b);
    ba.spike_ma = mean_range(b, std::min(b + spike_window, stage_end));
    const std::size_t rec_lo =
        stage_end >= ma_window ? stage_end - ma_window : b;
    ba.recovery_ma = mean_range(rec_lo, stage_end);
    ba.spiked = ba.spike_ma > spike_factor * ba.pre_boundary_ma;
    ba.recovered = ba.recovery_ma < ba.pre_boundary_ma;
    out.push_back(ba);
  }
  return out;
}

}  // namespace sq

#endif  // SQ_RUNNER_HPP_
