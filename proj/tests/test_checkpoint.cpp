#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include "sq/checkpoint.hpp"
#include "sq/dataio.hpp"
#include "sq/nets.hpp"
#include "sq/trainer.hpp"
#include "support.hpp"

using namespace sq;

namespace {

Trainer make_trainer(Network& net, QuantKind kind, std::uint64_t seed,
                     SqSchedule sched) {
  TrainConfig cfg;
  cfg.quantized = true;
  cfg.scheme.kind = kind;
  cfg.lr = 0.02;
  cfg.batch_size = 25;
  cfg.seed = seed;
  return Trainer(net, cfg, std::move(sched));
}

void train_iterations(Trainer& trainer, Network&, const DataBundle& data,
                      std::size_t from, std::size_t count,
                      std::vector<double>* losses = nullptr) {
  Tensor x;
  std::vector<int> y;
  const std::size_t bpe = data.train.size() / 25;
  for (std::size_t t = from; t < from + count; ++t) {
    BatchIterator it(data.train, 25, trainer.config().seed, t / bpe);
    it.skip(t % bpe);
    REQUIRE(it.next(x, y));
    const double loss = trainer.step(x, y);
    if (losses) losses->push_back(loss);
  }
}

}  // namespace

TEST_CASE("checkpoint round-trip restores training bit-exactly") {
  const DataBundle data = make_synthetic_digits(200, 50, 71);
  const std::string dir = sqtest::temp_dir("ckpt_roundtrip");
  const std::string path = dir + "/mid.sqck";

  Network net = make_network("mnist_cnn");
  net.init_params(77);
  Trainer trainer = make_trainer(net, QuantKind::TWN, 77,
                                 SqSchedule::make(ScheduleMode::Exponential, 10));
  train_iterations(trainer, net, data, 0, 12);

  CheckpointMeta meta;
  meta.config_digest = 0xABCDEF;
  meta.scheme_kind = static_cast<std::uint8_t>(QuantKind::TWN);
  meta.iteration = trainer.iteration();
  meta.seed = 77;
  meta.arch = "mnist_cnn";
  meta.rng_state = Rng::for_stream(77, 1, 12).state();
  save_checkpoint(path, net, meta, trainer.fixed_state());

  // Continue the original for 10 more iterations.
  std::vector<double> expect;
  train_iterations(trainer, net, data, 12, 10, &expect);

  // Reload and continue from the same point.
  LoadedCheckpoint loaded = load_checkpoint(path);
  CHECK(loaded.meta.config_digest == 0xABCDEF);
  CHECK(loaded.meta.iteration == 12);
  CHECK(loaded.meta.seed == 77);
  CHECK(loaded.meta.arch == "mnist_cnn");
  CHECK(loaded.meta.rng_state == meta.rng_state);

  Trainer resumed = make_trainer(loaded.net, QuantKind::TWN, 77,
                                 SqSchedule::make(ScheduleMode::Exponential, 10));
  resumed.set_iteration(12);
  resumed.fixed_state() = loaded.fixed;
  std::vector<double> got;
  train_iterations(resumed, loaded.net, data, 12, 10, &got);
  REQUIRE(got.size() == expect.size());
  for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == expect[i]);
}

TEST_CASE("checkpoint preserves momentum buffers and BN state") {
  const DataBundle data = make_synthetic_digits(100, 20, 73);
  const std::string dir = sqtest::temp_dir("ckpt_buffers");

  Network net = make_network("mnist_cnn");
  net.init_params(5);
  Trainer trainer = make_trainer(net, QuantKind::BWN, 5,
                                 SqSchedule::custom({{0.5, 100}}));
  train_iterations(trainer, net, data, 0, 4);

  CheckpointMeta meta;
  meta.arch = "mnist_cnn";
  save_checkpoint(dir + "/m.sqck", net, meta);
  LoadedCheckpoint loaded = load_checkpoint(dir + "/m.sqck");

  for (std::size_t i = 0; i < net.size(); ++i) {
    auto a = net.layer(i).params();
    auto b = loaded.net.layer(i).params();
    REQUIRE(a.size() == b.size());
    for (std::size_t p = 0; p < a.size(); ++p) {
      for (std::size_t j = 0; j < a[p].value->size(); ++j) {
        REQUIRE((*a[p].value)[j] == (*b[p].value)[j]);
        REQUIRE((*a[p].momentum)[j] == (*b[p].momentum)[j]);
      }
    }
    auto ba = net.layer(i).buffers();
    auto bb = loaded.net.layer(i).buffers();
    for (std::size_t q = 0; q < ba.size(); ++q)
      for (std::size_t j = 0; j < ba[q].second->size(); ++j)
        REQUIRE((*ba[q].second)[j] == (*bb[q].second)[j]);
  }
}

TEST_CASE("checkpoint format errors") {
  const std::string dir = sqtest::temp_dir("ckpt_errors");
  {
    std::ofstream out(dir + "/wrong_magic.sqck", std::ios::binary);
    out << "NOPE" << std::string(64, '\0');
  }
  CHECK_THROWS_AS(load_checkpoint(dir + "/wrong_magic.sqck"), FormatError);

  {
    std::ofstream out(dir + "/bad_version.sqck", std::ios::binary);
    out << "SQCK";
    const std::uint32_t v = 99;
    out.write(reinterpret_cast<const char*>(&v), 4);
    out << std::string(64, '\0');
  }
  CHECK_THROWS_AS(load_checkpoint(dir + "/bad_version.sqck"), FormatError);

  // Truncation: write a valid checkpoint, then cut it short.
  Network net = make_network("mnist_cnn");
  net.init_params(1);
  CheckpointMeta meta;
  meta.arch = "mnist_cnn";
  save_checkpoint(dir + "/full.sqck", net, meta);
  {
    std::ifstream in(dir + "/full.sqck", std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    std::ofstream out(dir + "/cut.sqck", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(dir + "/cut.sqck"), CorruptionError);

  CHECK_THROWS_AS(load_checkpoint(dir + "/missing.sqck"), IoError);
}

TEST_CASE("quantized export reconstructs the deployment weights exactly") {
  const DataBundle data = make_synthetic_digits(200, 100, 79);
  const std::string dir = sqtest::temp_dir("export");

  Network net = make_network("mnist_cnn");
  net.init_params(31);
  Trainer trainer = make_trainer(net, QuantKind::TWN, 31,
                                 SqSchedule::custom({{1.0, 100}}));
  train_iterations(trainer, net, data, 0, 8);

  const QuantScheme scheme{QuantKind::TWN};
  export_quantized(dir + "/model.sqqx", net, "mnist_cnn", scheme);
  LoadedExport loaded = load_quantized(dir + "/model.sqqx");
  CHECK(loaded.arch == "mnist_cnn");
  CHECK(loaded.scheme.kind == QuantKind::TWN);

  // File reconstruction == in-memory deployment quantization, bit for bit.
  auto src = net.weighted();
  auto dst = loaded.net.weighted();
  REQUIRE(src.size() == dst.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto view = reshape_as_matrix(src[i]->weights());
    auto got = reshape_as_matrix(dst[i]->weights());
    for (std::size_t r = 0; r < view.rows(); ++r) {
      const QuantizedRow q = deploy_quantize_row(scheme, view.row(r));
      for (std::size_t c = 0; c < view.cols(); ++c)
        REQUIRE(got.row(r)[c] == q.reconstruction[c]);
    }
    for (std::size_t j = 0; j < src[i]->bias().size(); ++j)
      REQUIRE(dst[i]->bias()[j] == src[i]->bias()[j]);
  }

  // Evaluating the export equals evaluating the checkpointed model with
  // fully quantized weights.
  const EvalResult from_ckpt = evaluate(net, data.test, true, scheme);
  const EvalResult from_export = evaluate(loaded.net, data.test, false);
  REQUIRE(from_export.top1_error == from_ckpt.top1_error);
  REQUIRE(from_export.mean_loss == from_ckpt.mean_loss);
}

TEST_CASE("export format errors") {
  const std::string dir = sqtest::temp_dir("export_errors");
  {
    std::ofstream out(dir + "/bad.sqqx", std::ios::binary);
    out << "SQCK" << std::string(32, '\0');  // checkpoint magic, not export
  }
  CHECK_THROWS_AS(load_quantized(dir + "/bad.sqqx"), FormatError);
}
