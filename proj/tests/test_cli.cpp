#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sq/checkpoint.hpp"
#include "sq/nets.hpp"
#include "support.hpp"

#ifndef SQNET_CLI_PATH
#error "SQNET_CLI_PATH must point at the sqnet binary"
#endif

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliResult run_cli(const std::string& args, const std::string& tag) {
  const std::string dir = sqtest::temp_dir("cli_io");
  const std::string out = dir + "/" + tag + ".out";
  const std::string err = dir + "/" + tag + ".err";
  const std::string cmd =
      std::string(SQNET_CLI_PATH) + " " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WEXITSTATUS(status);
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

const std::string& base_config() {
  static const std::string path = [] {
    const std::string dir = sqtest::temp_dir("cli_cfg");
    const std::string p = dir + "/tiny.cfg";
    std::ofstream out(p);
    out << "scheme = twn\n"
           "schedule = exp\n"
           "iters_per_stage = 15\n"
           "lr = 0.03\n"
           "lr_decay_steps = none\n"
           "momentum = 0.9\n"
           "weight_decay = 0.0001\n"
           "batch_size = 50\n"
           "seed = 5\n"
           "dataset = synthetic\n";
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("train writes one metrics row per iteration") {
  const std::string out_dir = sqtest::temp_dir("cli_train_a");
  const CliResult r = run_cli(
      "train --quiet --config " + base_config() + " --out_dir " + out_dir,
      "train_a");
  REQUIRE(r.exit_code == 0);

  const std::string csv = slurp(out_dir + "/metrics.csv");
  REQUIRE(count_lines(csv) == 60 + 1);  // header + 4 stages x 15 iterations
  CHECK(csv.rfind("iteration,stage,ratio,loss,lr\n", 0) == 0);

  // Run artifacts exist.
  CHECK(!slurp(out_dir + "/summary.json").empty());
  CHECK(!slurp(out_dir + "/manifest.json").empty());
  CHECK(!slurp(out_dir + "/final.sqck").empty());
  CHECK(!slurp(out_dir + "/final.sqqx").empty());
}

TEST_CASE("same seed twice gives byte-identical metrics") {
  const std::string d1 = sqtest::temp_dir("cli_det_1");
  const std::string d2 = sqtest::temp_dir("cli_det_2");
  const std::string common = " --quiet --config " + base_config() +
                             " --seed 7 --iters_per_stage 10 --out_dir ";
  REQUIRE(run_cli("train" + common + d1, "det1").exit_code == 0);
  REQUIRE(run_cli("train" + common + d2, "det2").exit_code == 0);
  const std::string a = slurp(d1 + "/metrics.csv");
  REQUIRE(!a.empty());
  REQUIRE(a == slurp(d2 + "/metrics.csv"));
}

TEST_CASE("invalid config values name the offender and exit 2") {
  const std::string dir = sqtest::temp_dir("cli_badcfg");
  {
    std::ofstream out(dir + "/bad.cfg");
    out << "prob_fn = quadratic\n";
  }
  const CliResult r = run_cli("train --config " + dir + "/bad.cfg", "badcfg");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("quadratic") != std::string::npos);

  {
    std::ofstream out(dir + "/unknown.cfg");
    out << "warp_factor = 9\n";
  }
  const CliResult r2 =
      run_cli("train --config " + dir + "/unknown.cfg", "unknown");
  CHECK(r2.exit_code == 2);
  CHECK(r2.err.find("warp_factor") != std::string::npos);
}

TEST_CASE("missing dataset directory exits with the IO code") {
  const CliResult r = run_cli(
      "train --quiet --config " + base_config() +
          " --dataset mnist --data_dir /tmp/sqnet_tests/definitely_absent",
      "noio");
  CHECK(r.exit_code == 3);
}

TEST_CASE("eval of the trained checkpoint reproduces summary.json") {
  const std::string out_dir = sqtest::temp_dir("cli_train_eval");
  REQUIRE(run_cli("train --quiet --config " + base_config() +
                      " --iters_per_stage 10 --out_dir " + out_dir,
                  "train_eval")
              .exit_code == 0);

  const nlohmann::json summary =
      nlohmann::json::parse(slurp(out_dir + "/summary.json"));
  const CliResult r = run_cli(
      "eval --checkpoint " + out_dir + "/final.sqck --dataset synthetic --seed 5",
      "eval_ck");
  REQUIRE(r.exit_code == 0);
  const nlohmann::json got = nlohmann::json::parse(r.out);
  CHECK(got["top1_error"].get<double>() ==
        summary["final"]["top1_error"].get<double>());

  // The quantized export evaluates identically to the checkpoint at full
  // quantization ratio.
  const CliResult rx = run_cli(
      "eval --checkpoint " + out_dir + "/final.sqqx --dataset synthetic --seed 5",
      "eval_qx");
  REQUIRE(rx.exit_code == 0);
  const nlohmann::json gotx = nlohmann::json::parse(rx.out);
  CHECK(gotx["top1_error"].get<double>() ==
        got["top1_error"].get<double>());
  CHECK(gotx["mean_loss"].get<double>() == got["mean_loss"].get<double>());
}

TEST_CASE("eval rejects mismatched input shapes") {
  const std::string out_dir = sqtest::temp_dir("cli_shape");
  REQUIRE(run_cli("train --quiet --config " + base_config() +
                      " --iters_per_stage 5 --out_dir " + out_dir,
                  "shape_train")
              .exit_code == 0);

  // A 10x10 IDX dataset parses fine but cannot flow through the 28x28 net.
  const std::string data_dir = sqtest::temp_dir("cli_shape_data");
  std::vector<std::uint8_t> pixels(20 * 10 * 10, 128);
  sqtest::write_idx3_manual(data_dir + "/train-images-idx3-ubyte", 20, 10, 10,
                            pixels);
  sqtest::write_idx1_manual(data_dir + "/train-labels-idx1-ubyte",
                            std::vector<std::uint8_t>(20, 1));
  sqtest::write_idx3_manual(data_dir + "/t10k-images-idx3-ubyte", 20, 10, 10,
                            pixels);
  sqtest::write_idx1_manual(data_dir + "/t10k-labels-idx1-ubyte",
                            std::vector<std::uint8_t>(20, 1));

  const CliResult r = run_cli("eval --checkpoint " + out_dir +
                                  "/final.sqck --dataset mnist --data-dir " +
                                  data_dir,
                              "shape_eval");
  CHECK(r.exit_code == 1);
}

TEST_CASE("eval of a corrupt file exits with the format code") {
  const std::string dir = sqtest::temp_dir("cli_format");
  {
    std::ofstream out(dir + "/junk.sqck", std::ios::binary);
    out << "JUNKJUNKJUNK";
  }
  const CliResult r = run_cli(
      "eval --checkpoint " + dir + "/junk.sqck --dataset synthetic", "junk");
  CHECK(r.exit_code == 4);
}

TEST_CASE("inspect reports errors, probabilities, and statistics") {
  const std::string dir = sqtest::temp_dir("cli_inspect");
  // Constant rows are exactly representable by the binary quantizer, and a
  // known row pins down the error value.
  sq::Network net = sq::make_network("mnist_cnn");
  net.init_params(3);
  auto* fc2 = net.weighted()[3];  // 10 x 64
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 64; ++c) fc2->weights().at2(r, c) = 0.5;
  sq::CheckpointMeta meta;
  meta.arch = "mnist_cnn";
  meta.scheme_kind = static_cast<std::uint8_t>(sq::QuantKind::BWN);
  sq::save_checkpoint(dir + "/const.sqck", net, meta);

  const CliResult r = run_cli(
      "inspect --checkpoint " + dir + "/const.sqck --scheme bwn", "inspect");
  REQUIRE(r.exit_code == 0);
  const nlohmann::json j = nlohmann::json::parse(r.out);
  REQUIRE(j["layers"].size() == 4);

  for (const auto& layer : j["layers"]) {
    double sum = 0.0;
    for (const auto& p : layer["probabilities"]["linear"])
      sum += p.get<double>();
    CHECK(std::fabs(sum - 1.0) < 1e-9);
  }
  for (const auto& e : j["layers"][3]["errors"])
    CHECK(e.get<double>() == 0.0);  // constant rows, binary scheme
}

TEST_CASE("inspect matches the quantizer oracle on a known row") {
  const std::string dir = sqtest::temp_dir("cli_inspect2");
  sq::Network net = sq::make_network("mnist_cnn");
  net.init_params(4);
  auto* conv1 = net.weighted()[0];  // 8 x 9
  for (std::size_t c = 0; c < 9; ++c) conv1->weights().at2(0, c) = 0.0;
  conv1->weights().at2(0, 0) = 0.5;
  conv1->weights().at2(0, 1) = -1.5;
  conv1->weights().at2(0, 2) = 1.0;
  // Row 0 is [0.5,-1.5,1,0,...]: BWN alpha = 3/9, reconstruction +-1/3,
  // error = (|0.5-1/3|+|−1.5+1/3|+|1−1/3|+6*(1/3)) / 3.
  sq::CheckpointMeta meta;
  meta.arch = "mnist_cnn";
  sq::save_checkpoint(dir + "/row.sqck", net, meta);

  // Check through the library oracle rather than repeating arithmetic.
  auto view = sq::reshape_as_matrix(conv1->weights());
  const auto q = sq::quantize_bwn(view.row(0));
  const double expect = sq::quantization_error(view.row(0), q);

  const CliResult r = run_cli(
      "inspect --checkpoint " + dir + "/row.sqck --scheme bwn", "inspect2");
  REQUIRE(r.exit_code == 0);
  const nlohmann::json j = nlohmann::json::parse(r.out);
  CHECK(j["layers"][0]["errors"][0].get<double>() ==
        Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("synth-data emits a loadable IDX dataset") {
  const std::string dir = sqtest::temp_dir("cli_synth");
  REQUIRE(run_cli("synth-data --out " + dir + " --train 40 --test 10", "synth")
              .exit_code == 0);
  const sq::DataBundle b = sq::load_mnist(dir);
  CHECK(b.train.size() == 40);
  CHECK(b.test.size() == 10);
}
