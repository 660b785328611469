#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "sq/config.hpp"

using namespace sq;

TEST_CASE("flat config parsing with comments and blank lines") {
  const std::string text = R"(
# desk-scale ternary run
scheme = twn
granularity = channel
partition_mode = stochastic
prob_fn = linear     # the default choice
schedule = exp
iters_per_stage = 250
lr = 0.05
lr_decay_steps = 600,900
momentum = 0.9
weight_decay = 0.0001
batch_size = 50
seed = 3
dataset = synthetic
data_dir = data
out_dir = runs/demo
)";
  const RunSpec spec = parse_config_text(text);
  CHECK(spec.scheme == "twn");
  CHECK(spec.iters_per_stage == 250);
  CHECK(spec.lr == 0.05);
  CHECK(spec.lr_decay_steps == std::vector<std::size_t>{600, 900});
  CHECK(spec.batch_size == 50);
  CHECK(spec.seed == 3);
  CHECK(spec.out_dir == "runs/demo");
}

TEST_CASE("unknown keys are rejected by name") {
  try {
    parse_config_text("bogus_knob = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus_knob") != std::string::npos);
  }
}

TEST_CASE("invalid values are rejected by value") {
  try {
    parse_config_text("prob_fn = quadratic\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("quadratic") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text("scheme = int8\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("lr = -0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("momentum = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("batch_size = zero\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("schedule = flat:2.0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("schedule = sometimes\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("just a line\n"), ConfigError);
}

TEST_CASE("later assignments and overrides take precedence") {
  RunSpec spec = parse_config_text("seed = 3\nseed = 4\n");
  CHECK(spec.seed == 4);
  apply_config_entry(spec, "seed", "7");
  CHECK(spec.seed == 7);
}

TEST_CASE("schedule translation") {
  RunSpec spec;
  spec.iters_per_stage = 100;
  spec.schedule = "exp";
  CHECK(make_run_schedule(spec).stage_count() == 4);
  spec.schedule = "avg";
  CHECK(make_run_schedule(spec).stage_count() == 5);
  spec.schedule = "tune";
  CHECK(make_run_schedule(spec).from_pretrained());
  spec.schedule = "flat:0.0";
  const SqSchedule flat = make_run_schedule(spec);
  CHECK(flat.stage_count() == 1);
  CHECK(flat.ratio_at(0) == 0.0);
}

TEST_CASE("scheme translation covers the full-precision baseline") {
  RunSpec spec;
  spec.scheme = "fwn";
  CHECK_FALSE(to_train_config(spec).quantized);
  spec.scheme = "bwn";
  const TrainConfig bwn = to_train_config(spec);
  CHECK(bwn.quantized);
  CHECK(bwn.scheme.kind == QuantKind::BWN);
  spec.scheme = "sbin";
  CHECK(to_train_config(spec).scheme.kind == QuantKind::StochasticBinary);
}

TEST_CASE("config digest is stable and sensitive") {
  RunSpec a, b;
  CHECK(config_digest(a) == config_digest(b));
  b.seed = 99;
  CHECK(config_digest(a) != config_digest(b));
}
