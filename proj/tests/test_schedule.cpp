#include <catch2/catch_amalgamated.hpp>

#include "sq/schedule.hpp"

using namespace sq;

TEST_CASE("exponential schedule halves the unquantized part each stage") {
  const SqSchedule s = SqSchedule::make(ScheduleMode::Exponential, 1000);
  REQUIRE(s.stage_count() == 4);
  const double expect[] = {0.5, 0.75, 0.875, 1.0};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(s.stages()[i].ratio == expect[i]);
    CHECK(s.stages()[i].iterations == 1000);
  }
  // Unquantized fraction: 0.5 -> 0.25 -> 0.125 -> 0.
  const double leftover[] = {0.5, 0.25, 0.125, 0.0};
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(1.0 - s.stages()[i].ratio == leftover[i]);
  CHECK_FALSE(s.from_pretrained());
}

TEST_CASE("average schedule") {
  const SqSchedule s = SqSchedule::make(ScheduleMode::Average, 10);
  REQUIRE(s.stage_count() == 5);
  const double expect[] = {0.2, 0.4, 0.6, 0.8, 1.0};
  for (std::size_t i = 0; i < 5; ++i) CHECK(s.stages()[i].ratio == expect[i]);
}

TEST_CASE("fine-tune schedule shares exponential ratios") {
  const SqSchedule s = SqSchedule::make(ScheduleMode::FineTune, 10);
  REQUIRE(s.stage_count() == 4);
  CHECK(s.stages()[0].ratio == 0.5);
  CHECK(s.stages()[3].ratio == 1.0);
  CHECK(s.from_pretrained());
}

TEST_CASE("ratio_at is piecewise constant and monotone") {
  const SqSchedule s = SqSchedule::make(ScheduleMode::Exponential, 1000);
  CHECK(s.ratio_at(0) == 0.5);
  CHECK(s.ratio_at(999) == 0.5);
  CHECK(s.ratio_at(1000) == 0.75);
  CHECK(s.ratio_at(3999) == 1.0);
  CHECK_THROWS_AS(s.ratio_at(4000), ArgumentError);

  const SqSchedule avg = SqSchedule::make(ScheduleMode::Average, 100);
  CHECK(avg.ratio_at(250) == 0.6);

  double prev = 0.0;
  bool reached_full = false;
  for (std::size_t t = 0; t < s.total_iterations(); ++t) {
    const double r = s.ratio_at(t);
    CHECK(r >= prev);
    prev = r;
    if (r == 1.0) reached_full = true;
  }
  CHECK(reached_full);
}

TEST_CASE("total iterations is stages times the per-stage budget") {
  CHECK(SqSchedule::make(ScheduleMode::Exponential, 250).total_iterations() ==
        4 * 250);
  CHECK(SqSchedule::make(ScheduleMode::Average, 250).total_iterations() ==
        5 * 250);
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(SqSchedule::make(ScheduleMode::Exponential, 0),
                  ArgumentError);
  CHECK_THROWS_AS(SqSchedule::custom({}), ArgumentError);
  CHECK_THROWS_AS(SqSchedule::custom({{0.5, 0}}), ArgumentError);

  // Diagnostic schedules may pin any ratio, including 0.
  const SqSchedule flat = SqSchedule::custom({{0.0, 100}});
  CHECK(flat.ratio_at(99) == 0.0);
  CHECK(flat.total_iterations() == 100);
}

TEST_CASE("stage_begin locates boundaries") {
  const SqSchedule s = SqSchedule::make(ScheduleMode::Exponential, 500);
  CHECK(s.stage_begin(0) == 0);
  CHECK(s.stage_begin(2) == 1000);
  CHECK(s.stage_at(1499) == 2);
  CHECK(s.stage_at(1500) == 3);
}
