#ifndef SQ_SCHEDULE_HPP_
#define SQ_SCHEDULE_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sq/errors.hpp"

namespace sq {

enum class ScheduleMode : std::uint8_t {
  Exponential = 0,  // 50%, 75%, 87.5%, 100% - unquantized half halves per stage
  Average = 1,      // 20%, 40%, 60%, 80%, 100%
  FineTune = 2,     // exponential stages, starting from a pretrained model
};

/// Staged quantization-ratio plan: a fixed ratio per stage, each stage
/// running a fixed number of iterations.
class SqSchedule {
 public:
  struct Stage {
    double ratio;
    std::size_t iterations;
  };

  static SqSchedule make(ScheduleMode mode, std::size_t iters_per_stage) {
    if (iters_per_stage < 1)
      throw ArgumentError("schedule needs at least 1 iteration per stage");
    std::vector<double> ratios;
    bool pretrained = false;
    switch (mode) {
      case ScheduleMode::Exponential:
        ratios = {0.5, 0.75, 0.875, 1.0};
        break;
      case ScheduleMode::Average:
        ratios = {0.2, 0.4, 0.6, 0.8, 1.0};
        break;
      case ScheduleMode::FineTune:
        ratios = {0.5, 0.75, 0.875, 1.0};
        pretrained = true;
        break;
      default:
        throw ArgumentError("unknown schedule mode");
    }
    std::vector<Stage> stages;
    stages.reserve(ratios.size());
    for (double r : ratios) stages.push_back({r, iters_per_stage});
    return SqSchedule(std::move(stages), pretrained);
  }

  /// Unvalidated stage list for diagnostics and degenerate-ratio tests
  /// (e.g. a single stage pinned at r = 0). Training schedules built via
  /// make() always end at ratio 1.
  static SqSchedule custom(std::vector<Stage> stages,
                           bool from_pretrained = false) {
    if (stages.empty()) throw ArgumentError("schedule needs at least 1 stage");
    for (const auto& s : stages)
      if (s.iterations < 1)
        throw ArgumentError("schedule stage with 0 iterations");
    return SqSchedule(std::move(stages), from_pretrained);
  }

  double ratio_at(std::size_t t) const { return stages_[stage_at(t)].ratio; }

  std::size_t stage_at(std::size_t t) const {
    std::size_t acc = 0;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      acc += stages_[s].iterations;
      if (t < acc) return s;
    }
    throw ArgumentError("iteration " + std::to_string(t) +
                        " outside schedule of " +
                        std::to_string(total_iterations()) + " iterations");
  }

  /// First iteration of the given stage.
  std::size_t stage_begin(std::size_t stage) const {
    std::size_t acc = 0;
    for (std::size_t s = 0; s < stage; ++s) acc += stages_[s].iterations;
    return acc;
  }

  std::size_t total_iterations() const {
    std::size_t acc = 0;
    for (const auto& s : stages_) acc += s.iterations;
    return acc;
  }

  std::size_t stage_count() const { return stages_.size(); }
  const std::vector<Stage>& stages() const { return stages_; }
  bool from_pretrained() const { return from_pretrained_; }

 private:
  SqSchedule(std::vector<Stage> stages, bool pretrained)
      : stages_(std::move(stages)), from_pretrained_(pretrained) {}

  std::vector<Stage> stages_;
  bool from_pretrained_ = false;
};

}  // namespace sq

#endif  // SQ_SCHEDULE_HPP_
