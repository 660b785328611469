#ifndef SQ_PARTITION_HPP_
#define SQ_PARTITION_HPP_

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sq/errors.hpp"
#include "sq/rng.hpp"

namespace sq {

enum class ProbabilityKind : std::uint8_t {
  Constant = 0,
  Linear = 1,
  Softmax = 2,
  Sigmoid = 3,
};

struct ProbabilityFn {
  ProbabilityKind kind = ProbabilityKind::Linear;
  double epsilon = 1e-7;
};

enum class Granularity : std::uint8_t { ChannelWise = 0, ElementWise = 1 };

enum class PartitionMode : std::uint8_t {
  Stochastic = 0,
  Deterministic = 1,
  Fixed = 2,
};

/// Disjoint index sets covering all m rows: G_q gets quantized, G_r stays
/// full-precision. Both are kept sorted ascending.
struct PartitionResult {
  std::vector<std::size_t> quantized;  // G_q
  std::vector<std::size_t> real;       // G_r
  double ratio_used = 0.0;

  std::vector<std::uint8_t> quantized_mask(std::size_t m) const {
    std::vector<std::uint8_t> mask(m, 0);
    for (std::size_t i : quantized) mask[i] = 1;
    return mask;
  }
};

/// |G_q| = round(r*m), clamped to [0, m]. Rounds half away from zero.
inline std::size_t quantized_count(double ratio, std::size_t m) {
  const long long n = std::llround(ratio * static_cast<double>(m));
  if (n <= 0) return 0;
  return std::min<std::size_t>(static_cast<std::size_t>(n), m);
}

/// Map per-row quantization errors to selection weights. f_i = 1/(e_i + eps)
/// inverts the error; Constant/Linear/Softmax return a distribution summing
/// to 1, Sigmoid returns unnormalized weights (the roulette renormalizes).
inline std::vector<double> quantization_probabilities(
    std::span<const double> errors, const ProbabilityFn& fn) {
  const std::size_t m = errors.size();
  if (m == 0) throw ArgumentError("quantization_probabilities: empty errors");

  std::vector<double> p(m);
  if (fn.kind == ProbabilityKind::Constant) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(m));
    return p;
  }

  std::vector<double> f(m);
  for (std::size_t i = 0; i < m; ++i) f[i] = 1.0 / (errors[i] + fn.epsilon);

  switch (fn.kind) {
    case ProbabilityKind::Linear: {
      const double total = std::accumulate(f.begin(), f.end(), 0.0);
      for (std::size_t i = 0; i < m; ++i) p[i] = f[i] / total;
      break;
    }
    case ProbabilityKind::Softmax: {
      // f_i reaches 1/eps ~ 1e7 for exactly representable rows; shift by
      // max(f) before exponentiating to avoid overflow.
      const double fmax = *std::max_element(f.begin(), f.end());
      double total = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        p[i] = std::exp(f[i] - fmax);
        total += p[i];
      }
      for (std::size_t i = 0; i < m; ++i) p[i] /= total;
      break;
    }
    case ProbabilityKind::Sigmoid: {
      for (std::size_t i = 0; i < m; ++i) p[i] = 1.0 / (1.0 + std::exp(-f[i]));
      break;
    }
    case ProbabilityKind::Constant:
      break;  // handled above
  }
  return p;
}

namespace detail {

// Sequential roulette draw: renormalize the surviving weights, sample
// v in (0,1], walk the cumulative sum, zero the selected entry.
inline void roulette_walk(std::vector<double>& weights, double& total,
                          std::size_t n_draws, Rng& rng,
                          std::vector<std::size_t>& selected) {
  const std::size_t m = weights.size();
  for (std::size_t k = 0; k < n_draws && total > 0.0; ++k) {
    const double v = rng.uniform_open01();
    double s = 0.0;
    std::size_t j = 0;
    std::size_t last_positive = m;  // m = none seen yet
    for (; j < m; ++j) {
      if (weights[j] <= 0.0) continue;
      last_positive = j;
      s += weights[j] / total;
      if (s >= v) break;
    }
    if (j == m) j = last_positive;  // rounding left s slightly below v
    if (j == m) break;              // no positive mass left
    selected.push_back(j);
    total -= weights[j];
    weights[j] = 0.0;
  }
}

// Fenwick-tree variant: same selection law, O(log m) per draw. Used when
// m is large (element-wise granularity), where the linear walk is too slow.
class FenwickSampler {
 public:
  explicit FenwickSampler(const std::vector<double>& weights)
      : n_(weights.size()), tree_(weights.size() + 1, 0.0), total_(0.0) {
    for (std::size_t i = 0; i < n_; ++i) {
      if (weights[i] > 0.0) {
        add(i, weights[i]);
        total_ += weights[i];
      }
    }
    values_ = weights;
  }

  double total() const { return total_; }

  // Smallest index whose cumulative weight reaches target in (0, total].
  std::size_t select(double target) const {
    std::size_t idx = 0;
    std::size_t bit = std::bit_floor(n_);
    double acc = 0.0;
    while (bit) {
      const std::size_t next = idx + bit;
      if (next <= n_ && acc + tree_[next] < target) {
        idx = next;
        acc += tree_[next];
      }
      bit >>= 1;
    }
    return idx;  // 0-based: idx entries have cumsum < target
  }

  void remove(std::size_t i) {
    add(i, -values_[i]);
    total_ -= values_[i];
    values_[i] = 0.0;
  }

  double value(std::size_t i) const { return values_[i]; }

 private:
  void add(std::size_t i, double delta) {
    for (std::size_t j = i + 1; j <= n_; j += j & (~j + 1)) tree_[j] += delta;
  }

  std::size_t n_;
  std::vector<double> tree_;
  std::vector<double> values_;
  double total_;
};

inline void roulette_tree(std::vector<double>& weights, double& total,
                          std::size_t n_draws, Rng& rng,
                          std::vector<std::size_t>& selected) {
  FenwickSampler sampler(weights);
  total = sampler.total();
  for (std::size_t k = 0; k < n_draws && sampler.total() > 0.0; ++k) {
    const double v = rng.uniform_open01();
    std::size_t j = sampler.select(v * sampler.total());
    while (j < weights.size() && sampler.value(j) <= 0.0) ++j;
    if (j >= weights.size()) {
      j = weights.size();
      while (j > 0 && sampler.value(j - 1) <= 0.0) --j;
      if (j == 0) break;
      --j;
    }
    selected.push_back(j);
    sampler.remove(j);
  }
  total = sampler.total();
  for (std::size_t i : selected) weights[i] = 0.0;
}

constexpr std::size_t kRouletteTreeThreshold = 512;

}  // namespace detail

/// Sampling-without-replacement roulette: draws round(r*m) distinct indices
/// with probability proportional to the surviving weights. If positive mass
/// runs out early, the remaining slots are filled with the lowest unselected
/// indices so |G_q| is exact.
inline PartitionResult roulette_partition(std::span<const double> probabilities,
                                          double ratio, Rng& rng) {
  const std::size_t m = probabilities.size();
  if (m == 0) throw ArgumentError("roulette_partition: empty probabilities");
  const std::size_t n_q = quantized_count(ratio, m);

  std::vector<double> weights(probabilities.begin(), probabilities.end());
  double total = std::accumulate(weights.begin(), weights.end(), 0.0);

  PartitionResult result;
  result.ratio_used = ratio;
  result.quantized.reserve(n_q);

  if (m >= detail::kRouletteTreeThreshold)
    detail::roulette_tree(weights, total, n_q, rng, result.quantized);
  else
    detail::roulette_walk(weights, total, n_q, rng, result.quantized);

  if (result.quantized.size() < n_q) {
    // Degenerate weights exhausted; deterministic top-up keeps |G_q| exact.
    std::vector<std::uint8_t> taken(m, 0);
    for (std::size_t i : result.quantized) taken[i] = 1;
    for (std::size_t i = 0; i < m && result.quantized.size() < n_q; ++i)
      if (!taken[i]) {
        result.quantized.push_back(i);
        taken[i] = 1;
      }
  }

  std::sort(result.quantized.begin(), result.quantized.end());
  result.real.reserve(m - n_q);
  std::size_t next = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (next < result.quantized.size() && result.quantized[next] == i)
      ++next;
    else
      result.real.push_back(i);
  }
  return result;
}

/// Sort-based partition: G_q = the round(r*m) rows with the least
/// quantization error, ties broken by ascending index.
inline PartitionResult deterministic_partition(std::span<const double> errors,
                                               double ratio) {
  const std::size_t m = errors.size();
  if (m == 0) throw ArgumentError("deterministic_partition: empty errors");
  const std::size_t n_q = quantized_count(ratio, m);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return errors[a] < errors[b];
                   });

  PartitionResult result;
  result.ratio_used = ratio;
  result.quantized.assign(order.begin(), order.begin() + n_q);
  std::sort(result.quantized.begin(), result.quantized.end());
  result.real.reserve(m - n_q);
  std::size_t next = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (next < result.quantized.size() && result.quantized[next] == i)
      ++next;
    else
      result.real.push_back(i);
  }
  return result;
}

/// Holds the partition drawn at the start of a training stage so that every
/// iteration of the stage reuses it unchanged.
class FixedPartitionStore {
 public:
  void store(PartitionResult partition) { stored_ = std::move(partition); }

  const PartitionResult& get() const {
    if (!stored_)
      throw StateError("fixed partition queried before any was stored");
    return *stored_;
  }

  bool has() const { return stored_.has_value(); }
  void reset() { stored_.reset(); }

 private:
  std::optional<PartitionResult> stored_;
};

}  // namespace sq

#endif  // SQ_PARTITION_HPP_
