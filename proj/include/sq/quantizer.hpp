#ifndef SQ_QUANTIZER_HPP_
#define SQ_QUANTIZER_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "sq/errors.hpp"
#include "sq/rng.hpp"
#include "sq/tensor.hpp"

namespace sq {

enum class QuantKind : std::uint8_t {
  StochasticBinary = 0,  // codes in {-1,+1}, alpha = 1
  BWN = 1,               // codes = sign(w), alpha = mean|w|
  TWN = 2,               // codes in {-1,0,+1}, threshold 0.7*mean|w|
};

struct QuantScheme {
  QuantKind kind = QuantKind::TWN;
  double twn_threshold_coeff = 0.7;
};

/// One quantized filter row: ternary/binary codes, a non-negative scaling
/// factor, and the real-valued reconstruction alpha * codes used wherever
/// the low-bit row stands in for the full-precision one.
struct QuantizedRow {
  std::vector<std::int8_t> codes;
  double alpha = 0.0;
  std::vector<double> reconstruction;

  void rebuild_reconstruction() {
    reconstruction.resize(codes.size());
    for (std::size_t j = 0; j < codes.size(); ++j)
      reconstruction[j] = alpha * codes[j];
  }
};

/// max(0, min(1, (x+1)/2))
inline double hard_sigmoid(double x) {
  const double y = (x + 1.0) / 2.0;
  return y < 0.0 ? 0.0 : (y > 1.0 ? 1.0 : y);
}

/// Each code is +1 with probability hard_sigmoid(w_j), else -1; alpha = 1.
inline QuantizedRow quantize_stochastic_binary(std::span<const double> row,
                                               Rng& rng) {
  QuantizedRow q;
  q.codes.resize(row.size());
  for (std::size_t j = 0; j < row.size(); ++j)
    q.codes[j] = rng.uniform01() < hard_sigmoid(row[j]) ? 1 : -1;
  q.alpha = 1.0;
  q.rebuild_reconstruction();
  return q;
}

/// codes = sign(row), alpha = (1/d) * sum|w_j|.
inline QuantizedRow quantize_bwn(std::span<const double> row) {
  QuantizedRow q;
  const std::size_t d = row.size();
  q.codes.resize(d);
  double abs_sum = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    q.codes[j] = row[j] < 0.0 ? -1 : 1;
    abs_sum += std::fabs(row[j]);
  }
  q.alpha = abs_sum / static_cast<double>(d);
  q.rebuild_reconstruction();
  return q;
}

/// Threshold delta = (coeff/d) * sum|w_j|; codes +1/0/-1 by comparison with
/// +-delta; alpha = mean |w_j| over the above-threshold set, 0 if that set
/// is empty.
inline QuantizedRow quantize_twn(std::span<const double> row,
                                 double coeff = 0.7) {
  QuantizedRow q;
  const std::size_t d = row.size();
  q.codes.resize(d);
  double abs_sum = 0.0;
  for (std::size_t j = 0; j < d; ++j) abs_sum += std::fabs(row[j]);
  const double delta = (coeff / static_cast<double>(d)) * abs_sum;

  double selected_sum = 0.0;
  std::size_t selected = 0;
  for (std::size_t j = 0; j < d; ++j) {
    const double w = row[j];
    if (w > delta) {
      q.codes[j] = 1;
    } else if (w < -delta) {
      q.codes[j] = -1;
    } else {
      q.codes[j] = 0;
    }
    if (std::fabs(w) > delta) {
      selected_sum += std::fabs(w);
      ++selected;
    }
  }
  q.alpha = selected ? selected_sum / static_cast<double>(selected) : 0.0;
  q.rebuild_reconstruction();
  return q;
}

inline QuantizedRow quantize_row(const QuantScheme& scheme,
                                 std::span<const double> row,
                                 Rng* rng = nullptr) {
  switch (scheme.kind) {
    case QuantKind::StochasticBinary:
      if (!rng)
        throw ArgumentError("stochastic binary quantization needs an rng");
      return quantize_stochastic_binary(row, *rng);
    case QuantKind::BWN:
      return quantize_bwn(row);
    case QuantKind::TWN:
      return quantize_twn(row, scheme.twn_threshold_coeff);
  }
  throw ArgumentError("unknown quantizer kind");
}

/// Normalized L1 distance ||row - reconstruction||_1 / ||row||_1.
/// A zero row is exactly representable, so its error is defined as 0.
inline double quantization_error(std::span<const double> row,
                                 const QuantizedRow& q) {
  const double norm = l1_norm(row);
  if (norm == 0.0) return 0.0;
  return l1_distance(row, q.reconstruction) / norm;
}

/// Quantize every row of a weight matrix view.
inline std::vector<QuantizedRow> quantize_rows(const QuantScheme& scheme,
                                               const WeightMatrixView& view,
                                               Rng* rng = nullptr) {
  std::vector<QuantizedRow> rows;
  rows.reserve(view.rows());
  for (std::size_t i = 0; i < view.rows(); ++i)
    rows.push_back(quantize_row(scheme, view.row(i), rng));
  return rows;
}

/// Per-row quantization errors for a quantized weight matrix.
inline std::vector<double> channel_errors(const WeightMatrixView& view,
                                          const std::vector<QuantizedRow>& rows) {
  std::vector<double> e(view.rows());
  for (std::size_t i = 0; i < view.rows(); ++i)
    e[i] = quantization_error(view.row(i), rows[i]);
  return e;
}

/// Per-element quantization errors: unit (i,j) is scored by how far the
/// channel-level reconstruction of element j strays from w_ij, normalized
/// by |w_ij| (0 where w_ij is 0, which the reconstruction represents
/// exactly or costs alpha regardless of selection).
inline std::vector<double> elementwise_errors(
    const WeightMatrixView& view, const std::vector<QuantizedRow>& rows) {
  std::vector<double> e(view.units());
  std::size_t u = 0;
  for (std::size_t i = 0; i < view.rows(); ++i) {
    const auto row = view.row(i);
    const auto& rec = rows[i].reconstruction;
    for (std::size_t j = 0; j < view.cols(); ++j, ++u) {
      const double denom = std::fabs(row[j]);
      e[u] = denom == 0.0 ? 0.0 : std::fabs(row[j] - rec[j]) / denom;
    }
  }
  return e;
}

}  // namespace sq

#endif  // SQ_QUANTIZER_HPP_
