#ifndef SQ_TESTS_SUPPORT_HPP_
#define SQ_TESTS_SUPPORT_HPP_

// Test-only oracles, kept independent of the library implementation paths
// they are used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sq/rng.hpp"
#include "sq/tensor.hpp"

namespace sqtest {

// Straight-line ternary quantization oracle: threshold at 0.7 * mean|w|,
// scale by the mean magnitude of the surviving elements. Written as two
// plain passes; compared bit-for-bit against the library.
struct TernaryOracle {
  std::vector<int> codes;
  double delta = 0.0;
  double alpha = 0.0;
};

inline TernaryOracle ternary_oracle(const std::vector<double>& w) {
  TernaryOracle out;
  const std::size_t d = w.size();
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) s += std::fabs(w[j]);
  out.delta = (0.7 / static_cast<double>(d)) * s;

  out.codes.resize(d, 0);
  double kept = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < d; ++j) {
    if (w[j] > out.delta) out.codes[j] = 1;
    if (w[j] < -out.delta) out.codes[j] = -1;
    if (std::fabs(w[j]) > out.delta) {
      kept += std::fabs(w[j]);
      ++count;
    }
  }
  out.alpha = count == 0 ? 0.0 : kept / static_cast<double>(count);
  return out;
}

// Dense grid search for the scale minimizing ||w - a*sign(w)||_2.
inline double grid_search_binary_alpha(const std::vector<double>& w,
                                       double step = 1e-3) {
  double hi = 0.0;
  for (double x : w) hi = std::max(hi, std::fabs(x));
  hi = std::max(hi * 1.5, step);
  double best_a = 0.0, best_cost = std::numeric_limits<double>::infinity();
  for (double a = 0.0; a <= hi; a += step) {
    double cost = 0.0;
    for (double x : w) {
      const double s = x < 0.0 ? -1.0 : 1.0;
      cost += (x - a * s) * (x - a * s);
    }
    if (cost < best_cost) {
      best_cost = cost;
      best_a = a;
    }
  }
  return best_a;
}

// Central finite differences of a scalar function with respect to the
// entries of a tensor, at the given step.
inline sq::Tensor numeric_gradient(sq::Tensor& x,
                                   const std::function<double()>& f,
                                   double step = 1e-5) {
  sq::Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f();
    x[i] = saved - step;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

// Largest relative deviation between analytic and numeric gradients.
inline double max_relative_error(const sq::Tensor& analytic,
                                 const sq::Tensor& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double scale = std::max({std::fabs(a), std::fabs(n), 1e-8});
    if (std::fabs(a) < 1e-10 && std::fabs(n) < 1e-10) continue;
    worst = std::max(worst, std::fabs(a - n) / scale);
  }
  return worst;
}

inline void fill_uniform(sq::Tensor& t, sq::Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
  for (auto& v : t.flat()) v = rng.uniform(lo, hi);
}

// Byte-level IDX writers, independent of the library's encoder.
inline void write_bytes(std::ofstream& out, std::initializer_list<int> bytes) {
  for (int b : bytes) out.put(static_cast<char>(b));
}

inline void write_idx3_manual(const std::string& path, int n, int h, int w,
                              const std::vector<std::uint8_t>& pixels) {
  std::ofstream out(path, std::ios::binary);
  write_bytes(out, {0, 0, 8, 3});
  write_bytes(out, {(n >> 24) & 255, (n >> 16) & 255, (n >> 8) & 255, n & 255});
  write_bytes(out, {(h >> 24) & 255, (h >> 16) & 255, (h >> 8) & 255, h & 255});
  write_bytes(out, {(w >> 24) & 255, (w >> 16) & 255, (w >> 8) & 255, w & 255});
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
}

inline void write_idx1_manual(const std::string& path,
                              const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  write_bytes(out, {0, 0, 8, 1});
  const int n = static_cast<int>(labels.size());
  write_bytes(out, {(n >> 24) & 255, (n >> 16) & 255, (n >> 8) & 255, n & 255});
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

inline std::string temp_dir(const std::string& tag) {
  const std::string dir = "/tmp/sqnet_tests/" + tag;
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace sqtest

#endif  // SQ_TESTS_SUPPORT_HPP_
