#ifndef SQ_TENSOR_HPP_
#define SQ_TENSOR_HPP_

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sq/errors.hpp"
#include "sq/gemm.hpp"

namespace sq {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

/// Dense n-dimensional array of doubles, row-major, owning its storage.
/// Extents must all be >= 1; an empty shape is the null tensor.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(shape_numel(shape_), 0.0);
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (shape_numel(shape_) != data_.size())
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, double value) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = value;
    return t;
  }

  /// 1-D tensor from a literal list.
  static Tensor of(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> flat() { return {data_.data(), data_.size()}; }
  std::span<const double> flat() const { return {data_.data(), data_.size()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at2(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  double at2(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Same data, new shape; element count must be preserved.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
      throw ShapeError("reshape " + shape_str(shape_) + " -> " +
                       shape_str(shape) + " changes element count");
    return Tensor(std::move(shape), data_);
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  void validate_shape() const {
    for (std::size_t e : shape_)
      if (e == 0) throw ShapeError("zero extent in shape " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// ---- element-wise ops ------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

inline Tensor abs(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::fabs(a[i]);
  return out;
}

/// sign(x) with sign(0) = +1 so binary codes stay in {-1,+1}.
inline double sign_value(double x) { return x < 0.0 ? -1.0 : 1.0; }

inline Tensor sign(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = sign_value(a[i]);
  return out;
}

inline double l1_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::fabs(x);
  return s;
}

inline double l1_norm(const Tensor& t) { return l1_norm(t.flat()); }

inline double l1_distance(std::span<const double> a,
                          std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s;
}

/// 2-D matrix product (m x k) * (k x n).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul expects rank-2 operands");
  if (a.extent(1) != b.extent(0))
    throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  Tensor out({a.extent(0), b.extent(1)});
  detail::gemm(a.data(), b.data(), out.data(), a.extent(0), a.extent(1),
               b.extent(1));
  return out;
}

// ---- weight matrix view ----------------------------------------------------

/// Rows-of-filters view over a weight tensor: m output channels by
/// d = in*kh*kw (conv) or d = in (FC) columns. References the backing
/// tensor's storage; nothing is copied or reordered.
class WeightMatrixView {
 public:
  WeightMatrixView(double* data, std::size_t rows, std::size_t cols)
      : data_(data), rows_(rows), cols_(cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t units() const { return rows_ * cols_; }

  std::span<double> row(std::size_t i) {
    return {data_ + i * cols_, cols_};
  }
  std::span<const double> row(std::size_t i) const {
    return {data_ + i * cols_, cols_};
  }
  double* data() { return data_; }
  const double* data() const { return data_; }

 private:
  double* data_;
  std::size_t rows_;
  std::size_t cols_;
};

/// View a 4-D conv weight (m,n,kh,kw) or 2-D FC weight (m,n) as an
/// m-row matrix whose row i is the flattened i-th filter.
inline WeightMatrixView reshape_as_matrix(Tensor& weights) {
  const auto& s = weights.shape();
  if (s.size() == 4)
    return WeightMatrixView(weights.data(), s[0], s[1] * s[2] * s[3]);
  if (s.size() == 2) return WeightMatrixView(weights.data(), s[0], s[1]);
  throw ShapeError("weight tensor must be rank 2 or 4, got " +
                   shape_str(s));
}

inline const WeightMatrixView reshape_as_matrix(const Tensor& weights) {
  return reshape_as_matrix(const_cast<Tensor&>(weights));
}

/// Reinterpret every scalar weight as its own partition unit: a view with
/// m*d rows of length 1 over the same storage.
inline WeightMatrixView elementwise_expand(const WeightMatrixView& view) {
  return WeightMatrixView(const_cast<double*>(view.data()), view.units(), 1);
}

}  // namespace sq

#endif  // SQ_TENSOR_HPP_
