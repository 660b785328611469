#ifndef SQ_GEMM_HPP_
#define SQ_GEMM_HPP_

#include <cstddef>

#include <Eigen/Core>

namespace sq::detail {

using EigenMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EigenMat>;
using ConstMatMap = Eigen::Map<const EigenMat>;

// c (m x n) = a (m x k) * b (k x n), all row-major dense.
inline void gemm(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  MatMap cm(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  ConstMatMap am(a, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
  ConstMatMap bm(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  cm.noalias() = am * bm;
}

// c (m x n) = a^T (m x k, stored k x m) * b (k x n).
inline void gemm_at(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  MatMap cm(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  ConstMatMap am(a, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
  ConstMatMap bm(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  cm.noalias() = am.transpose() * bm;
}

// c (m x n) = a (m x k) * b^T (k x n, stored n x k).
inline void gemm_bt(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  MatMap cm(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  ConstMatMap am(a, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
  ConstMatMap bm(b, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  cm.noalias() = am * bm.transpose();
}

}  // namespace sq::detail

#endif  // SQ_GEMM_HPP_
