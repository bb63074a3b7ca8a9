#pragma once

// Private GEMM wrapper over Eigen; row-major views on raw buffers.

#include <Eigen/Core>
#include <cstddef>

namespace pkgcn::detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMatrixView = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MatrixView = Eigen::Map<RowMatrix<T>>;

/// out (+)= op(a) * op(b). `a` is stored a_rows x a_cols before transposition.
template <typename T>
void gemm(const T* a, std::size_t a_rows, std::size_t a_cols, bool trans_a, const T* b, std::size_t b_rows,
          std::size_t b_cols, bool trans_b, T* out, bool accumulate) {
  const auto ar = static_cast<Eigen::Index>(a_rows), ac = static_cast<Eigen::Index>(a_cols);
  const auto br = static_cast<Eigen::Index>(b_rows), bc = static_cast<Eigen::Index>(b_cols);
  ConstMatrixView<T> A(a, ar, ac);
  ConstMatrixView<T> B(b, br, bc);
  const Eigen::Index rows = trans_a ? ac : ar;
  const Eigen::Index cols = trans_b ? br : bc;
  MatrixView<T> C(out, rows, cols);
  if (!trans_a && !trans_b) {
    if (accumulate) C.noalias() += A * B; else C.noalias() = A * B;
  } else if (!trans_a && trans_b) {
    if (accumulate) C.noalias() += A * B.transpose(); else C.noalias() = A * B.transpose();
  } else if (trans_a && !trans_b) {
    if (accumulate) C.noalias() += A.transpose() * B; else C.noalias() = A.transpose() * B;
  } else {
    if (accumulate) C.noalias() += A.transpose() * B.transpose(); else C.noalias() = A.transpose() * B.transpose();
  }
}

}  // namespace pkgcn::detail
