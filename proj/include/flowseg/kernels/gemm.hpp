#pragma once

#include <Eigen/Core>

namespace flowseg::kernels {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// C (m x n) = A (m x k) * B (k x n), all row-major. accumulate adds into C.
template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate = false) {
  ConstMatrixMap<T> A(a, m, k);
  ConstMatrixMap<T> B(b, k, n);
  MatrixMap<T> C(c, m, n);
  if (accumulate) {
    C.noalias() += A * B;
  } else {
    C.noalias() = A * B;
  }
}

// C (m x n) = A^T * B with A stored (k x m).
template <typename T>
void gemm_at(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate = false) {
  ConstMatrixMap<T> A(a, k, m);
  ConstMatrixMap<T> B(b, k, n);
  MatrixMap<T> C(c, m, n);
  if (accumulate) {
    C.noalias() += A.transpose() * B;
  } else {
    C.noalias() = A.transpose() * B;
  }
}

// C (m x n) = A * B^T with B stored (n x k).
template <typename T>
void gemm_bt(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate = false) {
  ConstMatrixMap<T> A(a, m, k);
  ConstMatrixMap<T> B(b, n, k);
  MatrixMap<T> C(c, m, n);
  if (accumulate) {
    C.noalias() += A * B.transpose();
  } else {
    C.noalias() = A * B.transpose();
  }
}

}  // namespace flowseg::kernels
