#pragma once

#include <cblas.h>

#include <vector>

namespace relmeta {

// Row-major helpers over cblas. Matrices are flat std::vector<double> or raw
// pointers; shapes are passed explicitly.

// Y[m x n] = X[m x k] * W[n x k]^T   (W stored row-major as n rows of k)
inline void matmul_nt(const double* x, const double* w, double* y, int m, int k, int n) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, n, k, 1.0, x, k, w, k, 0.0, y, n);
}

// Y[m x n] = X[m x k] * W[k x n]
inline void matmul_nn(const double* x, const double* w, double* y, int m, int k, int n) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0, x, k, w, n, 0.0, y, n);
}

// C[k x n] += A[m x k]^T * B[m x n]
inline void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, k, n, m, 1.0, a, k, b, n, 1.0, c, n);
}

}  // namespace relmeta
