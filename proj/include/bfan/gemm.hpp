#pragma once

#include <vector>

namespace bfan {

// Row-major C [M,N] (+)= A [M,K] * B [K,N]. Register-tiled 4x16 inner kernel;
// the accumulator block stays in registers and the inner loops vectorize.
// Single-threaded and order-deterministic.
inline void matmul_nn(int M, int N, int K, const double* A, const double* B, double* C,
                      bool accumulate) {
  constexpr int MR = 4;
  constexpr int NR = 16;
  if (!accumulate)
    for (long long i = 0; i < static_cast<long long>(M) * N; ++i) C[i] = 0.0;

  int i = 0;
  for (; i + MR <= M; i += MR) {
    int j = 0;
    for (; j + NR <= N; j += NR) {
      double acc[MR][NR] = {};
      for (int k = 0; k < K; ++k) {
        const double* b = B + static_cast<long long>(k) * N + j;
        for (int ii = 0; ii < MR; ++ii) {
          const double a = A[static_cast<long long>(i + ii) * K + k];
          for (int jj = 0; jj < NR; ++jj) acc[ii][jj] += a * b[jj];
        }
      }
      for (int ii = 0; ii < MR; ++ii) {
        double* c = C + static_cast<long long>(i + ii) * N + j;
        for (int jj = 0; jj < NR; ++jj) c[jj] += acc[ii][jj];
      }
    }
    for (; j < N; ++j) {
      for (int ii = 0; ii < MR; ++ii) {
        double s = 0.0;
        for (int k = 0; k < K; ++k)
          s += A[static_cast<long long>(i + ii) * K + k] * B[static_cast<long long>(k) * N + j];
        C[static_cast<long long>(i + ii) * N + j] += s;
      }
    }
  }
  for (; i < M; ++i) {
    for (int k = 0; k < K; ++k) {
      const double a = A[static_cast<long long>(i) * K + k];
      const double* b = B + static_cast<long long>(k) * N;
      double* c = C + static_cast<long long>(i) * N;
      for (int j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

inline void transpose(int rows, int cols, const double* src, double* dst) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      dst[static_cast<long long>(c) * rows + r] = src[static_cast<long long>(r) * cols + c];
}

// C (+)= A^T [M,K] * B [K,N] where A is stored [K,M]. Transposes A into
// scratch; A is always the small operand at our sizes.
inline void matmul_tn(int M, int N, int K, const double* A, const double* B, double* C,
                      bool accumulate, std::vector<double>& scratch) {
  scratch.resize(static_cast<size_t>(M) * K);
  transpose(K, M, A, scratch.data());
  matmul_nn(M, N, K, scratch.data(), B, C, accumulate);
}

// C (+)= A [M,K] * B^T [K,N] where B is stored [N,K].
inline void matmul_nt(int M, int N, int K, const double* A, const double* B, double* C,
                      bool accumulate, std::vector<double>& scratch) {
  scratch.resize(static_cast<size_t>(K) * N);
  transpose(N, K, B, scratch.data());
  matmul_nn(M, N, K, A, scratch.data(), C, accumulate);
}

}  // namespace bfan
