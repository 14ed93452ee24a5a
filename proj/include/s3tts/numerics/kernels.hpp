#pragma once

#include <cstddef>
#include <vector>

namespace s3tts::kernels {

// C[M,N] += A[M,K] * B[K,N]
template <class T>
void gemm_nn(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    const T* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <class T>
void gemm_tn(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* B, T* C) {
  for (std::size_t k = 0; k < K; ++k) {
    const T* b = B + k * N;
    const T* a = A + k * M;
    for (std::size_t i = 0; i < M; ++i) {
      const T av = a[i];
      T* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T. B is transposed into scratch so the inner
// loop stays contiguous.
template <class T>
void gemm_nt(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* B, T* C) {
  std::vector<T> bt(K * N);
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t k = 0; k < K; ++k) bt[k * N + j] = B[j * K + k];
  gemm_nn(M, K, N, A, bt.data(), C);
}

}  // namespace s3tts::kernels
