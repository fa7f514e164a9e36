// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense float32 kernels behind the autograd ops. Each kernel has an
// OpenMP-parallel implementation here and a plain serial reference in
// moelab::kern::ref. Tests cross-check the two; tools/kernel_bench
// compares their throughput.
//
// Reductions (softmax normalizers) accumulate in double; matmul
// accumulates in float like any f32 GEMM.

namespace moelab::kern {

// c[m x n] = a[m x k] * b[k x n]; adds into c when accumulate is set.
void matmul_nn(const float* a, const float* b, float* c, int m, int k, int n,
               bool accumulate = false);

// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt(const float* a, const float* b, float* c, int m, int k, int n,
               bool accumulate = false);

// c[m x n] = a[k x m]^T * b[k x n]
void matmul_tn(const float* a, const float* b, float* c, int m, int k, int n,
               bool accumulate = false);

// Row-wise softmax(x / temperature) with max-subtraction. temperature > 0.
void softmax_rows(const float* x, float* y, int rows, int cols,
                  float temperature = 1.0f);

namespace ref {

void matmul_nn(const float* a, const float* b, float* c, int m, int k, int n,
               bool accumulate = false);
void matmul_nt(const float* a, const float* b, float* c, int m, int k, int n,
               bool accumulate = false);
void matmul_tn(const float* a, const float* b, float* c, int m, int k, int n,
               bool accumulate = false);
void softmax_rows(const float* x, float* y, int rows, int cols,
                  float temperature = 1.0f);

}  // namespace ref

}  // namespace moelab::kern
