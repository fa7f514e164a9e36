// SPDX-License-Identifier: Apache-2.0
#include "moelab/kernels.hpp"

#include <algorithm>
#include <cmath>

// Serial reference kernels: straight loop nests, no pragmas, no layout
// tricks. These define the expected numerics for the parallel kernels.

namespace moelab::kern::ref {

void matmul_nn(const float* a, const float* b, float* c, int m, int k, int n,
               bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      float dot = 0.0f;
      for (int p = 0; p < k; ++p) dot += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + dot : dot;
    }
  }
}

void matmul_nt(const float* a, const float* b, float* c, int m, int k, int n,
               bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      float dot = 0.0f;
      for (int p = 0; p < k; ++p) dot += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + dot : dot;
    }
  }
}

void matmul_tn(const float* a, const float* b, float* c, int m, int k, int n,
               bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      float dot = 0.0f;
      for (int p = 0; p < k; ++p) dot += a[p * m + i] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + dot : dot;
    }
  }
}

void softmax_rows(const float* x, float* y, int rows, int cols,
                  float temperature) {
  for (int i = 0; i < rows; ++i) {
    const float* xi = x + i * cols;
    float* yi = y + i * cols;
    float mx = xi[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      yi[j] = std::exp((xi[j] - mx) / temperature);
      sum += yi[j];
    }
    for (int j = 0; j < cols; ++j) yi[j] = static_cast<float>(yi[j] / sum);
  }
}

}  // namespace moelab::kern::ref
