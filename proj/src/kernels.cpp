// SPDX-License-Identifier: Apache-2.0
#include "moelab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace moelab::kern {

void matmul_nn(const float* a, const float* b, float* c, int m, int k, int n,
               bool accumulate) {
#pragma omp parallel for schedule(static) if (m > 4)
  for (int i = 0; i < m; ++i) {
    float* ci = c + static_cast<long>(i) * n;
    if (!accumulate) std::memset(ci, 0, sizeof(float) * n);
    const float* ai = a + static_cast<long>(i) * k;
    for (int p = 0; p < k; ++p) {
      const float aip = ai[p];
      const float* bp = b + static_cast<long>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_nt(const float* a, const float* b, float* c, int m, int k, int n,
               bool accumulate) {
#pragma omp parallel for schedule(static) if (m > 4)
  for (int i = 0; i < m; ++i) {
    const float* ai = a + static_cast<long>(i) * k;
    float* ci = c + static_cast<long>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* bj = b + static_cast<long>(j) * k;
      float dot = 0.0f;
      for (int p = 0; p < k; ++p) dot += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + dot : dot;
    }
  }
}

void matmul_tn(const float* a, const float* b, float* c, int m, int k, int n,
               bool accumulate) {
#pragma omp parallel for schedule(static) if (m > 4)
  for (int i = 0; i < m; ++i) {
    float* ci = c + static_cast<long>(i) * n;
    if (!accumulate) std::memset(ci, 0, sizeof(float) * n);
    for (int p = 0; p < k; ++p) {
      const float api = a[static_cast<long>(p) * m + i];
      const float* bp = b + static_cast<long>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void softmax_rows(const float* x, float* y, int rows, int cols,
                  float temperature) {
  const float inv_t = 1.0f / temperature;
#pragma omp parallel for schedule(static) if (rows > 8)
  for (int i = 0; i < rows; ++i) {
    const float* xi = x + static_cast<long>(i) * cols;
    float* yi = y + static_cast<long>(i) * cols;
    float mx = xi[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      const float e = std::exp((xi[j] - mx) * inv_t);
      yi[j] = e;
      sum += e;
    }
    const float inv_sum = static_cast<float>(1.0 / sum);
    for (int j = 0; j < cols; ++j) yi[j] *= inv_sum;
  }
}

}  // namespace moelab::kern
