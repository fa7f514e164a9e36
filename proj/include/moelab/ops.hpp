// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <utility>
#include <vector>

#include "moelab/tensor.hpp"

// Differentiable operations over Tensors. Every op takes an optional Tape*;
// passing nullptr (or inputs that do not require grad) runs pure inference
// with no recording. Statistical reductions accumulate in double.

namespace moelab {

// a [r x k] * b [k x n] -> [r... x n]; backward dA = dC*B^T, dB = A^T*dC.
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);

// Elementwise sum of two equally shaped tensors.
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);

// y = s * x for a compile-time-constant scalar s.
Tensor scale(Tape* tape, const Tensor& x, float s);

// Tanh-approximation GELU.
Tensor gelu(Tape* tape, const Tensor& x);

// Row-wise layer normalization with learned gain/bias, eps 1e-5.
Tensor layernorm(Tape* tape, const Tensor& x, const Tensor& gain,
                 const Tensor& bias);

// Row-wise softmax(x / temperature), stable via max-subtraction.
// temperature <= 0 is a configuration error; non-finite logits a numeric one.
Tensor softmax(Tape* tape, const Tensor& logits, float temperature = 1.0f);

// Block-causal multi-head attention over n_seqs independent sequences of
// seq_len rows each. q,k,v are [n_seqs*seq_len x d]; d divisible by n_heads.
Tensor attention(Tape* tape, const Tensor& q, const Tensor& k,
                 const Tensor& v, int n_heads, int n_seqs, int seq_len);

// out[i] = table[ids[i]]; backward scatter-adds into the table gradient.
Tensor embedding(Tape* tape, const Tensor& table, std::vector<int> ids);

Tensor gather_rows(Tape* tape, const Tensor& x, std::vector<int> rows);

// out = base; out[rows[i]] += src[i]. Duplicate row indices accumulate.
Tensor scatter_add_rows(Tape* tape, const Tensor& base, const Tensor& src,
                        std::vector<int> rows);

// out row i = w[i] * x row i, with w a [len] tensor.
Tensor row_scale(Tape* tape, const Tensor& x, const Tensor& w);

// out[i] = x[idx[i].first, idx[i].second].
Tensor gather_elems(Tape* tape, const Tensor& x,
                    std::vector<std::pair<int, int>> idx);

Tensor sum_all(Tape* tape, const Tensor& x);
Tensor mean_all(Tape* tape, const Tensor& x);

// Column means of a [r x c] tensor -> [c].
Tensor mean_rows(Tape* tape, const Tensor& x);

// Scalar dot product with a constant vector.
Tensor dot_const(Tape* tape, const Tensor& x, std::span<const float> w);

// -ln softmax(logits)[target] for a single [V] logit vector.
Tensor cross_entropy(Tape* tape, const Tensor& logits, int target);

// Mean -ln softmax(row)[target] over rows with mask[r] != 0.
Tensor cross_entropy_rows(Tape* tape, const Tensor& logits,
                          std::vector<int> targets, std::vector<int> mask);

// KL(p || q) over probability vectors; p is a constant target, gradients
// flow only into q. Errors when q_i = 0 where p_i > 0.
Tensor kl_divergence(Tape* tape, const Tensor& p, const Tensor& q);

// Row-wise KL(p_row || softmax(logits_row / tau)) evaluated in log space
// from the logits; returns [rows]. target_probs is constant.
Tensor kl_from_logits_rows(Tape* tape,
                           const std::vector<std::vector<float>>& target_probs,
                           const Tensor& logits, float tau);

}  // namespace moelab
