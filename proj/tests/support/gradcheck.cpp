// SPDX-License-Identifier: Apache-2.0
#include "support/gradcheck.hpp"

#include <algorithm>

namespace moelab::testing {

namespace {

using Builder = std::function<Tensor(Tape*)>;

double worst_of(std::map<std::string, double>& acc, const std::string& name,
                const GradCheck& gc) {
  auto& slot = acc[name];
  slot = std::max(slot, gc.norm_rel);
  return slot;
}

}  // namespace

std::map<std::string, double> run_gradient_suite(int instances, uint64_t seed) {
  std::map<std::string, double> worst;
  Rng rng = Rng::substream(seed, "gradient-suite");

  for (int it = 0; it < instances; ++it) {
    // matmul: sum(A * B) and a weighted variant so dC is non-uniform
    {
      const int m = rng.uniform_int(1, 4), k = rng.uniform_int(1, 4),
                n = rng.uniform_int(1, 4);
      Tensor a = random_tensor(rng, {m, k});
      Tensor b = random_tensor(rng, {k, n});
      std::vector<float> w(static_cast<size_t>(m) * n);
      for (auto& x : w) x = rng.normal();
      worst_of(worst, "matmul", grad_check({a, b}, [&](Tape* t) {
        return dot_const(t, matmul(t, a, b), w);
      }));
    }
    // add / scale
    {
      const int n = rng.uniform_int(1, 6);
      Tensor a = random_tensor(rng, {n});
      Tensor b = random_tensor(rng, {n});
      std::vector<float> w(n);
      for (auto& x : w) x = rng.normal();
      worst_of(worst, "add", grad_check({a, b}, [&](Tape* t) {
        return dot_const(t, add(t, a, b), w);
      }));
      const float s = rng.normal(0.0f, 2.0f);
      worst_of(worst, "scale", grad_check({a}, [&](Tape* t) {
        return dot_const(t, scale(t, a, s), w);
      }));
    }
    // gelu
    {
      const int n = rng.uniform_int(1, 8);
      Tensor x = random_tensor(rng, {n}, 1.5f);
      std::vector<float> w(n);
      for (auto& v : w) v = rng.normal();
      worst_of(worst, "gelu", grad_check({x}, [&](Tape* t) {
        return dot_const(t, gelu(t, x), w);
      }));
    }
    // layernorm
    {
      const int r = rng.uniform_int(1, 3), c = rng.uniform_int(2, 8);
      Tensor x = random_tensor(rng, {r, c});
      Tensor g = random_tensor(rng, {c}, 0.5f);
      Tensor b = random_tensor(rng, {c}, 0.5f);
      std::vector<float> w(static_cast<size_t>(r) * c);
      for (auto& v : w) v = rng.normal();
      worst_of(worst, "layernorm", grad_check({x, g, b}, [&](Tape* t) {
        return dot_const(t, layernorm(t, x, g, b), w);
      }));
    }
    // softmax at a few temperatures
    {
      const int n = rng.uniform_int(2, 8);
      const float tau = std::vector<float>{0.5f, 1.0f, 2.0f}[it % 3];
      Tensor x = random_tensor(rng, {n});
      std::vector<float> w(n);
      for (auto& v : w) v = rng.normal();
      worst_of(worst, "softmax", grad_check({x}, [&](Tape* t) {
        return dot_const(t, softmax(t, x, tau), w);
      }));
    }
    // kl_divergence through a softmax-produced q
    {
      const int n = rng.uniform_int(2, 6);
      Tensor logits = random_tensor(rng, {n});
      std::vector<float> pv = random_probs(rng, n);
      Tensor p = Tensor::from({n}, pv);
      worst_of(worst, "kl_divergence", grad_check({logits}, [&](Tape* t) {
        return kl_divergence(t, p, softmax(t, logits, 1.0f));
      }));
    }
    // kl_from_logits_rows
    {
      const int rows = rng.uniform_int(1, 3), n = rng.uniform_int(2, 6);
      const float tau = std::vector<float>{0.5f, 1.0f, 1.3f}[it % 3];
      Tensor logits = random_tensor(rng, {rows, n});
      std::vector<std::vector<float>> targets;
      for (int r = 0; r < rows; ++r) targets.push_back(random_probs(rng, n));
      worst_of(worst, "kl_from_logits", grad_check({logits}, [&](Tape* t) {
        return mean_all(t, kl_from_logits_rows(t, targets, logits, tau));
      }));
    }
    // cross entropy (single and masked rows)
    {
      const int v = rng.uniform_int(2, 8);
      Tensor logits = random_tensor(rng, {v});
      const int target = rng.uniform_int(0, v - 1);
      worst_of(worst, "cross_entropy", grad_check({logits}, [&](Tape* t) {
        return cross_entropy(t, logits, target);
      }));

      const int rows = rng.uniform_int(2, 4);
      Tensor lr = random_tensor(rng, {rows, v});
      std::vector<int> targets(rows), mask(rows);
      int live = 0;
      for (int r = 0; r < rows; ++r) {
        targets[r] = rng.uniform_int(0, v - 1);
        mask[r] = rng.uniform_int(0, 1);
        live += mask[r];
      }
      if (live == 0) mask[0] = 1;
      worst_of(worst, "cross_entropy_rows", grad_check({lr}, [&](Tape* t) {
        return cross_entropy_rows(t, lr, targets, mask);
      }));
    }
    // attention
    {
      const int heads = rng.uniform_int(1, 2);
      const int dh = rng.uniform_int(1, 3);
      const int d = heads * dh;
      const int ns = rng.uniform_int(1, 2), sl = rng.uniform_int(1, 4);
      Tensor q = random_tensor(rng, {ns * sl, d});
      Tensor k = random_tensor(rng, {ns * sl, d});
      Tensor v = random_tensor(rng, {ns * sl, d});
      std::vector<float> w(static_cast<size_t>(ns) * sl * d);
      for (auto& x : w) x = rng.normal();
      worst_of(worst, "attention", grad_check({q, k, v}, [&](Tape* t) {
        return dot_const(t, attention(t, q, k, v, heads, ns, sl), w);
      }));
    }
    // embedding / gather / scatter / row_scale / gather_elems
    {
      const int rows = rng.uniform_int(2, 5), d = rng.uniform_int(1, 4);
      Tensor table = random_tensor(rng, {rows, d});
      std::vector<int> ids(rng.uniform_int(1, 6));
      for (auto& id : ids) id = rng.uniform_int(0, rows - 1);
      std::vector<float> w(ids.size() * d);
      for (auto& x : w) x = rng.normal();
      worst_of(worst, "embedding", grad_check({table}, [&](Tape* t) {
        return dot_const(t, embedding(t, table, ids), w);
      }));

      Tensor x = random_tensor(rng, {rows, d});
      worst_of(worst, "gather_rows", grad_check({x}, [&](Tape* t) {
        return dot_const(t, gather_rows(t, x, ids), w);
      }));

      Tensor src = random_tensor(rng, {static_cast<int>(ids.size()), d});
      std::vector<float> wb(static_cast<size_t>(rows) * d);
      for (auto& v : wb) v = rng.normal();
      worst_of(worst, "scatter_add_rows", grad_check({x, src}, [&](Tape* t) {
        return dot_const(t, scatter_add_rows(t, x, src, ids), wb);
      }));

      Tensor rw = random_tensor(rng, {rows});
      std::vector<float> wx(static_cast<size_t>(rows) * d);
      for (auto& v : wx) v = rng.normal();
      worst_of(worst, "row_scale", grad_check({x, rw}, [&](Tape* t) {
        return dot_const(t, row_scale(t, x, rw), wx);
      }));

      std::vector<std::pair<int, int>> idx(rng.uniform_int(1, 5));
      for (auto& pr : idx)
        pr = {rng.uniform_int(0, rows - 1), rng.uniform_int(0, d - 1)};
      std::vector<float> wi(idx.size());
      for (auto& v : wi) v = rng.normal();
      worst_of(worst, "gather_elems", grad_check({x}, [&](Tape* t) {
        return dot_const(t, gather_elems(t, x, idx), wi);
      }));
    }
    // reductions
    {
      const int r = rng.uniform_int(1, 4), c = rng.uniform_int(1, 4);
      Tensor x = random_tensor(rng, {r, c});
      worst_of(worst, "sum_all",
               grad_check({x}, [&](Tape* t) { return sum_all(t, x); }));
      worst_of(worst, "mean_all",
               grad_check({x}, [&](Tape* t) { return mean_all(t, x); }));
      std::vector<float> w(c);
      for (auto& v : w) v = rng.normal();
      worst_of(worst, "mean_rows", grad_check({x}, [&](Tape* t) {
        return dot_const(t, mean_rows(t, x), w);
      }));
    }
  }
  return worst;
}

}  // namespace moelab::testing
