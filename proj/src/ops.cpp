// SPDX-License-Identifier: Apache-2.0
#include "moelab/ops.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "moelab/kernels.hpp"

namespace moelab {

namespace {

bool want_grad(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  require(b.shape().size() == 2, "matmul: rhs must be 2-D");
  const int m = a.rows(), k = a.cols();
  const int kb = b.shape()[0], n = b.shape()[1];
  if (k != kb) throw std::invalid_argument("matmul: inner dimensions disagree");

  std::vector<int> out_shape(a.shape().begin(), a.shape().end());
  out_shape.back() = n;
  Tensor c = Tensor::zeros(std::move(out_shape));
  kern::matmul_nn(a.values().data(), b.values().data(), c.values().data(), m, k,
                  n);

  if (want_grad(tape, {&a, &b})) {
    c.set_requires_grad(true);
    tape->record([a, b, c, m, k, n]() mutable {
      if (!c.has_grad()) return;
      const float* dc = c.grad().data();
      if (a.requires_grad())
        kern::matmul_nt(dc, b.values().data(), a.grad().data(), m, n, k, true);
      if (b.requires_grad())
        kern::matmul_tn(a.values().data(), dc, b.grad().data(), k, m, n, true);
    });
  }
  return c;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "add: shape mismatch");
  Tensor c = Tensor::zeros(a.shape());
  const auto av = a.values(), bv = b.values();
  auto cv = c.values();
  for (size_t i = 0; i < cv.size(); ++i) cv[i] = av[i] + bv[i];

  if (want_grad(tape, {&a, &b})) {
    c.set_requires_grad(true);
    tape->record([a, b, c]() mutable {
      if (!c.has_grad()) return;
      const auto dc = c.grad();
      if (a.requires_grad()) {
        auto da = a.grad();
        for (size_t i = 0; i < dc.size(); ++i) da[i] += dc[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad();
        for (size_t i = 0; i < dc.size(); ++i) db[i] += dc[i];
      }
    });
  }
  return c;
}

Tensor scale(Tape* tape, const Tensor& x, float s) {
  Tensor y = Tensor::zeros(x.shape());
  const auto xv = x.values();
  auto yv = y.values();
  for (size_t i = 0; i < yv.size(); ++i) yv[i] = s * xv[i];

  if (want_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record([x, y, s]() mutable {
      if (!y.has_grad()) return;
      const auto dy = y.grad();
      auto dx = x.grad();
      for (size_t i = 0; i < dy.size(); ++i) dx[i] += s * dy[i];
    });
  }
  return y;
}

Tensor gelu(Tape* tape, const Tensor& x) {
  constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
  constexpr float kA = 0.044715f;
  Tensor y = Tensor::zeros(x.shape());
  const auto xv = x.values();
  auto yv = y.values();
  for (size_t i = 0; i < yv.size(); ++i) {
    const float v = xv[i];
    yv[i] = 0.5f * v * (1.0f + std::tanh(kC * (v + kA * v * v * v)));
  }

  if (want_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record([x, y]() mutable {
      if (!y.has_grad()) return;
      const auto dy = y.grad();
      const auto xv2 = x.values();
      auto dx = x.grad();
      for (size_t i = 0; i < dy.size(); ++i) {
        const float v = xv2[i];
        const float u = kC * (v + kA * v * v * v);
        const float t = std::tanh(u);
        const float du = kC * (1.0f + 3.0f * kA * v * v);
        const float d = 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du;
        dx[i] += d * dy[i];
      }
    });
  }
  return y;
}

Tensor layernorm(Tape* tape, const Tensor& x, const Tensor& gain,
                 const Tensor& bias) {
  const int rows = x.rows(), cols = x.cols();
  require(gain.size() == cols && bias.size() == cols,
          "layernorm: gain/bias must match the feature dimension");
  constexpr float kEps = 1e-5f;

  Tensor y = Tensor::zeros(x.shape());
  auto xhat = std::make_shared<std::vector<float>>(x.size());
  auto inv_std = std::make_shared<std::vector<float>>(rows);
  const auto xv = x.values();
  const auto gv = gain.values(), bv = bias.values();
  auto yv = y.values();
  for (int r = 0; r < rows; ++r) {
    const float* xr = xv.data() + static_cast<long>(r) * cols;
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += xr[j];
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= cols;
    const float istd = static_cast<float>(1.0 / std::sqrt(var + kEps));
    (*inv_std)[r] = istd;
    float* hr = xhat->data() + static_cast<long>(r) * cols;
    float* yr = yv.data() + static_cast<long>(r) * cols;
    for (int j = 0; j < cols; ++j) {
      hr[j] = (xr[j] - static_cast<float>(mean)) * istd;
      yr[j] = gv[j] * hr[j] + bv[j];
    }
  }

  if (want_grad(tape, {&x, &gain, &bias})) {
    y.set_requires_grad(true);
    tape->record([x, gain, bias, y, xhat, inv_std, rows, cols]() mutable {
      if (!y.has_grad()) return;
      const auto dy = y.grad();
      const auto gv2 = gain.values();
      for (int r = 0; r < rows; ++r) {
        const float* dyr = dy.data() + static_cast<long>(r) * cols;
        const float* hr = xhat->data() + static_cast<long>(r) * cols;
        if (gain.requires_grad()) {
          auto dg = gain.grad();
          for (int j = 0; j < cols; ++j) dg[j] += dyr[j] * hr[j];
        }
        if (bias.requires_grad()) {
          auto db = bias.grad();
          for (int j = 0; j < cols; ++j) db[j] += dyr[j];
        }
        if (x.requires_grad()) {
          double sum_dh = 0.0, sum_dh_h = 0.0;
          for (int j = 0; j < cols; ++j) {
            const float dh = dyr[j] * gv2[j];
            sum_dh += dh;
            sum_dh_h += dh * hr[j];
          }
          const float m1 = static_cast<float>(sum_dh / cols);
          const float m2 = static_cast<float>(sum_dh_h / cols);
          auto dx = x.grad();
          float* dxr = dx.data() + static_cast<long>(r) * cols;
          for (int j = 0; j < cols; ++j) {
            const float dh = dyr[j] * gv2[j];
            dxr[j] += (*inv_std)[r] * (dh - m1 - hr[j] * m2);
          }
        }
      }
    });
  }
  return y;
}

Tensor softmax(Tape* tape, const Tensor& logits, float temperature) {
  if (!(temperature > 0.0f))
    throw std::invalid_argument("softmax: temperature must be positive");
  if (!logits.all_finite())
    throw std::runtime_error("softmax: non-finite logits");
  const int rows = logits.rows(), cols = logits.cols();

  Tensor y = Tensor::zeros(logits.shape());
  kern::softmax_rows(logits.values().data(), y.values().data(), rows, cols,
                     temperature);

  if (want_grad(tape, {&logits})) {
    y.set_requires_grad(true);
    tape->record([logits, y, rows, cols, temperature]() mutable {
      if (!y.has_grad()) return;
      const auto dy = y.grad();
      const auto yv = y.values();
      auto dx = logits.grad();
      const float inv_t = 1.0f / temperature;
      for (int r = 0; r < rows; ++r) {
        const float* dyr = dy.data() + static_cast<long>(r) * cols;
        const float* yr = yv.data() + static_cast<long>(r) * cols;
        float* dxr = dx.data() + static_cast<long>(r) * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += double(dyr[j]) * yr[j];
        for (int j = 0; j < cols; ++j)
          dxr[j] += inv_t * yr[j] * (dyr[j] - static_cast<float>(dot));
      }
    });
  }
  return y;
}

Tensor attention(Tape* tape, const Tensor& q, const Tensor& k, const Tensor& v,
                 int n_heads, int n_seqs, int seq_len) {
  const int d = q.cols();
  require(q.same_shape(k) && q.same_shape(v), "attention: q/k/v shape mismatch");
  require(d % n_heads == 0, "attention: dim not divisible by heads");
  require(q.rows() == n_seqs * seq_len, "attention: rows != n_seqs*seq_len");
  const int dh = d / n_heads;
  const float scl = 1.0f / std::sqrt(static_cast<float>(dh));

  Tensor out = Tensor::zeros(q.shape());
  // probs[s][h] is a lower-triangular seq_len x seq_len attention matrix
  auto probs = std::make_shared<std::vector<float>>(
      static_cast<size_t>(n_seqs) * n_heads * seq_len * seq_len, 0.0f);

  const float* qv = q.values().data();
  const float* kv = k.values().data();
  const float* vv = v.values().data();
  float* ov = out.values().data();

#pragma omp parallel for schedule(static) if (n_seqs > 1)
  for (int s = 0; s < n_seqs; ++s) {
    const long base = static_cast<long>(s) * seq_len;
    for (int h = 0; h < n_heads; ++h) {
      const int off = h * dh;
      float* p_sh = probs->data() +
                    (static_cast<long>(s) * n_heads + h) * seq_len * seq_len;
      for (int i = 0; i < seq_len; ++i) {
        const float* qi = qv + (base + i) * d + off;
        float* pi = p_sh + static_cast<long>(i) * seq_len;
        float mx = -1e30f;
        for (int j = 0; j <= i; ++j) {
          const float* kj = kv + (base + j) * d + off;
          float dot = 0.0f;
          for (int c = 0; c < dh; ++c) dot += qi[c] * kj[c];
          pi[j] = dot * scl;
          mx = std::max(mx, pi[j]);
        }
        double sum = 0.0;
        for (int j = 0; j <= i; ++j) {
          pi[j] = std::exp(pi[j] - mx);
          sum += pi[j];
        }
        const float inv = static_cast<float>(1.0 / sum);
        float* oi = ov + (base + i) * d + off;
        for (int j = 0; j <= i; ++j) {
          pi[j] *= inv;
          const float* vj = vv + (base + j) * d + off;
          for (int c = 0; c < dh; ++c) oi[c] += pi[j] * vj[c];
        }
      }
    }
  }

  if (want_grad(tape, {&q, &k, &v})) {
    out.set_requires_grad(true);
    tape->record([q, k, v, out, probs, n_heads, n_seqs, seq_len, d, dh,
                  scl]() mutable {
      if (!out.has_grad()) return;
      const float* dov = out.grad().data();
      const float* qv2 = q.values().data();
      const float* kv2 = k.values().data();
      const float* vv2 = v.values().data();
      float* dq = q.requires_grad() ? q.grad().data() : nullptr;
      float* dk = k.requires_grad() ? k.grad().data() : nullptr;
      float* dv = v.requires_grad() ? v.grad().data() : nullptr;
      std::vector<float> dp(seq_len), ds(seq_len);
      for (int s = 0; s < n_seqs; ++s) {
        const long base = static_cast<long>(s) * seq_len;
        for (int h = 0; h < n_heads; ++h) {
          const int off = h * dh;
          const float* p_sh =
              probs->data() +
              (static_cast<long>(s) * n_heads + h) * seq_len * seq_len;
          for (int i = 0; i < seq_len; ++i) {
            const float* pi = p_sh + static_cast<long>(i) * seq_len;
            const float* doi = dov + (base + i) * d + off;
            double dot_dp_p = 0.0;
            for (int j = 0; j <= i; ++j) {
              const float* vj = vv2 + (base + j) * d + off;
              float acc = 0.0f;
              for (int c = 0; c < dh; ++c) acc += doi[c] * vj[c];
              dp[j] = acc;
              dot_dp_p += double(acc) * pi[j];
              if (dv) {
                float* dvj = dv + (base + j) * d + off;
                for (int c = 0; c < dh; ++c) dvj[c] += pi[j] * doi[c];
              }
            }
            for (int j = 0; j <= i; ++j)
              ds[j] = pi[j] * (dp[j] - static_cast<float>(dot_dp_p)) * scl;
            if (dq) {
              float* dqi = dq + (base + i) * d + off;
              for (int j = 0; j <= i; ++j) {
                const float* kj = kv2 + (base + j) * d + off;
                for (int c = 0; c < dh; ++c) dqi[c] += ds[j] * kj[c];
              }
            }
            if (dk) {
              const float* qi = qv2 + (base + i) * d + off;
              for (int j = 0; j <= i; ++j) {
                float* dkj = dk + (base + j) * d + off;
                for (int c = 0; c < dh; ++c) dkj[c] += ds[j] * qi[c];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor embedding(Tape* tape, const Tensor& table, std::vector<int> ids) {
  const int n_rows = table.rows(), d = table.cols();
  for (int id : ids)
    if (id < 0 || id >= n_rows)
      throw std::out_of_range("embedding: id out of range");

  Tensor y = Tensor::zeros({static_cast<int>(ids.size()), d});
  const auto tv = table.values();
  auto yv = y.values();
  for (size_t i = 0; i < ids.size(); ++i)
    std::memcpy(yv.data() + i * d, tv.data() + static_cast<long>(ids[i]) * d,
                sizeof(float) * d);

  if (want_grad(tape, {&table})) {
    y.set_requires_grad(true);
    tape->record([table, y, ids = std::move(ids), d]() mutable {
      if (!y.has_grad()) return;
      const auto dy = y.grad();
      auto dt = table.grad();
      for (size_t i = 0; i < ids.size(); ++i) {
        const float* src = dy.data() + i * d;
        float* dst = dt.data() + static_cast<long>(ids[i]) * d;
        for (int c = 0; c < d; ++c) dst[c] += src[c];
      }
    });
  }
  return y;
}

Tensor gather_rows(Tape* tape, const Tensor& x, std::vector<int> rows) {
  const int n_rows = x.rows(), d = x.cols();
  for (int r : rows)
    if (r < 0 || r >= n_rows) throw std::out_of_range("gather_rows: bad row");

  Tensor y = Tensor::zeros({static_cast<int>(rows.size()), d});
  const auto xv = x.values();
  auto yv = y.values();
  for (size_t i = 0; i < rows.size(); ++i)
    std::memcpy(yv.data() + i * d, xv.data() + static_cast<long>(rows[i]) * d,
                sizeof(float) * d);

  if (want_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record([x, y, rows = std::move(rows), d]() mutable {
      if (!y.has_grad()) return;
      const auto dy = y.grad();
      auto dx = x.grad();
      for (size_t i = 0; i < rows.size(); ++i) {
        const float* src = dy.data() + i * d;
        float* dst = dx.data() + static_cast<long>(rows[i]) * d;
        for (int c = 0; c < d; ++c) dst[c] += src[c];
      }
    });
  }
  return y;
}

Tensor scatter_add_rows(Tape* tape, const Tensor& base, const Tensor& src,
                        std::vector<int> rows) {
  const int n_rows = base.rows(), d = base.cols();
  require(src.cols() == d, "scatter_add_rows: column mismatch");
  require(src.rows() == static_cast<int>(rows.size()),
          "scatter_add_rows: row-count mismatch");
  for (int r : rows)
    if (r < 0 || r >= n_rows)
      throw std::out_of_range("scatter_add_rows: bad row");

  Tensor y = Tensor::zeros(base.shape());
  auto yv = y.values();
  std::memcpy(yv.data(), base.values().data(), sizeof(float) * base.size());
  const auto sv = src.values();
  for (size_t i = 0; i < rows.size(); ++i) {
    float* dst = yv.data() + static_cast<long>(rows[i]) * d;
    const float* s = sv.data() + i * d;
    for (int c = 0; c < d; ++c) dst[c] += s[c];
  }

  if (want_grad(tape, {&base, &src})) {
    y.set_requires_grad(true);
    tape->record([base, src, y, rows = std::move(rows), d]() mutable {
      if (!y.has_grad()) return;
      const auto dy = y.grad();
      if (base.requires_grad()) {
        auto db = base.grad();
        for (size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
      }
      if (src.requires_grad()) {
        auto dsv = src.grad();
        for (size_t i = 0; i < rows.size(); ++i) {
          const float* g = dy.data() + static_cast<long>(rows[i]) * d;
          float* dst = dsv.data() + i * d;
          for (int c = 0; c < d; ++c) dst[c] += g[c];
        }
      }
    });
  }
  return y;
}

Tensor row_scale(Tape* tape, const Tensor& x, const Tensor& w) {
  const int rows = x.rows(), d = x.cols();
  require(w.size() == rows, "row_scale: weight length != rows");

  Tensor y = Tensor::zeros(x.shape());
  const auto xv = x.values(), wv = w.values();
  auto yv = y.values();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < d; ++c)
      yv[static_cast<long>(r) * d + c] = wv[r] * xv[static_cast<long>(r) * d + c];

  if (want_grad(tape, {&x, &w})) {
    y.set_requires_grad(true);
    tape->record([x, w, y, rows, d]() mutable {
      if (!y.has_grad()) return;
      const auto dy = y.grad();
      const auto xv2 = x.values(), wv2 = w.values();
      if (x.requires_grad()) {
        auto dx = x.grad();
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < d; ++c)
            dx[static_cast<long>(r) * d + c] +=
                wv2[r] * dy[static_cast<long>(r) * d + c];
      }
      if (w.requires_grad()) {
        auto dw = w.grad();
        for (int r = 0; r < rows; ++r) {
          double acc = 0.0;
          for (int c = 0; c < d; ++c)
            acc += double(dy[static_cast<long>(r) * d + c]) *
                   xv2[static_cast<long>(r) * d + c];
          dw[r] += static_cast<float>(acc);
        }
      }
    });
  }
  return y;
}

Tensor gather_elems(Tape* tape, const Tensor& x,
                    std::vector<std::pair<int, int>> idx) {
  const int rows = x.rows(), cols = x.cols();
  for (auto [r, c] : idx)
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw std::out_of_range("gather_elems: bad index");

  Tensor y = Tensor::zeros({static_cast<int>(idx.size())});
  const auto xv = x.values();
  auto yv = y.values();
  for (size_t i = 0; i < idx.size(); ++i)
    yv[i] = xv[static_cast<long>(idx[i].first) * cols + idx[i].second];

  if (want_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record([x, y, idx = std::move(idx), cols]() mutable {
      if (!y.has_grad()) return;
      const auto dy = y.grad();
      auto dx = x.grad();
      for (size_t i = 0; i < idx.size(); ++i)
        dx[static_cast<long>(idx[i].first) * cols + idx[i].second] += dy[i];
    });
  }
  return y;
}

Tensor sum_all(Tape* tape, const Tensor& x) {
  double acc = 0.0;
  for (float v : x.values()) acc += v;
  Tensor y = Tensor::scalar_value(static_cast<float>(acc));

  if (want_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record([x, y]() mutable {
      if (!y.has_grad()) return;
      const float g = y.grad()[0];
      auto dx = x.grad();
      for (auto& d : dx) d += g;
    });
  }
  return y;
}

Tensor mean_all(Tape* tape, const Tensor& x) {
  double acc = 0.0;
  for (float v : x.values()) acc += v;
  const float inv_n = 1.0f / static_cast<float>(x.size());
  Tensor y = Tensor::scalar_value(static_cast<float>(acc) * inv_n);

  if (want_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record([x, y, inv_n]() mutable {
      if (!y.has_grad()) return;
      const float g = y.grad()[0] * inv_n;
      auto dx = x.grad();
      for (auto& d : dx) d += g;
    });
  }
  return y;
}

Tensor mean_rows(Tape* tape, const Tensor& x) {
  const int rows = x.rows(), cols = x.cols();
  Tensor y = Tensor::zeros({cols});
  const auto xv = x.values();
  auto yv = y.values();
  for (int c = 0; c < cols; ++c) {
    double acc = 0.0;
    for (int r = 0; r < rows; ++r) acc += xv[static_cast<long>(r) * cols + c];
    yv[c] = static_cast<float>(acc / rows);
  }

  if (want_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record([x, y, rows, cols]() mutable {
      if (!y.has_grad()) return;
      const auto dy = y.grad();
      auto dx = x.grad();
      const float inv_r = 1.0f / rows;
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          dx[static_cast<long>(r) * cols + c] += dy[c] * inv_r;
    });
  }
  return y;
}

Tensor dot_const(Tape* tape, const Tensor& x, std::span<const float> w) {
  require(x.size() == static_cast<int64_t>(w.size()),
          "dot_const: length mismatch");
  double acc = 0.0;
  const auto xv = x.values();
  for (size_t i = 0; i < w.size(); ++i) acc += double(xv[i]) * w[i];
  Tensor y = Tensor::scalar_value(static_cast<float>(acc));

  if (want_grad(tape, {&x})) {
    y.set_requires_grad(true);
    std::vector<float> wc(w.begin(), w.end());
    tape->record([x, y, wc = std::move(wc)]() mutable {
      if (!y.has_grad()) return;
      const float g = y.grad()[0];
      auto dx = x.grad();
      for (size_t i = 0; i < wc.size(); ++i) dx[i] += g * wc[i];
    });
  }
  return y;
}

namespace {

// log-sum-exp of one row, double accumulation
double row_lse(const float* x, int n) {
  float mx = x[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double s = 0.0;
  for (int j = 0; j < n; ++j) s += std::exp(double(x[j]) - mx);
  return mx + std::log(s);
}

}  // namespace

Tensor cross_entropy(Tape* tape, const Tensor& logits, int target) {
  const int v = static_cast<int>(logits.size());
  if (target < 0 || target >= v)
    throw std::out_of_range("cross_entropy: target out of range");
  return cross_entropy_rows(tape, logits, {target}, {1});
}

Tensor cross_entropy_rows(Tape* tape, const Tensor& logits,
                          std::vector<int> targets, std::vector<int> mask) {
  const int rows = logits.rows(), v = logits.cols();
  require(static_cast<int>(targets.size()) == rows &&
              static_cast<int>(mask.size()) == rows,
          "cross_entropy_rows: targets/mask length mismatch");
  int count = 0;
  for (int r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    if (targets[r] < 0 || targets[r] >= v)
      throw std::out_of_range("cross_entropy_rows: target out of range");
    ++count;
  }
  require(count > 0, "cross_entropy_rows: empty mask");

  const auto lv = logits.values();
  double total = 0.0;
  auto lse = std::make_shared<std::vector<double>>(rows, 0.0);
  for (int r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    const float* row = lv.data() + static_cast<long>(r) * v;
    (*lse)[r] = row_lse(row, v);
    total += (*lse)[r] - row[targets[r]];
  }
  Tensor y = Tensor::scalar_value(static_cast<float>(total / count));

  if (want_grad(tape, {&logits})) {
    y.set_requires_grad(true);
    tape->record([logits, y, targets = std::move(targets),
                  mask = std::move(mask), lse, rows, v, count]() mutable {
      if (!y.has_grad()) return;
      const float g = y.grad()[0] / count;
      const auto lv2 = logits.values();
      auto dl = logits.grad();
      for (int r = 0; r < rows; ++r) {
        if (!mask[r]) continue;
        const float* row = lv2.data() + static_cast<long>(r) * v;
        float* drow = dl.data() + static_cast<long>(r) * v;
        for (int j = 0; j < v; ++j) {
          const float p =
              static_cast<float>(std::exp(double(row[j]) - (*lse)[r]));
          drow[j] += g * (p - (j == targets[r] ? 1.0f : 0.0f));
        }
      }
    });
  }
  return y;
}

Tensor kl_divergence(Tape* tape, const Tensor& p, const Tensor& q) {
  require(p.same_shape(q), "kl_divergence: shape mismatch");
  const auto pv = p.values(), qv = q.values();
  double sp = 0.0, sq = 0.0;
  for (size_t i = 0; i < pv.size(); ++i) {
    if (pv[i] < -1e-7f || qv[i] < -1e-7f)
      throw std::invalid_argument("kl_divergence: negative probability");
    sp += pv[i];
    sq += qv[i];
  }
  if (std::abs(sp - 1.0) > 1e-5 || std::abs(sq - 1.0) > 1e-5)
    throw std::invalid_argument("kl_divergence: inputs must sum to 1");

  double acc = 0.0;
  for (size_t i = 0; i < pv.size(); ++i) {
    if (pv[i] <= 0.0f) continue;  // 0 * ln(0/q) = 0
    if (qv[i] <= 0.0f)
      throw std::runtime_error("kl_divergence: undefined (q=0 where p>0)");
    acc += double(pv[i]) * (std::log(double(pv[i])) - std::log(double(qv[i])));
  }
  Tensor y = Tensor::scalar_value(static_cast<float>(acc));

  // p is a constant target; gradients flow into q only.
  if (want_grad(tape, {&q})) {
    y.set_requires_grad(true);
    tape->record([p, q, y]() mutable {
      if (!y.has_grad()) return;
      const float g = y.grad()[0];
      const auto pv2 = p.values(), qv2 = q.values();
      auto dq = q.grad();
      for (size_t i = 0; i < pv2.size(); ++i) {
        if (pv2[i] <= 0.0f) continue;
        dq[i] += g * (-pv2[i] / qv2[i]);
      }
    });
  }
  return y;
}

Tensor kl_from_logits_rows(Tape* tape,
                           const std::vector<std::vector<float>>& target_probs,
                           const Tensor& logits, float tau) {
  if (!(tau > 0.0f))
    throw std::invalid_argument("kl_from_logits_rows: tau must be positive");
  const int rows = logits.rows(), n = logits.cols();
  require(static_cast<int>(target_probs.size()) == rows,
          "kl_from_logits_rows: row-count mismatch");

  Tensor y = Tensor::zeros({rows});
  auto q = std::make_shared<std::vector<float>>(logits.size());
  kern::softmax_rows(logits.values().data(), q->data(), rows, n, tau);

  const auto lv = logits.values();
  auto yv = y.values();
  for (int r = 0; r < rows; ++r) {
    require(static_cast<int>(target_probs[r].size()) == n,
            "kl_from_logits_rows: target width mismatch");
    const float* row = lv.data() + static_cast<long>(r) * n;
    // log q_i = l_i/tau - lse(l/tau), evaluated without forming q
    std::vector<double> scaled(n);
    for (int j = 0; j < n; ++j) scaled[j] = double(row[j]) / tau;
    double mx = scaled[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, scaled[j]);
    double se = 0.0;
    for (int j = 0; j < n; ++j) se += std::exp(scaled[j] - mx);
    const double lse = mx + std::log(se);
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      const double pj = target_probs[r][j];
      if (pj <= 0.0) continue;
      acc += pj * (std::log(pj) - (scaled[j] - lse));
    }
    yv[r] = static_cast<float>(acc);
  }

  if (want_grad(tape, {&logits})) {
    y.set_requires_grad(true);
    tape->record([logits, y, q, target_probs, rows, n, tau]() mutable {
      if (!y.has_grad()) return;
      const auto dy = y.grad();
      auto dl = logits.grad();
      const float inv_t = 1.0f / tau;
      for (int r = 0; r < rows; ++r) {
        const float g = dy[r] * inv_t;
        if (g == 0.0f) continue;
        const float* qr = q->data() + static_cast<long>(r) * n;
        float* dr = dl.data() + static_cast<long>(r) * n;
        for (int j = 0; j < n; ++j) dr[j] += g * (qr[j] - target_probs[r][j]);
      }
    });
  }
  return y;
}

}  // namespace moelab
