#include "treenmt/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace treenmt::ops {

namespace {

template <class T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Map = Eigen::Map<EMat<T>>;
template <class T>
using CMap = Eigen::Map<const EMat<T>>;

template <class T>
CMap<T> as_matrix(const Tensor<T>& t, int64_t rows, int64_t cols) {
  return CMap<T>(t.data(), rows, cols);
}

template <class T>
Map<T> as_matrix_mut(std::span<T> buf, int64_t rows, int64_t cols) {
  return Map<T>(buf.data(), rows, cols);
}

template <class T>
bool any_needs_grad(std::initializer_list<const Tensor<T>*> inputs) {
  for (const Tensor<T>* t : inputs) {
    if (t->needs_grad()) return true;
  }
  return false;
}

template <class T>
void finalize(Tape<T>* tape, Tensor<T>& out, std::initializer_list<const Tensor<T>*> inputs,
              const char* op_name) {
  if (tape && any_needs_grad<T>(inputs)) out.set_needs_grad(true);
  if (debug_checks()) {
    for (T v : out.values()) {
      if (!std::isfinite(v)) {
        throw NumericError(std::string("non-finite value in output of ") + op_name);
      }
    }
  }
}

// Leading dims of `a` collapsed so the last dim is the column count.
template <class T>
int64_t lead_rows(const Tensor<T>& a) {
  return a.numel() / a.shape().back();
}

}  // namespace

template <class T>
Tensor<T> matmul(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  if (a.ndim() < 1 || b.ndim() != 2) {
    throw ShapeError("matmul: need a [..., k] and b [k, n], got " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  const int64_t k = a.shape().back();
  if (k != b.dim(0)) {
    throw ShapeError("matmul: inner extents disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const int64_t m = lead_rows(a);
  const int64_t n = b.dim(1);

  Shape out_shape = a.shape();
  out_shape.back() = n;
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  as_matrix_mut<T>(out.values(), m, n).noalias() =
      as_matrix<T>(a, m, k) * as_matrix<T>(b, k, n);
  finalize(tape, out, {&a, &b}, "matmul");

  if (out.needs_grad()) {
    tape->record([a, b, out, m, k, n]() mutable {
      CMap<T> dout(out.grad().data(), m, n);
      if (a.needs_grad()) {
        as_matrix_mut<T>(a.grad(), m, k).noalias() += dout * as_matrix<T>(b, k, n).transpose();
      }
      if (b.needs_grad()) {
        as_matrix_mut<T>(b.grad(), k, n).noalias() += as_matrix<T>(a, m, k).transpose() * dout;
      }
    });
  }
  return out;
}

namespace {

template <class T>
void check_bmm_shapes(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0)) {
    throw ShapeError("bmm: need [B, m, k] x [B, ., .], got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const int64_t k = a.dim(2);
  const int64_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (k != bk) {
    throw ShapeError("bmm: inner extents disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
}

}  // namespace

template <class T>
Tensor<T> bmm(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  check_bmm_shapes(a, b, false);
  const int64_t B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  Tensor<T> out = Tensor<T>::zeros({B, m, n});
  for (int64_t i = 0; i < B; ++i) {
    Map<T>(out.data() + i * m * n, m, n).noalias() =
        CMap<T>(a.data() + i * m * k, m, k) * CMap<T>(b.data() + i * k * n, k, n);
  }
  finalize(tape, out, {&a, &b}, "bmm");

  if (out.needs_grad()) {
    tape->record([a, b, out, B, m, k, n]() mutable {
      for (int64_t i = 0; i < B; ++i) {
        CMap<T> dout(out.grad().data() + i * m * n, m, n);
        if (a.needs_grad()) {
          Map<T>(a.grad().data() + i * m * k, m, k).noalias() +=
              dout * CMap<T>(b.data() + i * k * n, k, n).transpose();
        }
        if (b.needs_grad()) {
          Map<T>(b.grad().data() + i * k * n, k, n).noalias() +=
              CMap<T>(a.data() + i * m * k, m, k).transpose() * dout;
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> bmm_nt(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  check_bmm_shapes(a, b, true);
  const int64_t B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({B, m, n});
  for (int64_t i = 0; i < B; ++i) {
    Map<T>(out.data() + i * m * n, m, n).noalias() =
        CMap<T>(a.data() + i * m * k, m, k) * CMap<T>(b.data() + i * n * k, n, k).transpose();
  }
  finalize(tape, out, {&a, &b}, "bmm_nt");

  if (out.needs_grad()) {
    tape->record([a, b, out, B, m, k, n]() mutable {
      for (int64_t i = 0; i < B; ++i) {
        CMap<T> dout(out.grad().data() + i * m * n, m, n);
        if (a.needs_grad()) {
          Map<T>(a.grad().data() + i * m * k, m, k).noalias() +=
              dout * CMap<T>(b.data() + i * n * k, n, k);
        }
        if (b.needs_grad()) {
          Map<T>(b.grad().data() + i * n * k, n, k).noalias() +=
              dout.transpose() * CMap<T>(a.data() + i * m * k, m, k);
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> add(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes disagree: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  finalize(tape, out, {&a, &b}, "add");

  if (out.needs_grad()) {
    tape->record([a, b, out, n]() mutable {
      auto dout = out.grad();
      if (a.needs_grad()) {
        auto da = a.grad();
        for (int64_t i = 0; i < n; ++i) da[i] += dout[i];
      }
      if (b.needs_grad()) {
        auto db = b.grad();
        for (int64_t i = 0; i < n; ++i) db[i] += dout[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> add_bias(Tape<T>* tape, Tensor<T> x, Tensor<T> bias) {
  if (bias.ndim() != 1 || bias.dim(0) != x.shape().back()) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                     shape_str(x.shape()));
  }
  const int64_t rows = lead_rows(x), n = x.shape().back();
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* xs = x.data() + r * n;
    T* os = out.data() + r * n;
    for (int64_t j = 0; j < n; ++j) os[j] = xs[j] + bias.data()[j];
  }
  finalize(tape, out, {&x, &bias}, "add_bias");

  if (out.needs_grad()) {
    tape->record([x, bias, out, rows, n]() mutable {
      auto dout = out.grad();
      if (x.needs_grad()) {
        auto dx = x.grad();
        for (int64_t i = 0; i < rows * n; ++i) dx[i] += dout[i];
      }
      if (bias.needs_grad()) {
        auto db = bias.grad();
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t j = 0; j < n; ++j) db[j] += dout[r * n + j];
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> add_const_broadcast(Tape<T>* tape, Tensor<T> x, Tensor<T> c) {
  const int64_t inner = c.numel();
  if (x.numel() % inner != 0 || x.shape().back() != c.shape().back()) {
    throw ShapeError("add_const_broadcast: " + shape_str(c.shape()) + " does not tile " +
                     shape_str(x.shape()));
  }
  const int64_t reps = x.numel() / inner;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (int64_t r = 0; r < reps; ++r) {
    const T* xs = x.data() + r * inner;
    T* os = out.data() + r * inner;
    for (int64_t j = 0; j < inner; ++j) os[j] = xs[j] + c.data()[j];
  }
  finalize(tape, out, {&x}, "add_const_broadcast");

  if (out.needs_grad()) {
    tape->record([x, out]() mutable {
      if (!x.needs_grad()) return;
      auto dout = out.grad();
      auto dx = x.grad();
      for (int64_t i = 0; i < x.numel(); ++i) dx[i] += dout[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> add_attention_mask(Tape<T>* tape, Tensor<T> scores, Tensor<T> mask,
                             int64_t num_heads) {
  if (scores.ndim() != 3 || mask.ndim() != 3 || scores.dim(0) != mask.dim(0) * num_heads ||
      scores.dim(1) != mask.dim(1) || scores.dim(2) != mask.dim(2)) {
    throw ShapeError("add_attention_mask: scores " + shape_str(scores.shape()) +
                     " vs mask " + shape_str(mask.shape()));
  }
  const int64_t plane = scores.dim(1) * scores.dim(2);
  Tensor<T> out = Tensor<T>::zeros(scores.shape());
  for (int64_t b = 0; b < scores.dim(0); ++b) {
    const T* ms = mask.data() + (b / num_heads) * plane;
    const T* ss = scores.data() + b * plane;
    T* os = out.data() + b * plane;
    for (int64_t j = 0; j < plane; ++j) os[j] = ss[j] + ms[j];
  }
  // Masked entries are huge negatives by design; skip the finite check and
  // propagate needs_grad manually.
  if (tape && scores.needs_grad()) out.set_needs_grad(true);

  if (out.needs_grad()) {
    tape->record([scores, out]() mutable {
      if (!scores.needs_grad()) return;
      auto dout = out.grad();
      auto ds = scores.grad();
      for (int64_t i = 0; i < scores.numel(); ++i) ds[i] += dout[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> mul(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shapes disagree: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  finalize(tape, out, {&a, &b}, "mul");

  if (out.needs_grad()) {
    tape->record([a, b, out, n]() mutable {
      auto dout = out.grad();
      if (a.needs_grad()) {
        auto da = a.grad();
        for (int64_t i = 0; i < n; ++i) da[i] += dout[i] * b.data()[i];
      }
      if (b.needs_grad()) {
        auto db = b.grad();
        for (int64_t i = 0; i < n; ++i) db[i] += dout[i] * a.data()[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> mul_const(Tape<T>* tape, Tensor<T> x, Tensor<T> mask) {
  if (x.shape() != mask.shape()) {
    throw ShapeError("mul_const: shapes disagree: " + shape_str(x.shape()) + " vs " +
                     shape_str(mask.shape()));
  }
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * mask.data()[i];
  finalize(tape, out, {&x}, "mul_const");

  if (out.needs_grad()) {
    tape->record([x, mask, out, n]() mutable {
      if (!x.needs_grad()) return;
      auto dout = out.grad();
      auto dx = x.grad();
      for (int64_t i = 0; i < n; ++i) dx[i] += dout[i] * mask.data()[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> scale(Tape<T>* tape, Tensor<T> x, T factor) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * factor;
  finalize(tape, out, {&x}, "scale");

  if (out.needs_grad()) {
    tape->record([x, out, factor, n]() mutable {
      if (!x.needs_grad()) return;
      auto dout = out.grad();
      auto dx = x.grad();
      for (int64_t i = 0; i < n; ++i) dx[i] += dout[i] * factor;
    });
  }
  return out;
}

template <class T>
Tensor<T> relu(Tape<T>* tape, Tensor<T> x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  finalize(tape, out, {&x}, "relu");

  if (out.needs_grad()) {
    tape->record([x, out, n]() mutable {
      if (!x.needs_grad()) return;
      auto dout = out.grad();
      auto dx = x.grad();
      for (int64_t i = 0; i < n; ++i) {
        if (x.data()[i] > T(0)) dx[i] += dout[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> softmax_rows(Tape<T>* tape, Tensor<T> x) {
  if (x.ndim() < 1 || x.shape().back() < 1) {
    throw ShapeError("softmax_rows: need a trailing dimension");
  }
  const int64_t rows = lead_rows(x), n = x.shape().back();
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* xs = x.data() + r * n;
    T* os = out.data() + r * n;
    T mx = xs[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, xs[j]);
    T sum = T(0);
    for (int64_t j = 0; j < n; ++j) {
      os[j] = std::exp(xs[j] - mx);
      sum += os[j];
    }
    const T inv = T(1) / sum;
    for (int64_t j = 0; j < n; ++j) os[j] *= inv;
  }
  finalize(tape, out, {&x}, "softmax_rows");

  if (out.needs_grad()) {
    tape->record([x, out, rows, n]() mutable {
      if (!x.needs_grad()) return;
      auto dout = out.grad();
      auto dx = x.grad();
      for (int64_t r = 0; r < rows; ++r) {
        const T* ys = out.data() + r * n;
        const T* dys = dout.data() + r * n;
        T dot = T(0);
        for (int64_t j = 0; j < n; ++j) dot += dys[j] * ys[j];
        T* dxs = dx.data() + r * n;
        for (int64_t j = 0; j < n; ++j) dxs[j] += ys[j] * (dys[j] - dot);
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> layer_norm(Tape<T>* tape, Tensor<T> x, Tensor<T> gain,
                     Tensor<T> bias, T eps) {
  const int64_t n = x.shape().back();
  if (gain.numel() != n || bias.numel() != n) {
    throw ShapeError("layer_norm: gain/bias must match last extent " + std::to_string(n));
  }
  const int64_t rows = lead_rows(x);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  // inv-std per row, reused by backward
  std::vector<T> inv_std(static_cast<size_t>(rows));
  std::vector<T> mean(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const T* xs = x.data() + r * n;
    T mu = T(0);
    for (int64_t j = 0; j < n; ++j) mu += xs[j];
    mu /= static_cast<T>(n);
    T var = T(0);
    for (int64_t j = 0; j < n; ++j) {
      const T d = xs[j] - mu;
      var += d * d;
    }
    var /= static_cast<T>(n);
    const T inv = T(1) / std::sqrt(var + eps);
    mean[static_cast<size_t>(r)] = mu;
    inv_std[static_cast<size_t>(r)] = inv;
    T* os = out.data() + r * n;
    for (int64_t j = 0; j < n; ++j) {
      os[j] = gain.data()[j] * ((xs[j] - mu) * inv) + bias.data()[j];
    }
  }
  finalize(tape, out, {&x, &gain, &bias}, "layer_norm");

  if (out.needs_grad()) {
    tape->record([x, gain, bias, out, rows, n, mean = std::move(mean),
                  inv_std = std::move(inv_std)]() mutable {
      auto dout = out.grad();
      for (int64_t r = 0; r < rows; ++r) {
        const T* xs = x.data() + r * n;
        const T* dys = dout.data() + r * n;
        const T mu = mean[static_cast<size_t>(r)];
        const T inv = inv_std[static_cast<size_t>(r)];
        if (gain.needs_grad()) {
          auto dg = gain.grad();
          for (int64_t j = 0; j < n; ++j) dg[j] += dys[j] * ((xs[j] - mu) * inv);
        }
        if (bias.needs_grad()) {
          auto db = bias.grad();
          for (int64_t j = 0; j < n; ++j) db[j] += dys[j];
        }
        if (x.needs_grad()) {
          // dx = inv * (g*dy - mean(g*dy) - xhat * mean(g*dy*xhat))
          T sum_gdy = T(0), sum_gdy_xhat = T(0);
          for (int64_t j = 0; j < n; ++j) {
            const T gdy = gain.data()[j] * dys[j];
            const T xhat = (xs[j] - mu) * inv;
            sum_gdy += gdy;
            sum_gdy_xhat += gdy * xhat;
          }
          const T m1 = sum_gdy / static_cast<T>(n);
          const T m2 = sum_gdy_xhat / static_cast<T>(n);
          auto dx = x.grad();
          T* dxs = dx.data() + r * n;
          for (int64_t j = 0; j < n; ++j) {
            const T gdy = gain.data()[j] * dys[j];
            const T xhat = (xs[j] - mu) * inv;
            dxs[j] += inv * (gdy - m1 - xhat * m2);
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> dropout(Tape<T>* tape, Tensor<T> x, double rate, RngStream& rng,
                  bool training) {
  if (!training || rate == 0.0) return x;
  if (rate < 0.0 || rate >= 1.0) throw ShapeError("dropout: rate must be in [0, 1)");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> mask = Tensor<T>::zeros(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    mask.data()[i] = rng.uniform() < rate ? T(0) : keep_scale;
  }
  return mul_const(tape, x, mask);
}

template <class T>
Tensor<T> concat_rows(Tape<T>* tape, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  Shape tail = parts[0].shape();
  int64_t total_rows = 0;
  for (const auto& p : parts) {
    Shape pt = p.shape();
    if (Shape(pt.begin() + 1, pt.end()) != Shape(tail.begin() + 1, tail.end())) {
      throw ShapeError("concat_rows: trailing shapes disagree");
    }
    total_rows += pt[0];
  }
  Shape out_shape = tail;
  out_shape[0] = total_rows;
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  const int64_t stride = out.numel() / total_rows;
  int64_t offset = 0;
  bool needs = false;
  for (const auto& p : parts) {
    std::memcpy(out.data() + offset, p.data(), sizeof(T) * static_cast<size_t>(p.numel()));
    offset += p.numel();
    needs = needs || p.needs_grad();
  }
  if (tape && needs) out.set_needs_grad(true);
  if (debug_checks()) finalize(tape, out, {}, "concat_rows");

  if (out.needs_grad()) {
    tape->record([parts = std::vector<Tensor<T>>(parts), out, stride]() mutable {
      auto dout = out.grad();
      int64_t offset = 0;
      for (auto& p : parts) {
        if (p.needs_grad()) {
          auto dp = p.grad();
          for (int64_t i = 0; i < p.numel(); ++i) dp[i] += dout[offset + i];
        }
        offset += p.numel();
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> gather_rows(Tape<T>* tape, Tensor<T> x, const std::vector<int64_t>& indices) {
  if (x.ndim() < 1) throw ShapeError("gather_rows: need at least 1 dim");
  const int64_t rows = x.dim(0);
  const int64_t stride = x.numel() / rows;
  for (int64_t idx : indices) {
    if (idx < 0 || idx >= rows) throw ShapeError("gather_rows: index out of range");
  }
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<int64_t>(indices.size());
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  for (size_t i = 0; i < indices.size(); ++i) {
    std::memcpy(out.data() + static_cast<int64_t>(i) * stride, x.data() + indices[i] * stride,
                sizeof(T) * static_cast<size_t>(stride));
  }
  finalize(tape, out, {&x}, "gather_rows");

  if (out.needs_grad()) {
    tape->record([x, out, indices, stride]() mutable {
      if (!x.needs_grad()) return;
      auto dout = out.grad();
      auto dx = x.grad();
      for (size_t i = 0; i < indices.size(); ++i) {
        T* dst = dx.data() + indices[i] * stride;
        const T* src = dout.data() + static_cast<int64_t>(i) * stride;
        for (int64_t j = 0; j < stride; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> split_heads(Tape<T>* tape, Tensor<T> x, int64_t num_heads) {
  if (x.ndim() != 3 || x.dim(2) % num_heads != 0) {
    throw ShapeError("split_heads: need [N, L, d] with d divisible by heads, got " +
                     shape_str(x.shape()));
  }
  const int64_t N = x.dim(0), L = x.dim(1), d = x.dim(2), dh = d / num_heads;
  Tensor<T> out = Tensor<T>::zeros({N * num_heads, L, dh});
  for (int64_t nn = 0; nn < N; ++nn) {
    for (int64_t h = 0; h < num_heads; ++h) {
      for (int64_t l = 0; l < L; ++l) {
        const T* src = x.data() + (nn * L + l) * d + h * dh;
        T* dst = out.data() + ((nn * num_heads + h) * L + l) * dh;
        std::memcpy(dst, src, sizeof(T) * static_cast<size_t>(dh));
      }
    }
  }
  finalize(tape, out, {&x}, "split_heads");

  if (out.needs_grad()) {
    tape->record([x, out, N, L, d, dh, num_heads]() mutable {
      if (!x.needs_grad()) return;
      auto dout = out.grad();
      auto dx = x.grad();
      for (int64_t nn = 0; nn < N; ++nn) {
        for (int64_t h = 0; h < num_heads; ++h) {
          for (int64_t l = 0; l < L; ++l) {
            T* dst = dx.data() + (nn * L + l) * d + h * dh;
            const T* src = dout.data() + ((nn * num_heads + h) * L + l) * dh;
            for (int64_t j = 0; j < dh; ++j) dst[j] += src[j];
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> merge_heads(Tape<T>* tape, Tensor<T> x, int64_t num_heads) {
  if (x.ndim() != 3 || x.dim(0) % num_heads != 0) {
    throw ShapeError("merge_heads: need [N*H, L, dh], got " + shape_str(x.shape()));
  }
  const int64_t N = x.dim(0) / num_heads, L = x.dim(1), dh = x.dim(2), d = dh * num_heads;
  Tensor<T> out = Tensor<T>::zeros({N, L, d});
  for (int64_t nn = 0; nn < N; ++nn) {
    for (int64_t h = 0; h < num_heads; ++h) {
      for (int64_t l = 0; l < L; ++l) {
        const T* src = x.data() + ((nn * num_heads + h) * L + l) * dh;
        T* dst = out.data() + (nn * L + l) * d + h * dh;
        std::memcpy(dst, src, sizeof(T) * static_cast<size_t>(dh));
      }
    }
  }
  finalize(tape, out, {&x}, "merge_heads");

  if (out.needs_grad()) {
    tape->record([x, out, N, L, d, dh, num_heads]() mutable {
      if (!x.needs_grad()) return;
      auto dout = out.grad();
      auto dx = x.grad();
      for (int64_t nn = 0; nn < N; ++nn) {
        for (int64_t h = 0; h < num_heads; ++h) {
          for (int64_t l = 0; l < L; ++l) {
            T* dst = dx.data() + ((nn * num_heads + h) * L + l) * dh;
            const T* src = dout.data() + (nn * L + l) * d + h * dh;
            for (int64_t j = 0; j < dh; ++j) dst[j] += src[j];
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> embedding_lookup(Tape<T>* tape, Tensor<T> table, const TokenMatrix& ids) {
  if (table.ndim() != 2) throw ShapeError("embedding_lookup: table must be [V, d]");
  const int64_t V = table.dim(0), d = table.dim(1);
  Tensor<T> out = Tensor<T>::zeros({ids.rows, ids.cols, d});
  for (int64_t r = 0; r < ids.rows; ++r) {
    for (int64_t c = 0; c < ids.cols; ++c) {
      const int32_t id = ids.at(r, c);
      if (id < 0 || id >= V) {
        throw ShapeError("embedding_lookup: token id " + std::to_string(id) +
                         " outside vocabulary of size " + std::to_string(V));
      }
      std::memcpy(out.data() + (r * ids.cols + c) * d, table.data() + id * d,
                  sizeof(T) * static_cast<size_t>(d));
    }
  }
  finalize(tape, out, {&table}, "embedding_lookup");

  if (out.needs_grad()) {
    tape->record([table, out, ids, d]() mutable {
      if (!table.needs_grad()) return;
      auto dout = out.grad();
      auto dt = table.grad();
      for (int64_t r = 0; r < ids.rows; ++r) {
        for (int64_t c = 0; c < ids.cols; ++c) {
          T* dst = dt.data() + ids.at(r, c) * d;
          const T* src = dout.data() + (r * ids.cols + c) * d;
          for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
        }
      }
    });
  }
  return out;
}

std::vector<int64_t> non_pad_counts(const TokenMatrix& targets, int32_t pad_id) {
  std::vector<int64_t> counts(static_cast<size_t>(targets.rows), 0);
  for (int64_t r = 0; r < targets.rows; ++r) {
    for (int64_t c = 0; c < targets.cols; ++c) {
      if (targets.at(r, c) != pad_id) ++counts[static_cast<size_t>(r)];
    }
  }
  return counts;
}

template <class T>
Tensor<T> cross_entropy_per_sample(Tape<T>* tape, Tensor<T> logits,
                                   const TokenMatrix& targets, int32_t pad_id) {
  if (logits.ndim() != 3 || logits.dim(0) != targets.rows || logits.dim(1) != targets.cols) {
    throw ShapeError("cross_entropy_per_sample: logits " + shape_str(logits.shape()) +
                     " vs targets [" + std::to_string(targets.rows) + ", " +
                     std::to_string(targets.cols) + "]");
  }
  const int64_t N = targets.rows, L = targets.cols, V = logits.dim(2);
  for (int32_t id : targets.ids) {
    if (id >= V || id < 0) {
      throw ShapeError("cross_entropy_per_sample: target id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(V));
    }
  }
  std::vector<int64_t> counts = non_pad_counts(targets, pad_id);
  Tensor<T> out = Tensor<T>::zeros({N});
  for (int64_t r = 0; r < N; ++r) {
    if (counts[static_cast<size_t>(r)] == 0) continue;
    T nll = T(0);
    for (int64_t t = 0; t < L; ++t) {
      const int32_t tgt = targets.at(r, t);
      if (tgt == pad_id) continue;
      const T* row = logits.data() + (r * L + t) * V;
      T mx = row[0];
      for (int64_t v = 1; v < V; ++v) mx = std::max(mx, row[v]);
      T sum = T(0);
      for (int64_t v = 0; v < V; ++v) sum += std::exp(row[v] - mx);
      nll += std::log(sum) + mx - row[tgt];
    }
    out.data()[r] = nll / static_cast<T>(counts[static_cast<size_t>(r)]);
  }
  finalize(tape, out, {&logits}, "cross_entropy_per_sample");

  if (out.needs_grad()) {
    tape->record([logits, out, targets, pad_id, N, L, V, counts = std::move(counts)]() mutable {
      if (!logits.needs_grad()) return;
      auto dout = out.grad();
      auto dl = logits.grad();
      for (int64_t r = 0; r < N; ++r) {
        const int64_t cnt = counts[static_cast<size_t>(r)];
        if (cnt == 0 || dout[r] == T(0)) continue;
        const T u = dout[r] / static_cast<T>(cnt);
        for (int64_t t = 0; t < L; ++t) {
          const int32_t tgt = targets.at(r, t);
          if (tgt == pad_id) continue;
          const T* row = logits.data() + (r * L + t) * V;
          T* drow = dl.data() + (r * L + t) * V;
          T mx = row[0];
          for (int64_t v = 1; v < V; ++v) mx = std::max(mx, row[v]);
          T sum = T(0);
          for (int64_t v = 0; v < V; ++v) sum += std::exp(row[v] - mx);
          const T inv = T(1) / sum;
          for (int64_t v = 0; v < V; ++v) {
            const T p = std::exp(row[v] - mx) * inv;
            drow[v] += u * (p - (v == tgt ? T(1) : T(0)));
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> rows_weighted_sum(Tape<T>* tape, Tensor<T> x, const std::vector<T>& weights) {
  if (x.ndim() != 1 || x.numel() != static_cast<int64_t>(weights.size())) {
    throw ShapeError("rows_weighted_sum: x " + shape_str(x.shape()) + " vs " +
                     std::to_string(weights.size()) + " weights");
  }
  T acc = T(0);
  for (size_t i = 0; i < weights.size(); ++i) acc += weights[i] * x.data()[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  finalize(tape, out, {&x}, "rows_weighted_sum");

  if (out.needs_grad()) {
    tape->record([x, out, weights]() mutable {
      if (!x.needs_grad()) return;
      const T u = out.grad()[0];
      auto dx = x.grad();
      for (size_t i = 0; i < weights.size(); ++i) dx[i] += u * weights[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> sum_all(Tape<T>* tape, Tensor<T> x) {
  T acc = T(0);
  for (int64_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  finalize(tape, out, {&x}, "sum_all");

  if (out.needs_grad()) {
    tape->record([x, out]() mutable {
      if (!x.needs_grad()) return;
      const T u = out.grad()[0];
      auto dx = x.grad();
      for (int64_t i = 0; i < x.numel(); ++i) dx[i] += u;
    });
  }
  return out;
}

#define TREENMT_INSTANTIATE_OPS(T)                                                          \
  template Tensor<T> matmul(Tape<T>*, Tensor<T>, Tensor<T>);                  \
  template Tensor<T> bmm(Tape<T>*, Tensor<T>, Tensor<T>);                     \
  template Tensor<T> bmm_nt(Tape<T>*, Tensor<T>, Tensor<T>);                  \
  template Tensor<T> add(Tape<T>*, Tensor<T>, Tensor<T>);                     \
  template Tensor<T> add_bias(Tape<T>*, Tensor<T>, Tensor<T>);                \
  template Tensor<T> add_const_broadcast(Tape<T>*, Tensor<T>, Tensor<T>);     \
  template Tensor<T> add_attention_mask(Tape<T>*, Tensor<T>, Tensor<T>,       \
                                        int64_t);                                           \
  template Tensor<T> mul(Tape<T>*, Tensor<T>, Tensor<T>);                     \
  template Tensor<T> mul_const(Tape<T>*, Tensor<T>, Tensor<T>);               \
  template Tensor<T> scale(Tape<T>*, Tensor<T>, T);                                  \
  template Tensor<T> relu(Tape<T>*, Tensor<T>);                                      \
  template Tensor<T> softmax_rows(Tape<T>*, Tensor<T>);                              \
  template Tensor<T> layer_norm(Tape<T>*, Tensor<T>, Tensor<T>,               \
                                Tensor<T>, T);                                       \
  template Tensor<T> dropout(Tape<T>*, Tensor<T>, double, RngStream&, bool);         \
  template Tensor<T> concat_rows(Tape<T>*, const std::vector<Tensor<T>>&);                  \
  template Tensor<T> gather_rows(Tape<T>*, Tensor<T>, const std::vector<int64_t>&);  \
  template Tensor<T> split_heads(Tape<T>*, Tensor<T>, int64_t);                      \
  template Tensor<T> merge_heads(Tape<T>*, Tensor<T>, int64_t);                      \
  template Tensor<T> embedding_lookup(Tape<T>*, Tensor<T>, const TokenMatrix&);      \
  template Tensor<T> cross_entropy_per_sample(Tape<T>*, Tensor<T>,                   \
                                              const TokenMatrix&, int32_t);                 \
  template Tensor<T> rows_weighted_sum(Tape<T>*, Tensor<T>, const std::vector<T>&);  \
  template Tensor<T> sum_all(Tape<T>*, Tensor<T>);

TREENMT_INSTANTIATE_OPS(float)
TREENMT_INSTANTIATE_OPS(double)

#undef TREENMT_INSTANTIATE_OPS

}  // namespace treenmt::ops
