#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "oncoabs/common/error.hpp"
#include "oncoabs/numcore/tape.hpp"

namespace oncoabs::num {

/// Half-open row range [first, second) of a stacked matrix.
using Segment = std::pair<std::size_t, std::size_t>;

namespace detail {

template <typename T>
[[noreturn]] void shape_mismatch(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                       b.shape_string());
}

template <typename T>
Tensor<T> transposed(const Tensor<T>& a) {
  Tensor<T> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    const T* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      T* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) {
    const T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

// In-place softmax over a strided sequence of n values.
template <typename T>
void softmax_inplace(T* x, std::size_t n, std::size_t stride) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[i * stride]);
  T total{0};
  for (std::size_t i = 0; i < n; ++i) {
    x[i * stride] = std::exp(x[i * stride] - mx);
    total += x[i * stride];
  }
  for (std::size_t i = 0; i < n; ++i) x[i * stride] /= total;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.cols() != B.rows()) detail::shape_mismatch("matmul", A, B);
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor<T> C(m, n);
  detail::gemm_acc(A.data(), B.data(), C.data(), m, k, n);
  return a.tape->record(std::move(C), {a.id, b.id}, [ai = a.id, bi = b.id, m, k, n](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    if (t.requires_grad(ai)) {
      const auto Bt = detail::transposed(t.value(bi));
      detail::gemm_acc(G.data(), Bt.data(), t.grad(ai).data(), m, n, k);
    }
    if (t.requires_grad(bi)) detail::gemm_tn_acc(t.value(ai).data(), G.data(), t.grad(bi).data(), m, k, n);
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  return a.tape->record(detail::transposed(a.value()), {a.id}, [ai = a.id](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    auto& ga = t.grad(ai);
    for (std::size_t i = 0; i < G.rows(); ++i)
      for (std::size_t j = 0; j < G.cols(); ++j) ga(j, i) += G(i, j);
  });
}

// ---------------------------------------------------------------------------
// Elementwise. `b` may be a [1, n] row broadcast over the rows of `a`.

namespace detail {

template <typename T>
bool broadcast_row(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.same_shape(b)) return false;
  if (b.rows() == 1 && b.cols() == a.cols()) return true;
  shape_mismatch(op, a, b);
}

}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  const bool bc = detail::broadcast_row(A, B, "add");
  Tensor<T> C = A;
  const std::size_t n = A.cols();
  for (std::size_t i = 0; i < C.size(); ++i) C[i] += bc ? B[i % n] : B[i];
  return a.tape->record(std::move(C), {a.id, b.id}, [ai = a.id, bi = b.id, bc, n](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    if (t.requires_grad(ai)) {
      auto& ga = t.grad(ai);
      for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i];
    }
    if (t.requires_grad(bi)) {
      auto& gb = t.grad(bi);
      for (std::size_t i = 0; i < G.size(); ++i) gb[bc ? i % n : i] += G[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (!A.same_shape(B)) detail::shape_mismatch("sub", A, B);
  Tensor<T> C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] -= B[i];
  return a.tape->record(std::move(C), {a.id, b.id}, [ai = a.id, bi = b.id](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    if (t.requires_grad(ai)) {
      auto& ga = t.grad(ai);
      for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i];
    }
    if (t.requires_grad(bi)) {
      auto& gb = t.grad(bi);
      for (std::size_t i = 0; i < G.size(); ++i) gb[i] -= G[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  const bool bc = detail::broadcast_row(A, B, "mul");
  const std::size_t n = A.cols();
  Tensor<T> C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= bc ? B[i % n] : B[i];
  return a.tape->record(std::move(C), {a.id, b.id}, [ai = a.id, bi = b.id, bc, n](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const auto& A = t.value(ai);
    const auto& B = t.value(bi);
    if (t.requires_grad(ai)) {
      auto& ga = t.grad(ai);
      for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * (bc ? B[i % n] : B[i]);
    }
    if (t.requires_grad(bi)) {
      auto& gb = t.grad(bi);
      for (std::size_t i = 0; i < G.size(); ++i) gb[bc ? i % n : i] += G[i] * A[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
  Tensor<T> C = a.value();
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= c;
  return a.tape->record(std::move(C), {a.id}, [ai = a.id, c](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    auto& ga = t.grad(ai);
    for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * c;
  });
}

namespace detail {

// Unary op whose derivative is expressed through its output y.
template <typename T, typename F, typename D>
Var<T> unary_from_output(Var<T> a, F f, D dfdy) {
  Tensor<T> Y = a.value();
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = f(Y[i]);
  return a.tape->record(std::move(Y), {a.id}, [ai = a.id, dfdy](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const auto& Y = t.value(self);
    auto& ga = t.grad(ai);
    for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * dfdy(Y[i]);
  });
}

}  // namespace detail

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return detail::unary_from_output(a, [](T x) { return detail::stable_sigmoid(x); },
                                   [](T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  return detail::unary_from_output(a, [](T x) { return std::tanh(x); }, [](T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return detail::unary_from_output(a, [](T x) { return x > T{0} ? x : T{0}; },
                                   [](T y) { return y > T{0} ? T{1} : T{0}; });
}

/// Multiplies by a fixed mask scaled by 1/(1-rate). The mask is drawn by the
/// caller so the op itself stays deterministic.
template <typename T>
Var<T> dropout(Var<T> a, const std::vector<unsigned char>& keep, T rate) {
  if (keep.size() != a.value().size()) throw DimensionError("dropout mask size mismatch");
  const T s = T{1} / (T{1} - rate);
  Tensor<T> Y = a.value();
  std::vector<T> m(Y.size());
  for (std::size_t i = 0; i < Y.size(); ++i) {
    m[i] = keep[i] ? s : T{0};
    Y[i] *= m[i];
  }
  return a.tape->record(std::move(Y), {a.id}, [ai = a.id, m = std::move(m)](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    auto& ga = t.grad(ai);
    for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * m[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and normalizations

template <typename T>
Var<T> sum(Var<T> a) {
  T s{0};
  for (T x : a.value().values()) s += x;
  return a.tape->record(Tensor<T>::scalar(s), {a.id}, [ai = a.id](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    auto& ga = t.grad(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

/// Softmax along `axis` (1: within each row, 0: within each column). The
/// maximum is subtracted first, so the result is shift-invariant.
template <typename T>
Var<T> softmax(Var<T> a, int axis = 1) {
  if (axis != 0 && axis != 1) throw DimensionError("softmax axis must be 0 or 1");
  Tensor<T> Y = a.value();
  const std::size_t r = Y.rows(), c = Y.cols();
  if (axis == 1)
    for (std::size_t i = 0; i < r; ++i) detail::softmax_inplace(Y.data() + i * c, c, 1);
  else
    for (std::size_t j = 0; j < c; ++j) detail::softmax_inplace(Y.data() + j, r, c);
  return a.tape->record(std::move(Y), {a.id}, [ai = a.id, axis](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const auto& Y = t.value(self);
    auto& ga = t.grad(ai);
    const std::size_t r = Y.rows(), c = Y.cols();
    const std::size_t outer = axis == 1 ? r : c, inner = axis == 1 ? c : r;
    const std::size_t stride = axis == 1 ? 1 : c;
    for (std::size_t o = 0; o < outer; ++o) {
      const std::size_t base = axis == 1 ? o * c : o;
      T dot{0};
      for (std::size_t i = 0; i < inner; ++i) dot += G[base + i * stride] * Y[base + i * stride];
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = base + i * stride;
        ga[k] += Y[k] * (G[k] - dot);
      }
    }
  });
}

/// Mean cross-entropy of rows of `logits` against class indices, computed with
/// log-sum-exp on the logits.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::vector<std::size_t> targets) {
  const auto& L = logits.value();
  if (targets.size() != L.rows())
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         L.shape_string());
  const std::size_t r = L.rows(), c = L.cols();
  Tensor<T> P = L;
  T loss{0};
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] >= c) throw DimensionError("cross_entropy: target index out of range");
    const T* row = L.data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T total{0};
    for (std::size_t j = 0; j < c; ++j) total += std::exp(row[j] - mx);
    const T lse = mx + std::log(total);
    loss += lse - row[targets[i]];
    for (std::size_t j = 0; j < c; ++j) P(i, j) = std::exp(row[j] - lse);
  }
  loss /= static_cast<T>(r);
  return logits.tape->record(
      Tensor<T>::scalar(loss), {logits.id},
      [li = logits.id, P = std::move(P), targets = std::move(targets), r, c](Tape<T>& t, std::size_t self) {
        const T g = t.grad(self)[0] / static_cast<T>(r);
        auto& gl = t.grad(li);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            gl(i, j) += g * (P(i, j) - (j == targets[i] ? T{1} : T{0}));
      });
}

/// Row-wise layer normalization with learned [1, n] gain and bias.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  const auto& X = x.value();
  const std::size_t r = X.rows(), c = X.cols();
  if (gain.value().rows() != 1 || gain.value().cols() != c) detail::shape_mismatch("layer_norm", X, gain.value());
  if (bias.value().rows() != 1 || bias.value().cols() != c) detail::shape_mismatch("layer_norm", X, bias.value());
  Tensor<T> Xhat(r, c), Y(r, c);
  std::vector<T> inv_std(r);
  const auto& Gn = gain.value();
  const auto& Bs = bias.value();
  for (std::size_t i = 0; i < r; ++i) {
    T mean{0};
    for (std::size_t j = 0; j < c; ++j) mean += X(i, j);
    mean /= static_cast<T>(c);
    T var{0};
    for (std::size_t j = 0; j < c; ++j) var += (X(i, j) - mean) * (X(i, j) - mean);
    var /= static_cast<T>(c);
    inv_std[i] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      Xhat(i, j) = (X(i, j) - mean) * inv_std[i];
      Y(i, j) = Xhat(i, j) * Gn[j] + Bs[j];
    }
  }
  return x.tape->record(
      std::move(Y), {x.id, gain.id, bias.id},
      [xi = x.id, gi = gain.id, bi = bias.id, Xhat = std::move(Xhat), inv_std = std::move(inv_std), r, c](
          Tape<T>& t, std::size_t self) {
        const auto& G = t.grad(self);
        const auto& Gn = t.value(gi);
        if (t.requires_grad(gi)) {
          auto& gg = t.grad(gi);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gg[j] += G(i, j) * Xhat(i, j);
        }
        if (t.requires_grad(bi)) {
          auto& gb = t.grad(bi);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[j] += G(i, j);
        }
        if (t.requires_grad(xi)) {
          auto& gx = t.grad(xi);
          const T n = static_cast<T>(c);
          for (std::size_t i = 0; i < r; ++i) {
            T s1{0}, s2{0};
            for (std::size_t j = 0; j < c; ++j) {
              const T d = G(i, j) * Gn[j];
              s1 += d;
              s2 += d * Xhat(i, j);
            }
            for (std::size_t j = 0; j < c; ++j) {
              const T d = G(i, j) * Gn[j];
              gx(i, j) += inv_std[i] / n * (n * d - s1 - Xhat(i, j) * s2);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Structural

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  if (axis != 0 && axis != 1) throw DimensionError("concat axis must be 0 or 1");
  const auto& first = parts.front().value();
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    const auto& v = p.value();
    if (axis == 0) {
      if (v.cols() != first.cols()) detail::shape_mismatch("concat", first, v);
      rows += v.rows();
      cols = v.cols();
    } else {
      if (v.rows() != first.rows()) detail::shape_mismatch("concat", first, v);
      cols += v.cols();
      rows = v.rows();
    }
    ids.push_back(p.id);
  }
  Tensor<T> C(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t i = 0; i < v.rows(); ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) {
        if (axis == 0)
          C(off + i, j) = v(i, j);
        else
          C(i, off + j) = v(i, j);
      }
    off += axis == 0 ? v.rows() : v.cols();
  }
  Tape<T>* tape = parts.front().tape;
  return tape->record(std::move(C), ids, [ids, axis](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    std::size_t off = 0;
    for (auto id : ids) {
      const std::size_t r = t.value(id).rows(), c = t.value(id).cols();
      if (t.requires_grad(id)) {
        auto& g = t.grad(id);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) g(i, j) += axis == 0 ? G(off + i, j) : G(i, off + j);
      }
      off += axis == 0 ? r : c;
    }
  });
}

/// Rows [begin, end) of `a`.
template <typename T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t end) {
  const auto& A = a.value();
  if (begin > end || end > A.rows())
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                         A.shape_string());
  const std::size_t c = A.cols();
  Tensor<T> S(end - begin, c, std::vector<T>(A.data() + begin * c, A.data() + end * c));
  return a.tape->record(std::move(S), {a.id}, [ai = a.id, begin, c](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    auto& ga = t.grad(ai);
    T* dst = ga.data() + begin * c;
    for (std::size_t i = 0; i < G.size(); ++i) dst[i] += G[i];
  });
}

/// Columns [begin, end) of `a`.
template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end) {
  const auto& A = a.value();
  if (begin > end || end > A.cols())
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                         A.shape_string());
  Tensor<T> S(A.rows(), end - begin);
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) S(i, j - begin) = A(i, j);
  return a.tape->record(std::move(S), {a.id}, [ai = a.id, begin](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    auto& ga = t.grad(ai);
    for (std::size_t i = 0; i < G.rows(); ++i)
      for (std::size_t j = 0; j < G.cols(); ++j) ga(i, begin + j) += G(i, j);
  });
}

template <typename T>
Var<T> reverse_rows(Var<T> a) {
  const auto& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  Tensor<T> R(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) R(i, j) = A(r - 1 - i, j);
  return a.tape->record(std::move(R), {a.id}, [ai = a.id, r, c](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    auto& ga = t.grad(ai);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga(r - 1 - i, j) += G(i, j);
  });
}

/// Row gather: out[i] = table[ids[i]]. This is the embedding lookup.
template <typename T>
Var<T> gather_rows(Var<T> table, std::vector<std::size_t> ids) {
  const auto& E = table.value();
  const std::size_t c = E.cols();
  Tensor<T> out(ids.size(), c);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= E.rows())
      throw DimensionError("gather_rows: index " + std::to_string(ids[i]) + " outside " + E.shape_string());
    std::copy_n(E.data() + ids[i] * c, c, out.data() + i * c);
  }
  return table.tape->record(std::move(out), {table.id}, [ti = table.id, ids = std::move(ids), c](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    auto& gt = t.grad(ti);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      T* dst = gt.data() + ids[i] * c;
      const T* src = G.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var<T> embedding(Var<T> table, std::vector<std::size_t> ids) {
  return gather_rows(table, std::move(ids));
}

// ---------------------------------------------------------------------------
// Segment ops over stacked token rows

namespace detail {

inline void check_segments(const std::vector<Segment>& segs, std::size_t rows, const char* op) {
  for (const auto& s : segs)
    if (s.first >= s.second || s.second > rows)
      throw DimensionError(std::string(op) + ": segment [" + std::to_string(s.first) + ", " +
                           std::to_string(s.second) + ") invalid for " + std::to_string(rows) + " rows");
}

}  // namespace detail

/// Softmax of a [n, 1] score column independently within each segment.
/// Rows outside every segment receive weight 0.
template <typename T>
Var<T> segment_softmax(Var<T> scores, std::vector<Segment> segs) {
  const auto& S = scores.value();
  if (S.cols() != 1) throw DimensionError("segment_softmax expects a column, got " + S.shape_string());
  detail::check_segments(segs, S.rows(), "segment_softmax");
  Tensor<T> Y(S.rows(), 1);
  for (const auto& [b, e] : segs) {
    std::copy(S.data() + b, S.data() + e, Y.data() + b);
    detail::softmax_inplace(Y.data() + b, e - b, 1);
  }
  return scores.tape->record(std::move(Y), {scores.id}, [si = scores.id, segs = std::move(segs)](Tape<T>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const auto& Y = t.value(self);
    auto& gs = t.grad(si);
    for (const auto& [b, e] : segs) {
      T dot{0};
      for (std::size_t i = b; i < e; ++i) dot += G[i] * Y[i];
      for (std::size_t i = b; i < e; ++i) gs[i] += Y[i] * (G[i] - dot);
    }
  });
}

/// out[s] = sum over rows i of segment s of weights[i] * values[i].
template <typename T>
Var<T> segment_weighted_sum(Var<T> weights, Var<T> values, std::vector<Segment> segs) {
  const auto& W = weights.value();
  const auto& V = values.value();
  if (W.cols() != 1 || W.rows() != V.rows()) detail::shape_mismatch("segment_weighted_sum", W, V);
  detail::check_segments(segs, V.rows(), "segment_weighted_sum");
  const std::size_t c = V.cols();
  Tensor<T> out(segs.size(), c);
  for (std::size_t s = 0; s < segs.size(); ++s)
    for (std::size_t i = segs[s].first; i < segs[s].second; ++i) {
      const T w = W[i];
      for (std::size_t j = 0; j < c; ++j) out(s, j) += w * V(i, j);
    }
  return weights.tape->record(
      std::move(out), {weights.id, values.id},
      [wi = weights.id, vi = values.id, segs = std::move(segs), c](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad(self);
        const auto& W = t.value(wi);
        const auto& V = t.value(vi);
        const bool gw = t.requires_grad(wi), gv = t.requires_grad(vi);
        for (std::size_t s = 0; s < segs.size(); ++s)
          for (std::size_t i = segs[s].first; i < segs[s].second; ++i) {
            if (gw) {
              T dot{0};
              for (std::size_t j = 0; j < c; ++j) dot += G(s, j) * V(i, j);
              t.grad(wi)[i] += dot;
            }
            if (gv) {
              auto& g = t.grad(vi);
              for (std::size_t j = 0; j < c; ++j) g(i, j) += W[i] * G(s, j);
            }
          }
      });
}

/// Multi-head scaled dot-product self-attention restricted to each segment:
/// rows attend only to rows of their own segment. Q, K, V are [n, d] with d
/// divisible by `heads`. When `probs_out` is given it receives, per segment
/// and head, the row-major [len, len] attention matrix.
template <typename T>
Var<T> segment_self_attention(Var<T> q, Var<T> k, Var<T> v, std::vector<Segment> segs, std::size_t heads,
                              std::vector<std::vector<T>>* probs_out = nullptr) {
  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();
  if (!Q.same_shape(K)) detail::shape_mismatch("segment_self_attention", Q, K);
  if (!Q.same_shape(V)) detail::shape_mismatch("segment_self_attention", Q, V);
  const std::size_t d = Q.cols();
  if (heads == 0 || d % heads != 0) throw DimensionError("attention width not divisible by head count");
  detail::check_segments(segs, Q.rows(), "segment_self_attention");
  const std::size_t dh = d / heads;
  const T sc = T{1} / std::sqrt(static_cast<T>(dh));

  Tensor<T> O(Q.rows(), d);
  // probs[s * heads + h] is the [len, len] attention of segment s, head h.
  std::vector<std::vector<T>> probs(segs.size() * heads);
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const auto [b, e] = segs[s];
    const std::size_t len = e - b;
    for (std::size_t h = 0; h < heads; ++h) {
      auto& P = probs[s * heads + h];
      P.assign(len * len, T{0});
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t j = 0; j < len; ++j) {
          T dot{0};
          for (std::size_t x = 0; x < dh; ++x) dot += Q(b + i, off + x) * K(b + j, off + x);
          P[i * len + j] = dot * sc;
        }
        detail::softmax_inplace(P.data() + i * len, len, 1);
        for (std::size_t j = 0; j < len; ++j) {
          const T p = P[i * len + j];
          for (std::size_t x = 0; x < dh; ++x) O(b + i, off + x) += p * V(b + j, off + x);
        }
      }
    }
  }
  if (probs_out) *probs_out = probs;
  return q.tape->record(
      std::move(O), {q.id, k.id, v.id},
      [qi = q.id, ki = k.id, vi = v.id, segs = std::move(segs), heads, dh, sc, probs = std::move(probs)](
          Tape<T>& t, std::size_t self) {
        const auto& G = t.grad(self);
        const auto& Q = t.value(qi);
        const auto& K = t.value(ki);
        const auto& V = t.value(vi);
        const bool gq = t.requires_grad(qi), gk = t.requires_grad(ki), gv = t.requires_grad(vi);
        Tensor<T>* dQ = gq ? &t.grad(qi) : nullptr;
        Tensor<T>* dK = gk ? &t.grad(ki) : nullptr;
        Tensor<T>* dV = gv ? &t.grad(vi) : nullptr;
        std::vector<T> dP, dS;
        for (std::size_t s = 0; s < segs.size(); ++s) {
          const auto [b, e] = segs[s];
          const std::size_t len = e - b;
          for (std::size_t h = 0; h < heads; ++h) {
            const auto& P = probs[s * heads + h];
            const std::size_t off = h * dh;
            dP.assign(len * len, T{0});
            for (std::size_t i = 0; i < len; ++i)
              for (std::size_t j = 0; j < len; ++j) {
                T dot{0};
                for (std::size_t x = 0; x < dh; ++x) dot += G(b + i, off + x) * V(b + j, off + x);
                dP[i * len + j] = dot;
                if (dV) {
                  const T p = P[i * len + j];
                  for (std::size_t x = 0; x < dh; ++x) (*dV)(b + j, off + x) += p * G(b + i, off + x);
                }
              }
            dS.assign(len * len, T{0});
            for (std::size_t i = 0; i < len; ++i) {
              T dot{0};
              for (std::size_t j = 0; j < len; ++j) dot += dP[i * len + j] * P[i * len + j];
              for (std::size_t j = 0; j < len; ++j)
                dS[i * len + j] = P[i * len + j] * (dP[i * len + j] - dot) * sc;
            }
            for (std::size_t i = 0; i < len; ++i)
              for (std::size_t j = 0; j < len; ++j) {
                const T ds = dS[i * len + j];
                if (dQ)
                  for (std::size_t x = 0; x < dh; ++x) (*dQ)(b + i, off + x) += ds * K(b + j, off + x);
                if (dK)
                  for (std::size_t x = 0; x < dh; ++x) (*dK)(b + j, off + x) += ds * Q(b + i, off + x);
              }
          }
        }
      });
}

}  // namespace oncoabs::num
