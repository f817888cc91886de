#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include "camo/parallel.hpp"
#include "camo/tensor.hpp"

namespace camo {

enum class Activation { LeakyRelu, Sigmoid };

namespace detail {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                   " vs " + shape_str(b.shape()));
  }
}

// Elementwise unary where the derivative is a function of the input value.
template <typename T, typename Fwd, typename Dfdx>
Tensor<T> map_unary(const Tensor<T>& x, Fwd fwd, Dfdx dfdx) {
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  auto xn = x.node();
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x},
      [xn, dfdx](typename Tensor<T>::Node& self) {
        if (!xn->requires_grad) return;
        auto& xg = xn->ensure_grad();
        for (std::size_t i = 0; i < xg.size(); ++i)
          xg[i] += self.grad[i] * dfdx(xn->value[i]);
      });
}

// Elementwise unary where the derivative is cheaper from the output value.
template <typename T, typename Fwd, typename Dfdy>
Tensor<T> map_unary_from_out(const Tensor<T>& x, Fwd fwd, Dfdy dfdy) {
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  auto xn = x.node();
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x},
      [xn, dfdy](typename Tensor<T>::Node& self) {
        if (!xn->requires_grad) return;
        auto& xg = xn->ensure_grad();
        for (std::size_t i = 0; i < xg.size(); ++i)
          xg[i] += self.grad[i] * dfdy(self.value[i]);
      });
}

template <typename T>
T stable_sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
T stable_softplus(T v) {
  return v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  auto an = a.node();
  auto bn = b.node();
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b},
                            [an, bn](typename Tensor<T>::Node& self) {
                              if (an->requires_grad) {
                                auto& g = an->ensure_grad();
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  g[i] += self.grad[i];
                              }
                              if (bn->requires_grad) {
                                auto& g = bn->ensure_grad();
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  g[i] += self.grad[i];
                              }
                            });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  auto an = a.node();
  auto bn = b.node();
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b},
                            [an, bn](typename Tensor<T>::Node& self) {
                              if (an->requires_grad) {
                                auto& g = an->ensure_grad();
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  g[i] += self.grad[i];
                              }
                              if (bn->requires_grad) {
                                auto& g = bn->ensure_grad();
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  g[i] -= self.grad[i];
                              }
                            });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  auto an = a.node();
  auto bn = b.node();
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b},
                            [an, bn](typename Tensor<T>::Node& self) {
                              if (an->requires_grad) {
                                auto& g = an->ensure_grad();
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  g[i] += self.grad[i] * bn->value[i];
                              }
                              if (bn->requires_grad) {
                                auto& g = bn->ensure_grad();
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  g[i] += self.grad[i] * an->value[i];
                              }
                            });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "div");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv[i];
  auto an = a.node();
  auto bn = b.node();
  return Tensor<T>::from_op(
      a.shape(), std::move(out), {a, b},
      [an, bn](typename Tensor<T>::Node& self) {
        if (an->requires_grad) {
          auto& g = an->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += self.grad[i] / bn->value[i];
        }
        if (bn->requires_grad) {
          auto& g = bn->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i)
            g[i] -= self.grad[i] * self.value[i] / bn->value[i];
        }
      });
}

// Elementwise max; ties route the gradient to the first argument.
template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "maximum");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::max(av[i], bv[i]);
  auto an = a.node();
  auto bn = b.node();
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b},
                            [an, bn](typename Tensor<T>::Node& self) {
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                const bool first = an->value[i] >= bn->value[i];
                                auto* n = first ? an.get() : bn.get();
                                if (n->requires_grad)
                                  n->ensure_grad()[i] += self.grad[i];
                              }
                            });
}

// ---------------------------------------------------------------------------
// elementwise with scalars / unary
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::map_unary(
      x, [c](T v) { return v + c; }, [](T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  return detail::map_unary(
      x, [c](T v) { return v * c; }, [c](T) { return c; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return mul_scalar(x, T(-1));
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::map_unary_from_out(
      x, [](T v) { return std::exp(v); }, [](T y) { return y; });
}

// Natural log; caller guarantees positive input.
template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::map_unary(
      x, [](T v) { return std::log(v); }, [](T v) { return T(1) / v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return detail::map_unary_from_out(
      x, [](T v) { return std::sqrt(v); },
      [](T y) { return T(1) / (T(2) * y); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::map_unary_from_out(
      x, [](T v) { return detail::stable_sigmoid(v); },
      [](T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.1)) {
  return detail::map_unary(
      x, [slope](T v) { return v >= T(0) ? v : slope * v; },
      [slope](T v) { return v >= T(0) ? T(1) : slope; });
}

// log(1 + exp(x)), numerically stable; derivative is sigmoid(x).
template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return detail::map_unary(
      x, [](T v) { return detail::stable_softplus(v); },
      [](T v) { return detail::stable_sigmoid(v); });
}

// Clamp to [lo,hi]; zero gradient outside the open interval.
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  if (!(lo <= hi)) throw ParamError("clamp: lo > hi");
  return detail::map_unary(
      x, [lo, hi](T v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](T v) { return (v > lo && v < hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  switch (kind) {
    case Activation::LeakyRelu:
      return leaky_relu(x);
    case Activation::Sigmoid:
      return sigmoid(x);
  }
  throw ParamError("activation: unknown kind");
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}
template <typename T>
Tensor<T> operator*(T c, const Tensor<T>& x) {
  return mul_scalar(x, c);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& x, T c) {
  return mul_scalar(x, c);
}
template <typename T>
Tensor<T> operator+(const Tensor<T>& x, T c) {
  return add_scalar(x, c);
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const auto& xv = x.values();
  T acc = T(0);
  for (T v : xv) acc += v;
  auto xn = x.node();
  return Tensor<T>::from_op(Shape{1}, std::vector<T>{acc}, {x},
                            [xn](typename Tensor<T>::Node& self) {
                              if (!xn->requires_grad) return;
                              auto& g = xn->ensure_grad();
                              const T u = self.grad[0];
                              for (auto& gi : g) gi += u;
                            });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const auto& xv = x.values();
  if (xv.empty()) throw UsageError("mean: empty tensor");
  T acc = T(0);
  for (T v : xv) acc += v;
  const T inv = T(1) / static_cast<T>(xv.size());
  auto xn = x.node();
  return Tensor<T>::from_op(Shape{1}, std::vector<T>{acc * inv}, {x},
                            [xn, inv](typename Tensor<T>::Node& self) {
                              if (!xn->requires_grad) return;
                              auto& g = xn->ensure_grad();
                              const T u = self.grad[0] * inv;
                              for (auto& gi : g) gi += u;
                            });
}

// Max over all elements; gradient routed to the first argmax.
template <typename T>
Tensor<T> max_all(const Tensor<T>& x) {
  const auto& xv = x.values();
  if (xv.empty()) throw UsageError("max_all: empty tensor");
  std::size_t arg = 0;
  for (std::size_t i = 1; i < xv.size(); ++i)
    if (xv[i] > xv[arg]) arg = i;
  auto xn = x.node();
  return Tensor<T>::from_op(Shape{1}, std::vector<T>{xv[arg]}, {x},
                            [xn, arg](typename Tensor<T>::Node& self) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad()[arg] += self.grad[0];
                            });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                   shape_str(shape));
  }
  auto xn = x.node();
  std::vector<T> out = x.values();
  return Tensor<T>::from_op(std::move(shape), std::move(out), {x},
                            [xn](typename Tensor<T>::Node& self) {
                              if (!xn->requires_grad) return;
                              auto& g = xn->ensure_grad();
                              for (std::size_t i = 0; i < g.size(); ++i)
                                g[i] += self.grad[i];
                            });
}

// Concatenate along an existing axis. All parts must agree on the other axes.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size()))
    throw DimError("concat: axis " + std::to_string(axis) + " out of rank " +
                   std::to_string(s0.size()));
  Shape out_shape = s0;
  int axis_total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size())
      throw DimError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int>(d) != axis && s[d] != s0[d])
        throw DimError("concat: mismatch on axis " + std::to_string(d));
    }
    axis_total += s[axis];
  }
  out_shape[axis] = axis_total;

  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(s0[d]);
  for (std::size_t d = axis + 1; d < s0.size(); ++d)
    inner *= static_cast<std::size_t>(s0[d]);

  std::vector<T> out(numel(out_shape));
  const std::size_t out_row = static_cast<std::size_t>(axis_total) * inner;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& pv = p.values();
    const std::size_t part_row = static_cast<std::size_t>(p.shape()[axis]) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(pv.begin() + o * part_row, pv.begin() + (o + 1) * part_row,
                out.begin() + o * out_row + offset);
    offset += part_row;
  }

  std::vector<std::shared_ptr<typename Tensor<T>::Node>> nodes;
  std::vector<std::size_t> part_rows;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    part_rows.push_back(static_cast<std::size_t>(p.shape()[axis]) * inner);
  }
  return Tensor<T>::from_op(
      std::move(out_shape), std::move(out), parts,
      [nodes, part_rows, outer, out_row](typename Tensor<T>::Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
          const std::size_t part_row = part_rows[k];
          if (nodes[k]->requires_grad) {
            auto& g = nodes[k]->ensure_grad();
            for (std::size_t o = 0; o < outer; ++o)
              for (std::size_t i = 0; i < part_row; ++i)
                g[o * part_row + i] += self.grad[o * out_row + offset + i];
          }
          offset += part_row;
        }
      });
}

// Stack equal-shape tensors into a new leading axis.
template <typename T>
Tensor<T> stack0(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw UsageError("stack0: no inputs");
  const Shape& s0 = parts[0].shape();
  for (const auto& p : parts) detail::check_same_shape(parts[0], p, "stack0");
  Shape out_shape;
  out_shape.push_back(static_cast<int>(parts.size()));
  out_shape.insert(out_shape.end(), s0.begin(), s0.end());
  const std::size_t block = numel(s0);
  std::vector<T> out(block * parts.size());
  for (std::size_t k = 0; k < parts.size(); ++k)
    std::copy(parts[k].values().begin(), parts[k].values().end(),
              out.begin() + k * block);
  std::vector<std::shared_ptr<typename Tensor<T>::Node>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return Tensor<T>::from_op(std::move(out_shape), std::move(out), parts,
                            [nodes, block](typename Tensor<T>::Node& self) {
                              for (std::size_t k = 0; k < nodes.size(); ++k) {
                                if (!nodes[k]->requires_grad) continue;
                                auto& g = nodes[k]->ensure_grad();
                                for (std::size_t i = 0; i < block; ++i)
                                  g[i] += self.grad[k * block + i];
                              }
                            });
}

// Select one index along the leading axis.
template <typename T>
Tensor<T> slice0(const Tensor<T>& x, int index) {
  const Shape& s = x.shape();
  if (s.empty() || index < 0 || index >= s[0])
    throw DimError("slice0: index " + std::to_string(index) + " out of axis 0 (" +
                   shape_str(s) + ")");
  Shape out_shape(s.begin() + 1, s.end());
  if (out_shape.empty()) out_shape.push_back(1);
  const std::size_t block = numel(out_shape);
  std::vector<T> out(x.values().begin() + index * block,
                     x.values().begin() + (index + 1) * block);
  auto xn = x.node();
  return Tensor<T>::from_op(std::move(out_shape), std::move(out), {x},
                            [xn, index, block](typename Tensor<T>::Node& self) {
                              if (!xn->requires_grad) return;
                              auto& g = xn->ensure_grad();
                              for (std::size_t i = 0; i < block; ++i)
                                g[index * block + i] += self.grad[i];
                            });
}

// Select one index along the trailing axis, dropping it.
template <typename T>
Tensor<T> select_last(const Tensor<T>& x, int index) {
  const Shape& s = x.shape();
  if (s.empty() || index < 0 || index >= s.back())
    throw DimError("select_last: index " + std::to_string(index) +
                   " out of trailing axis (" + shape_str(s) + ")");
  Shape out_shape(s.begin(), s.end() - 1);
  if (out_shape.empty()) out_shape.push_back(1);
  const std::size_t n = numel(out_shape);
  const std::size_t last = static_cast<std::size_t>(s.back());
  std::vector<T> out(n);
  const auto& xv = x.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i * last + index];
  auto xn = x.node();
  return Tensor<T>::from_op(std::move(out_shape), std::move(out), {x},
                            [xn, index, last, n](typename Tensor<T>::Node& self) {
                              if (!xn->requires_grad) return;
                              auto& g = xn->ensure_grad();
                              for (std::size_t i = 0; i < n; ++i)
                                g[i * last + index] += self.grad[i];
                            });
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace detail {

// cols is laid out [C*kh*kw][OH*OW], row-major.
template <typename T>
void im2col(const T* img, int C, int H, int W, int kh, int kw, int stride,
            int pad, int OH, int OW, T* cols) {
  const int ospan = OH * OW;
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        T* row = cols + ((c * kh + i) * kw + j) * ospan;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * stride + i - pad;
          if (iy < 0 || iy >= H) {
            std::fill(row + oy * OW, row + (oy + 1) * OW, T(0));
            continue;
          }
          const T* src = img + (c * H + iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * stride + j - pad;
            row[oy * OW + ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int C, int H, int W, int kh, int kw, int stride,
                int pad, int OH, int OW, T* img_grad) {
  const int ospan = OH * OW;
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const T* row = cols + ((c * kh + i) * kw + j) * ospan;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * stride + i - pad;
          if (iy < 0 || iy >= H) continue;
          T* dst = img_grad + (c * H + iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * stride + j - pad;
            if (ix >= 0 && ix < W) dst[ix] += row[oy * OW + ox];
          }
        }
      }
    }
  }
}

// C[M x N] += A[M x K] * B[K x N]
template <typename T>
void gemm_acc(const T* A, const T* B, T* C, int M, int K, int N) {
  for (int m = 0; m < M; ++m) {
    for (int k = 0; k < K; ++k) {
      const T a = A[m * K + k];
      const T* b = B + k * N;
      T* c = C + m * N;
      for (int n = 0; n < N; ++n) c[n] += a * b[n];
    }
  }
}

// C[M x K] += A[M x N] * B[K x N]^T  (dot products over rows)
template <typename T>
void gemm_abt_acc(const T* A, const T* B, T* C, int M, int N, int K) {
  for (int m = 0; m < M; ++m) {
    for (int k = 0; k < K; ++k) {
      const T* a = A + m * N;
      const T* b = B + k * N;
      T acc = T(0);
      for (int n = 0; n < N; ++n) acc += a[n] * b[n];
      C[m * K + k] += acc;
    }
  }
}

// C[K x N] += A[M x K]^T * B[M x N]
template <typename T>
void gemm_atb_acc(const T* A, const T* B, T* C, int M, int K, int N) {
  for (int m = 0; m < M; ++m) {
    for (int k = 0; k < K; ++k) {
      const T a = A[m * K + k];
      const T* b = B + m * N;
      T* c = C + k * N;
      for (int n = 0; n < N; ++n) c[n] += a * b[n];
    }
  }
}

}  // namespace detail

// 2-D convolution, NCHW input and FCHW kernel, optional per-filter bias.
// Parallelizes over the batch axis; every output element is produced by one
// worker with a fixed summation order, so results do not depend on the
// thread count.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride,
                 int padding, const Tensor<T>& bias = {}) {
  if (input.rank() != 4)
    throw DimError("conv2d: input must be [N,C,H,W], got " +
                   shape_str(input.shape()));
  if (kernel.rank() != 4)
    throw DimError("conv2d: kernel must be [F,C,kh,kw], got " +
                   shape_str(kernel.shape()));
  if (stride < 1) throw ParamError("conv2d: stride must be >= 1");
  if (padding < 0) throw ParamError("conv2d: padding must be >= 0");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2),
            W = input.dim(3);
  const int F = kernel.dim(0), KC = kernel.dim(1), kh = kernel.dim(2),
            kw = kernel.dim(3);
  if (KC != C)
    throw DimError("conv2d: channel axis mismatch, input C=" +
                   std::to_string(C) + " vs kernel C=" + std::to_string(KC));
  if (kh > H + 2 * padding)
    throw DimError("conv2d: kernel height " + std::to_string(kh) +
                   " exceeds padded input height " +
                   std::to_string(H + 2 * padding));
  if (kw > W + 2 * padding)
    throw DimError("conv2d: kernel width " + std::to_string(kw) +
                   " exceeds padded input width " +
                   std::to_string(W + 2 * padding));
  if (bias.defined() &&
      (bias.rank() != 1 || bias.dim(0) != F))
    throw DimError("conv2d: bias must be [F]");

  const int OH = (H + 2 * padding - kh) / stride + 1;
  const int OW = (W + 2 * padding - kw) / stride + 1;
  const int CKK = C * kh * kw;
  const int ospan = OH * OW;

  auto cols = std::make_shared<std::vector<T>>(
      static_cast<std::size_t>(N) * CKK * ospan);
  std::vector<T> out(static_cast<std::size_t>(N) * F * ospan, T(0));
  const auto& xv = input.values();
  const auto& kv = kernel.values();
  const T* bv = bias.defined() ? bias.values().data() : nullptr;

  parallel_for(N, [&](int n) {
    T* col_n = cols->data() + static_cast<std::size_t>(n) * CKK * ospan;
    detail::im2col(xv.data() + static_cast<std::size_t>(n) * C * H * W, C, H, W,
                   kh, kw, stride, padding, OH, OW, col_n);
    T* out_n = out.data() + static_cast<std::size_t>(n) * F * ospan;
    if (bv) {
      for (int f = 0; f < F; ++f)
        std::fill(out_n + f * ospan, out_n + (f + 1) * ospan, bv[f]);
    }
    detail::gemm_acc(kv.data(), col_n, out_n, F, CKK, ospan);
  });

  auto xn = input.node();
  auto kn = kernel.node();
  auto bnode = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor<T>> parents{input, kernel};
  if (bias.defined()) parents.push_back(bias);

  auto back = [xn, kn, bnode, cols, N, C, H, W, F, CKK, kh, kw, stride, padding,
               OH, OW, ospan](typename Tensor<T>::Node& self) {
    const T* g = self.grad.data();
    if (bnode && bnode->requires_grad) {
      auto& bg = bnode->ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int f = 0; f < F; ++f) {
          const T* gn = g + (static_cast<std::size_t>(n) * F + f) * ospan;
          T acc = T(0);
          for (int o = 0; o < ospan; ++o) acc += gn[o];
          bg[f] += acc;
        }
    }
    if (kn->requires_grad) {
      // per-image partials reduced in batch order for determinism
      std::vector<T> partial(static_cast<std::size_t>(N) * F * CKK, T(0));
      parallel_for(N, [&](int n) {
        detail::gemm_abt_acc(g + static_cast<std::size_t>(n) * F * ospan,
                             cols->data() + static_cast<std::size_t>(n) * CKK * ospan,
                             partial.data() + static_cast<std::size_t>(n) * F * CKK,
                             F, ospan, CKK);
      });
      auto& kg = kn->ensure_grad();
      for (int n = 0; n < N; ++n) {
        const T* p = partial.data() + static_cast<std::size_t>(n) * F * CKK;
        for (std::size_t i = 0; i < kg.size(); ++i) kg[i] += p[i];
      }
    }
    if (xn->requires_grad) {
      auto& xg = xn->ensure_grad();
      const auto& kv = kn->value;
      parallel_for(N, [&](int n) {
        std::vector<T> colg(static_cast<std::size_t>(CKK) * ospan, T(0));
        detail::gemm_atb_acc(kv.data(), g + static_cast<std::size_t>(n) * F * ospan,
                             colg.data(), F, CKK, ospan);
        detail::col2im_add(colg.data(), C, H, W, kh, kw, stride, padding, OH, OW,
                           xg.data() + static_cast<std::size_t>(n) * C * H * W);
      });
    }
  };

  return Tensor<T>::from_op(Shape{N, F, OH, OW}, std::move(out), parents,
                            std::move(back));
}

// ---------------------------------------------------------------------------
// affine_sample
// ---------------------------------------------------------------------------

template <typename T>
struct Sampled {
  Tensor<T> image;  // [C,H,W]
  Tensor<T> mask;   // [1,H,W], 1 where the source had coverage, else 0
};

namespace detail {

// Inverse-maps output pixel (y,x) to continuous source coordinates for a
// rotation about the center followed by uniform scaling.
struct AffineMap {
  double cos_t, sin_t, inv_scale;
  double src_cy, src_cx, out_cy, out_cx;

  AffineMap(double rotation, double scale, int src_h, int src_w, int out_h,
            int out_w)
      : cos_t(std::cos(rotation)),
        sin_t(std::sin(rotation)),
        inv_scale(1.0 / scale),
        src_cy((src_h - 1) * 0.5),
        src_cx((src_w - 1) * 0.5),
        out_cy((out_h - 1) * 0.5),
        out_cx((out_w - 1) * 0.5) {}

  void map(int y, int x, double& sy, double& sx) const {
    const double dy = y - out_cy;
    const double dx = x - out_cx;
    sy = (cos_t * dy + sin_t * dx) * inv_scale + src_cy;
    sx = (-sin_t * dy + cos_t * dx) * inv_scale + src_cx;
  }
};

}  // namespace detail

// Rotates (counter-clockwise in x-right / y-up convention) and scales src
// into an out_h x out_w frame via bilinear interpolation. Out-of-bounds
// samples read as zero; the returned mask is 1 exactly where the inverse
// map lands inside the source. Differentiable w.r.t. src only.
template <typename T>
Sampled<T> affine_sample(const Tensor<T>& src, double rotation, double scale,
                         int out_h, int out_w) {
  if (src.rank() != 3)
    throw DimError("affine_sample: src must be [C,h,w], got " +
                   shape_str(src.shape()));
  if (!(scale > 0.0)) throw ParamError("affine_sample: scale must be > 0");
  if (out_h < 1 || out_w < 1)
    throw ParamError("affine_sample: output size must be positive");
  const int C = src.dim(0), h = src.dim(1), w = src.dim(2);
  const detail::AffineMap map(rotation, scale, h, w, out_h, out_w);

  const auto& sv = src.values();
  std::vector<T> out(static_cast<std::size_t>(C) * out_h * out_w, T(0));
  std::vector<T> mask(static_cast<std::size_t>(out_h) * out_w, T(0));

  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double sy, sx;
      map.map(y, x, sy, sx);
      if (sy < 0.0 || sy > h - 1 || sx < 0.0 || sx > w - 1) continue;
      mask[y * out_w + x] = T(1);
      const int y0 = static_cast<int>(std::floor(sy));
      const int x0 = static_cast<int>(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
      const double w10 = fy * (1 - fx), w11 = fy * fx;
      for (int c = 0; c < C; ++c) {
        const T* plane = sv.data() + static_cast<std::size_t>(c) * h * w;
        double acc = 0.0;
        acc += w00 * plane[y0 * w + x0];
        if (x0 + 1 < w) acc += w01 * plane[y0 * w + x0 + 1];
        if (y0 + 1 < h) acc += w10 * plane[(y0 + 1) * w + x0];
        if (y0 + 1 < h && x0 + 1 < w) acc += w11 * plane[(y0 + 1) * w + x0 + 1];
        out[(static_cast<std::size_t>(c) * out_h + y) * out_w + x] =
            static_cast<T>(acc);
      }
    }
  }

  auto sn = src.node();
  Tensor<T> image = Tensor<T>::from_op(
      Shape{C, out_h, out_w}, std::move(out), {src},
      [sn, map, C, h, w, out_h, out_w](typename Tensor<T>::Node& self) {
        if (!sn->requires_grad) return;
        auto& sg = sn->ensure_grad();
        for (int y = 0; y < out_h; ++y) {
          for (int x = 0; x < out_w; ++x) {
            double sy, sx;
            map.map(y, x, sy, sx);
            if (sy < 0.0 || sy > h - 1 || sx < 0.0 || sx > w - 1) continue;
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const double fy = sy - y0, fx = sx - x0;
            const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
            const double w10 = fy * (1 - fx), w11 = fy * fx;
            for (int c = 0; c < C; ++c) {
              const T g =
                  self.grad[(static_cast<std::size_t>(c) * out_h + y) * out_w + x];
              T* plane = sg.data() + static_cast<std::size_t>(c) * h * w;
              plane[y0 * w + x0] += static_cast<T>(w00 * g);
              if (x0 + 1 < w) plane[y0 * w + x0 + 1] += static_cast<T>(w01 * g);
              if (y0 + 1 < h) plane[(y0 + 1) * w + x0] += static_cast<T>(w10 * g);
              if (y0 + 1 < h && x0 + 1 < w)
                plane[(y0 + 1) * w + x0 + 1] += static_cast<T>(w11 * g);
            }
          }
        }
      });
  return {std::move(image), Tensor<T>(Shape{1, out_h, out_w}, std::move(mask))};
}

// ---------------------------------------------------------------------------
// alpha compositing
// ---------------------------------------------------------------------------

// out = mask * (alpha * patch + (1-alpha) * image) + (1-mask) * image.
// mask is a {0,1} coverage plane shared across channels. Differentiable
// w.r.t. both image and patch.
template <typename T>
Tensor<T> alpha_composite(const Tensor<T>& image, const Tensor<T>& patch,
                          const Tensor<T>& mask, double alpha) {
  detail::check_same_shape(image, patch, "alpha_composite");
  if (alpha < 0.0 || alpha > 1.0)
    throw ParamError("alpha_composite: alpha must be in [0,1], got " +
                     std::to_string(alpha));
  if (image.rank() != 3)
    throw DimError("alpha_composite: image must be [C,H,W]");
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (mask.rank() != 3 || mask.dim(0) != 1 || mask.dim(1) != H ||
      mask.dim(2) != W)
    throw DimError("alpha_composite: mask must be [1,H,W] matching image");
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const auto& mv = mask.values();
  for (T m : mv)
    if (m != T(0) && m != T(1))
      throw ParamError("alpha_composite: mask values must be 0 or 1");

  const T a = static_cast<T>(alpha);
  const auto& iv = image.values();
  const auto& pv = patch.values();
  std::vector<T> out(iv.size());
  for (int c = 0; c < C; ++c) {
    const std::size_t base = c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const T m = mv[i];
      out[base + i] = m * (a * pv[base + i] + (T(1) - a) * iv[base + i]) +
                      (T(1) - m) * iv[base + i];
    }
  }

  auto in = image.node();
  auto pn = patch.node();
  auto mn = mask.node();
  return Tensor<T>::from_op(
      image.shape(), std::move(out), {image, patch, mask},
      [in, pn, mn, a, C, plane](typename Tensor<T>::Node& self) {
        const auto& mv = mn->value;
        if (pn->requires_grad) {
          auto& pg = pn->ensure_grad();
          for (int c = 0; c < C; ++c) {
            const std::size_t base = c * plane;
            for (std::size_t i = 0; i < plane; ++i)
              pg[base + i] += self.grad[base + i] * mv[i] * a;
          }
        }
        if (in->requires_grad) {
          auto& ig = in->ensure_grad();
          for (int c = 0; c < C; ++c) {
            const std::size_t base = c * plane;
            for (std::size_t i = 0; i < plane; ++i)
              ig[base + i] += self.grad[base + i] * (T(1) - mv[i] * a);
          }
        }
      });
}

// Paste src into a zero canvas of out_h x out_w with its top-left corner at
// (y0,x0); the overlap is clipped to the canvas. Gradient is the crop.
template <typename T>
Tensor<T> embed(const Tensor<T>& src, int out_h, int out_w, int y0, int x0) {
  if (src.rank() != 3)
    throw DimError("embed: src must be [C,h,w], got " + shape_str(src.shape()));
  const int C = src.dim(0), h = src.dim(1), w = src.dim(2);
  std::vector<T> out(static_cast<std::size_t>(C) * out_h * out_w, T(0));
  const auto& sv = src.values();
  const int ys = std::max(0, -y0), ye = std::min(h, out_h - y0);
  const int xs = std::max(0, -x0), xe = std::min(w, out_w - x0);
  for (int c = 0; c < C; ++c)
    for (int y = ys; y < ye; ++y)
      for (int x = xs; x < xe; ++x)
        out[(static_cast<std::size_t>(c) * out_h + y + y0) * out_w + x + x0] =
            sv[(static_cast<std::size_t>(c) * h + y) * w + x];
  auto sn = src.node();
  return Tensor<T>::from_op(
      Shape{C, out_h, out_w}, std::move(out), {src},
      [sn, C, h, w, out_h, out_w, y0, x0, ys, ye, xs, xe](
          typename Tensor<T>::Node& self) {
        if (!sn->requires_grad) return;
        auto& sg = sn->ensure_grad();
        for (int c = 0; c < C; ++c)
          for (int y = ys; y < ye; ++y)
            for (int x = xs; x < xe; ++x)
              sg[(static_cast<std::size_t>(c) * h + y) * w + x] +=
                  self.grad[(static_cast<std::size_t>(c) * out_h + y + y0) *
                                out_w +
                            x + x0];
      });
}

}  // namespace camo
