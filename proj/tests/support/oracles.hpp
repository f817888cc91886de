#pragma once

// Independent reference implementations used only by tests. These must stay
// free of the library's fast paths: they are deliberately written as direct
// loops over the defining formulas.

#include <algorithm>
#include <cmath>
#include <vector>

#include "camo/rng.hpp"
#include "camo/tensor.hpp"

namespace oracle {

// Quadruple-loop convolution, NCHW/FCHW, zero padding.
template <typename T>
std::vector<T> conv2d_naive(const std::vector<T>& in, int N, int C, int H,
                            int W, const std::vector<T>& k, int F, int kh,
                            int kw, int stride, int pad) {
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  std::vector<T> out(static_cast<std::size_t>(N) * F * OH * OW, T(0));
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double acc = 0.0;
          for (int c = 0; c < C; ++c)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int iy = oy * stride + i - pad;
                const int ix = ox * stride + j - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += static_cast<double>(
                           in[((static_cast<std::size_t>(n) * C + c) * H + iy) *
                                  W +
                              ix]) *
                       static_cast<double>(
                           k[((static_cast<std::size_t>(f) * C + c) * kh + i) *
                                 kw +
                             j]);
              }
          out[((static_cast<std::size_t>(n) * F + f) * OH + oy) * OW + ox] =
              static_cast<T>(acc);
        }
  return out;
}

template <typename T>
camo::Tensor<T> random_tensor(camo::Shape shape, camo::Rng& rng, double lo = -1.0,
                              double hi = 1.0, bool requires_grad = false) {
  std::vector<T> data(camo::numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
  return camo::Tensor<T>(std::move(shape), std::move(data), requires_grad);
}

}  // namespace oracle
