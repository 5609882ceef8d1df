#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "synoptic/errors.hpp"
#include "synoptic/network.hpp"
#include "synoptic/tensor.hpp"

// Dense kernels for the fixed layer vocabulary. Storage is float32, all
// reductions accumulate in float64 with a fixed traversal order, so results
// are reproducible bit-for-bit across runs.

namespace synoptic {

struct conv_geometry {
  int64_t n, c, h, w;        // input
  int64_t k, kh, kw;         // filter bank
  int64_t sh, sw, ph, pw;    // stride / padding
  int64_t oh, ow;            // output plane

  conv_geometry(const Tensor& input, const Tensor& weight, pair2 stride, pair2 padding) {
    if (input.rank() != 4) throw shape_error("conv2d: input must be [N,C,H,W]");
    if (weight.rank() != 4) throw shape_error("conv2d: weight must be [K,C,kh,kw]");
    n = input.dim(0); c = input.dim(1); h = input.dim(2); w = input.dim(3);
    k = weight.dim(0); kh = weight.dim(2); kw = weight.dim(3);
    if (weight.dim(1) != c)
      throw shape_error("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                        " input channels, input has " + std::to_string(c));
    sh = stride.h; sw = stride.w; ph = padding.h; pw = padding.w;
    if (kh > h + 2 * ph || kw > w + 2 * pw)
      throw shape_error("conv2d: kernel exceeds padded input");
    oh = (h + 2 * ph - kh) / sh + 1;
    ow = (w + 2 * pw - kw) / sw + 1;
  }
};

inline Tensor conv2d_forward(const Tensor& input, const Tensor& weight, pair2 stride,
                             pair2 padding) {
  const conv_geometry g(input, weight, stride, padding);
  Tensor out({g.n, g.k, g.oh, g.ow});
  std::vector<double> plane(static_cast<size_t>(g.oh * g.ow));
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t k = 0; k < g.k; ++k) {
      std::fill(plane.begin(), plane.end(), 0.0);
      for (int64_t c = 0; c < g.c; ++c) {
        const float* in_c = input.data.data() + ((n * g.c + c) * g.h) * g.w;
        const float* w_c = weight.data.data() + ((k * g.c + c) * g.kh) * g.kw;
        for (int64_t ki = 0; ki < g.kh; ++ki) {
          for (int64_t oh = 0; oh < g.oh; ++oh) {
            const int64_t ih = oh * g.sh - g.ph + ki;
            if (ih < 0 || ih >= g.h) continue;
            const float* in_row = in_c + ih * g.w;
            double* out_row = plane.data() + oh * g.ow;
            for (int64_t kj = 0; kj < g.kw; ++kj) {
              const double wv = w_c[ki * g.kw + kj];
              if (wv == 0.0) continue;
              const int64_t iw0 = -g.pw + kj;
              // clamp ow range so iw stays inside the row
              int64_t ow_lo = iw0 < 0 ? (-iw0 + g.sw - 1) / g.sw : 0;
              int64_t ow_hi = g.ow;
              if (iw0 + (g.ow - 1) * g.sw >= g.w)
                ow_hi = (g.w - 1 - iw0) / g.sw + 1;
              const float* in_base = in_row + iw0;
              for (int64_t ow = ow_lo; ow < ow_hi; ++ow)
                out_row[ow] += wv * in_base[ow * g.sw];
            }
          }
        }
      }
      float* dst = out.data.data() + ((n * g.k + k) * g.oh) * g.ow;
      for (size_t i = 0; i < plane.size(); ++i) dst[i] = static_cast<float>(plane[i]);
    }
  }
  return out;
}

struct conv_gradients {
  Tensor grad_input;
  Tensor grad_weight;
};

inline conv_gradients conv2d_backward(const Tensor& grad_out, const Tensor& input,
                                      const Tensor& weight, pair2 stride, pair2 padding) {
  const conv_geometry g(input, weight, stride, padding);
  if (grad_out.rank() != 4 || grad_out.dim(0) != g.n || grad_out.dim(1) != g.k ||
      grad_out.dim(2) != g.oh || grad_out.dim(3) != g.ow)
    throw shape_error("conv2d_backward: grad_out shape " + grad_out.shape_string() +
                      " does not match forward output");

  conv_gradients grads{Tensor(input.shape), Tensor(weight.shape)};
  std::vector<double> gin(static_cast<size_t>(g.c * g.h * g.w));
  std::vector<double> gw(weight.data.size(), 0.0);

  for (int64_t n = 0; n < g.n; ++n) {
    std::fill(gin.begin(), gin.end(), 0.0);
    for (int64_t k = 0; k < g.k; ++k) {
      const float* go = grad_out.data.data() + ((n * g.k + k) * g.oh) * g.ow;
      for (int64_t c = 0; c < g.c; ++c) {
        const float* in_c = input.data.data() + ((n * g.c + c) * g.h) * g.w;
        const float* w_c = weight.data.data() + ((k * g.c + c) * g.kh) * g.kw;
        double* gin_c = gin.data() + (c * g.h) * g.w;
        double* gw_c = gw.data() + ((k * g.c + c) * g.kh) * g.kw;
        for (int64_t ki = 0; ki < g.kh; ++ki) {
          for (int64_t oh = 0; oh < g.oh; ++oh) {
            const int64_t ih = oh * g.sh - g.ph + ki;
            if (ih < 0 || ih >= g.h) continue;
            const float* go_row = go + oh * g.ow;
            const float* in_row = in_c + ih * g.w;
            double* gin_row = gin_c + ih * g.w;
            for (int64_t kj = 0; kj < g.kw; ++kj) {
              const double wv = w_c[ki * g.kw + kj];
              const int64_t iw0 = -g.pw + kj;
              int64_t ow_lo = iw0 < 0 ? (-iw0 + g.sw - 1) / g.sw : 0;
              int64_t ow_hi = g.ow;
              if (iw0 + (g.ow - 1) * g.sw >= g.w)
                ow_hi = (g.w - 1 - iw0) / g.sw + 1;
              double wsum = 0.0;
              for (int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                const double go_v = go_row[ow];
                gin_row[iw0 + ow * g.sw] += go_v * wv;
                wsum += go_v * in_row[iw0 + ow * g.sw];
              }
              gw_c[ki * g.kw + kj] += wsum;
            }
          }
        }
      }
    }
    float* gin_dst = grads.grad_input.data.data() + (n * g.c * g.h * g.w);
    for (size_t i = 0; i < gin.size(); ++i)
      gin_dst[i] = static_cast<float>(gin[i]);
  }
  for (size_t i = 0; i < gw.size(); ++i)
    grads.grad_weight.data[i] = static_cast<float>(gw[i]);
  return grads;
}

inline Tensor avgpool2d_forward(const Tensor& input, pair2 kernel, pair2 stride) {
  if (input.rank() != 4) throw shape_error("avgpool2d: input must be [N,C,H,W]");
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel.h > h || kernel.w > w)
    throw shape_error("avgpool2d: window exceeds input");
  const int64_t oh = (h - kernel.h) / stride.h + 1;
  const int64_t ow = (w - kernel.w) / stride.w + 1;
  Tensor out({n, c, oh, ow});
  const double inv = 1.0 / (static_cast<double>(kernel.h) * kernel.w);
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const float* src = input.data.data() + nc * h * w;
    float* dst = out.data.data() + nc * oh * ow;
    for (int64_t i = 0; i < oh; ++i) {
      for (int64_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (int64_t ki = 0; ki < kernel.h; ++ki) {
          const float* row = src + (i * stride.h + ki) * w + j * stride.w;
          for (int64_t kj = 0; kj < kernel.w; ++kj) acc += row[kj];
        }
        dst[i * ow + j] = static_cast<float>(acc * inv);
      }
    }
  }
  return out;
}

inline Tensor avgpool2d_backward(const Tensor& grad_out, const Tensor& input, pair2 kernel,
                                 pair2 stride) {
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t oh = (h - kernel.h) / stride.h + 1;
  const int64_t ow = (w - kernel.w) / stride.w + 1;
  if (grad_out.shape != std::vector<int64_t>{n, c, oh, ow})
    throw shape_error("avgpool2d_backward: grad_out shape mismatch");
  Tensor grad_in(input.shape);
  const float inv = static_cast<float>(1.0 / (static_cast<double>(kernel.h) * kernel.w));
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const float* go = grad_out.data.data() + nc * oh * ow;
    float* gi = grad_in.data.data() + nc * h * w;
    for (int64_t i = 0; i < oh; ++i) {
      for (int64_t j = 0; j < ow; ++j) {
        const float v = go[i * ow + j] * inv;
        for (int64_t ki = 0; ki < kernel.h; ++ki) {
          float* row = gi + (i * stride.h + ki) * w + j * stride.w;
          for (int64_t kj = 0; kj < kernel.w; ++kj) row[kj] += v;
        }
      }
    }
  }
  return grad_in;
}

inline Tensor linear_forward(const Tensor& input, const Tensor& weight) {
  if (input.rank() != 2) throw shape_error("linear: input must be [N,D]");
  if (weight.rank() != 2) throw shape_error("linear: weight must be [M,D]");
  const int64_t n = input.dim(0), d = input.dim(1), m = weight.dim(0);
  if (weight.dim(1) != d)
    throw shape_error("linear: weight expects " + std::to_string(weight.dim(1)) +
                      " features, input has " + std::to_string(d));
  Tensor out({n, m});
  for (int64_t i = 0; i < n; ++i) {
    const float* x = input.data.data() + i * d;
    for (int64_t j = 0; j < m; ++j) {
      const float* wr = weight.data.data() + j * d;
      double acc = 0.0;
      for (int64_t t = 0; t < d; ++t) acc += static_cast<double>(x[t]) * wr[t];
      out.data[static_cast<size_t>(i * m + j)] = static_cast<float>(acc);
    }
  }
  return out;
}

struct linear_gradients {
  Tensor grad_input;
  Tensor grad_weight;
};

inline linear_gradients linear_backward(const Tensor& grad_out, const Tensor& input,
                                        const Tensor& weight) {
  const int64_t n = input.dim(0), d = input.dim(1), m = weight.dim(0);
  if (grad_out.shape != std::vector<int64_t>{n, m})
    throw shape_error("linear_backward: grad_out shape mismatch");
  linear_gradients grads{Tensor(input.shape), Tensor(weight.shape)};
  for (int64_t i = 0; i < n; ++i) {
    const float* go = grad_out.data.data() + i * m;
    float* gi = grads.grad_input.data.data() + i * d;
    for (int64_t t = 0; t < d; ++t) {
      double acc = 0.0;
      for (int64_t j = 0; j < m; ++j)
        acc += static_cast<double>(go[j]) * weight.data[static_cast<size_t>(j * d + t)];
      gi[t] = static_cast<float>(acc);
    }
  }
  std::vector<double> gw(weight.data.size(), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    const float* go = grad_out.data.data() + i * m;
    const float* x = input.data.data() + i * d;
    for (int64_t j = 0; j < m; ++j) {
      const double g = go[j];
      if (g == 0.0) continue;
      double* gwr = gw.data() + j * d;
      for (int64_t t = 0; t < d; ++t) gwr[t] += g * x[t];
    }
  }
  for (size_t i = 0; i < gw.size(); ++i)
    grads.grad_weight.data[i] = static_cast<float>(gw[i]);
  return grads;
}

}  // namespace synoptic
