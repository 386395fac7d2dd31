#include "afford/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <stdexcept>

// OpenBLAS spawns worker threads per GEMM by default; our parallelism is at
// the run level, so pin BLAS to one thread if the symbol is present.
extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace afford::kernels {

namespace {

std::once_flag g_blas_init;

void blas_init() {
  std::call_once(g_blas_init, [] {
    if (openblas_set_num_threads) openblas_set_num_threads(1);
  });
}

thread_local std::vector<double> t_col;  // im2col scratch, reused across calls

void check_conv_shapes(const Tensor& input, const Tensor& kernels, int stride, int padding) {
  if (input.rank() != 3) throw std::invalid_argument("conv2d: input must be [C,H,W], got " +
                                                     Tensor::shape_string(input.shape()));
  if (kernels.rank() != 4) throw std::invalid_argument("conv2d: kernels must be [Cout,Cin,k,k], got " +
                                                       Tensor::shape_string(kernels.shape()));
  if (kernels.dim(2) != kernels.dim(3)) throw std::invalid_argument("conv2d: kernels must be square");
  if (input.dim(0) != kernels.dim(1))
    throw std::invalid_argument("conv2d: input channels " + std::to_string(input.dim(0)) +
                                " do not match kernel C_in " + std::to_string(kernels.dim(1)));
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
  const int k = kernels.dim(2);
  if (input.dim(1) + 2 * padding < k || input.dim(2) + 2 * padding < k)
    throw std::invalid_argument("conv2d: padded input " + Tensor::shape_string(input.shape()) +
                                " smaller than kernel size " + std::to_string(k));
}

// col[(ci*k+ky)*k+kx][oh*Wo+ow] = input[ci][oh*s+ky-p][ow*s+kx-p] (0 outside)
void im2col(const Tensor& input, int k, int stride, int padding, int out_h, int out_w, std::vector<double>& col) {
  const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
  col.assign(static_cast<std::size_t>(cin) * k * k * n, 0.0);
  for (int ci = 0; ci < cin; ++ci) {
    const double* plane = input.data() + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* dst = col.data() + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * n;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride + ky - padding;
          if (ih < 0 || ih >= h) continue;
          const double* src_row = plane + static_cast<std::size_t>(ih) * w;
          double* dst_row = dst + static_cast<std::size_t>(oh) * out_w;
          const int iw0 = kx - padding;
          int ow = 0, iw = iw0;
          if (iw < 0) {
            ow = (-iw + stride - 1) / stride;
            iw = iw0 + ow * stride;
          }
          if (stride == 1) {
            const int count = std::min(out_w, w - iw0) - ow;
            if (count > 0) std::copy_n(src_row + iw, count, dst_row + ow);
          } else {
            for (; ow < out_w && iw < w; ++ow, iw += stride) dst_row[ow] = src_row[iw];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, int stride, int padding) {
  blas_init();
  check_conv_shapes(input, kernels, stride, padding);
  const int cout = kernels.dim(0), k = kernels.dim(2);
  const int out_h = conv_out_size(input.dim(1), k, stride, padding);
  const int out_w = conv_out_size(input.dim(2), k, stride, padding);
  const int kk = input.dim(0) * k * k;
  const int n = out_h * out_w;
  im2col(input, k, stride, padding, out_h, out_w, t_col);
  Tensor out({cout, out_h, out_w});
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, cout, n, kk, 1.0, kernels.data(), kk, t_col.data(), n, 0.0,
              out.data(), n);
  return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernels, int stride, int padding, int in_h,
                             int in_w) {
  blas_init();
  const int cout = kernels.dim(0), cin = kernels.dim(1), k = kernels.dim(2);
  const int out_h = grad_out.dim(1), out_w = grad_out.dim(2);
  const int kk = cin * k * k;
  const int n = out_h * out_w;
  // col_grad = kernels^T [kk x cout] * grad_out [cout x n]
  std::vector<double> col_grad(static_cast<std::size_t>(kk) * n);
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kk, n, cout, 1.0, kernels.data(), kk, grad_out.data(), n, 0.0,
              col_grad.data(), n);
  // col2im scatter-add
  Tensor grad_in({cin, in_h, in_w});
  for (int ci = 0; ci < cin; ++ci) {
    double* plane = grad_in.data() + static_cast<std::size_t>(ci) * in_h * in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* src = col_grad.data() + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * n;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride + ky - padding;
          if (ih < 0 || ih >= in_h) continue;
          double* dst_row = plane + static_cast<std::size_t>(ih) * in_w;
          const double* src_row = src + static_cast<std::size_t>(oh) * out_w;
          const int iw0 = kx - padding;
          int ow = 0, iw = iw0;
          if (iw < 0) {
            ow = (-iw + stride - 1) / stride;
            iw = iw0 + ow * stride;
          }
          for (; ow < out_w && iw < in_w; ++ow, iw += stride) dst_row[iw] += src_row[ow];
        }
      }
    }
  }
  return grad_in;
}

Tensor conv2d_backward_kernels(const Tensor& grad_out, const Tensor& input, int stride, int padding, int k) {
  blas_init();
  const int cout = grad_out.dim(0);
  const int out_h = grad_out.dim(1), out_w = grad_out.dim(2);
  const int cin = input.dim(0);
  const int kk = cin * k * k;
  const int n = out_h * out_w;
  im2col(input, k, stride, padding, out_h, out_w, t_col);
  // grad_kernels [cout x kk] = grad_out [cout x n] * col^T [n x kk]
  Tensor grad_k({cout, cin, k, k});
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, cout, kk, n, 1.0, grad_out.data(), n, t_col.data(), n, 0.0,
              grad_k.data(), kk);
  return grad_k;
}

Tensor add_channel_bias_forward(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 3 || bias.rank() != 1 || bias.dim(0) != x.dim(0))
    throw std::invalid_argument("add_channel_bias: bias " + Tensor::shape_string(bias.shape()) +
                                " incompatible with " + Tensor::shape_string(x.shape()));
  Tensor out = x;
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  for (int c = 0; c < x.dim(0); ++c) {
    const double b = bias[c];
    double* p = out.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] += b;
  }
  return out;
}

Tensor channel_bias_grad(const Tensor& grad_out) {
  Tensor g({grad_out.dim(0)});
  const std::size_t plane = static_cast<std::size_t>(grad_out.dim(1)) * grad_out.dim(2);
  for (int c = 0; c < grad_out.dim(0); ++c) {
    const double* p = grad_out.data() + c * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    g[c] = s;
  }
  return g;
}

Tensor relu_forward(const Tensor& x) {
  Tensor out = x;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
  Tensor g = grad_out;
  for (std::int64_t i = 0; i < g.size(); ++i)
    if (input[i] <= 0.0) g[i] = 0.0;
  return g;
}

Tensor sigmoid_forward(const Tensor& x) {
  Tensor out = x;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  return out;
}

Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output) {
  Tensor g = grad_out;
  for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= output[i] * (1.0 - output[i]);
  return g;
}

Tensor concat_channels_forward(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw std::invalid_argument("concat_channels: spatial dims must match, got " +
                                Tensor::shape_string(a.shape()) + " and " + Tensor::shape_string(b.shape()));
  Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

void concat_channels_backward(const Tensor& grad_out, int channels_a, Tensor& grad_a, Tensor& grad_b) {
  const int h = grad_out.dim(1), w = grad_out.dim(2);
  grad_a = Tensor({channels_a, h, w});
  grad_b = Tensor({grad_out.dim(0) - channels_a, h, w});
  std::copy(grad_out.data(), grad_out.data() + grad_a.size(), grad_a.data());
  std::copy(grad_out.data() + grad_a.size(), grad_out.data() + grad_out.size(), grad_b.data());
}

Tensor crop_forward(const Tensor& src, int src_row0, int src_col0, const Window& dst, int plane_h, int plane_w) {
  const int c = src.dim(0), sh = src.dim(1), sw = src.dim(2);
  Tensor out({c, dst.rows, dst.cols});
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < dst.rows; ++i) {
      const int gr = dst.row0 + i;
      if (gr < 0 || gr >= plane_h) continue;  // stays zero: conv padding
      const int sr = gr - src_row0;
      if (sr < 0 || sr >= sh) throw std::logic_error("crop_forward: source window does not cover request");
      for (int j = 0; j < dst.cols; ++j) {
        const int gc = dst.col0 + j;
        if (gc < 0 || gc >= plane_w) continue;
        const int sc = gc - src_col0;
        if (sc < 0 || sc >= sw) throw std::logic_error("crop_forward: source window does not cover request");
        out.at(ch, i, j) = src.at(ch, sr, sc);
      }
    }
  }
  return out;
}

Tensor crop_backward(const Tensor& grad_out, const std::vector<int>& src_shape, int src_row0, int src_col0,
                     const Window& dst, int plane_h, int plane_w) {
  Tensor g(src_shape);
  const int c = src_shape[0];
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < dst.rows; ++i) {
      const int gr = dst.row0 + i;
      if (gr < 0 || gr >= plane_h) continue;
      const int sr = gr - src_row0;
      for (int j = 0; j < dst.cols; ++j) {
        const int gc = dst.col0 + j;
        if (gc < 0 || gc >= plane_w) continue;
        g.at(ch, sr, gc - src_col0) += grad_out.at(ch, i, j);
      }
    }
  }
  return g;
}

namespace {

struct Tap {
  int lo = 0;      // source index (window-local) of the floor sample
  double w_hi = 0; // weight of the +1 sample (clamped to the global extent)
  bool in_plane = false;
};

// Per-axis sampling taps for 2x bilinear upsampling of a windowed plane.
std::vector<Tap> upsample_taps(int out0, int out_n, int src_global, int src0, int src_window) {
  std::vector<Tap> taps(static_cast<std::size_t>(out_n));
  for (int i = 0; i < out_n; ++i) {
    const int g = out0 + i;
    if (g < 0 || g >= 2 * src_global) continue;  // padding cell, stays zero
    double pos = (g + 0.5) / 2.0 - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src_global - 1));
    int lo = static_cast<int>(std::floor(pos));
    double frac = pos - lo;
    if (lo + 1 > src_global - 1) frac = 0.0;  // high tap clamped at the plane edge
    const int local = lo - src0;
    const int hi_needed = frac > 0.0 ? local + 1 : local;
    if (local < 0 || hi_needed >= src_window)
      throw std::logic_error("upsample2x: source window does not cover request");
    taps[static_cast<std::size_t>(i)] = {local, frac, true};
  }
  return taps;
}

}  // namespace

Tensor upsample2x_forward(const Tensor& src, const UpsampleSpec& spec) {
  const int c = src.dim(0), sh = src.dim(1), sw = src.dim(2);
  const auto row_taps = upsample_taps(spec.out_row0, spec.out_rows, spec.src_global_h, spec.src_row0, sh);
  const auto col_taps = upsample_taps(spec.out_col0, spec.out_cols, spec.src_global_w, spec.src_col0, sw);
  Tensor out({c, spec.out_rows, spec.out_cols});
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < spec.out_rows; ++i) {
      const Tap& rt = row_taps[static_cast<std::size_t>(i)];
      if (!rt.in_plane) continue;
      const int r1 = rt.w_hi > 0.0 ? rt.lo + 1 : rt.lo;
      for (int j = 0; j < spec.out_cols; ++j) {
        const Tap& ct = col_taps[static_cast<std::size_t>(j)];
        if (!ct.in_plane) continue;
        const int c1 = ct.w_hi > 0.0 ? ct.lo + 1 : ct.lo;
        const double v00 = src.at(ch, rt.lo, ct.lo), v01 = src.at(ch, rt.lo, c1);
        const double v10 = src.at(ch, r1, ct.lo), v11 = src.at(ch, r1, c1);
        const double top = v00 * (1.0 - ct.w_hi) + v01 * ct.w_hi;
        const double bot = v10 * (1.0 - ct.w_hi) + v11 * ct.w_hi;
        out.at(ch, i, j) = top * (1.0 - rt.w_hi) + bot * rt.w_hi;
      }
    }
  }
  return out;
}

Tensor upsample2x_backward(const Tensor& grad_out, const std::vector<int>& src_shape, const UpsampleSpec& spec) {
  const int c = src_shape[0], sh = src_shape[1], sw = src_shape[2];
  const auto row_taps = upsample_taps(spec.out_row0, spec.out_rows, spec.src_global_h, spec.src_row0, sh);
  const auto col_taps = upsample_taps(spec.out_col0, spec.out_cols, spec.src_global_w, spec.src_col0, sw);
  Tensor g(src_shape);
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < spec.out_rows; ++i) {
      const Tap& rt = row_taps[static_cast<std::size_t>(i)];
      if (!rt.in_plane) continue;
      const int r1 = rt.w_hi > 0.0 ? rt.lo + 1 : rt.lo;
      for (int j = 0; j < spec.out_cols; ++j) {
        const Tap& ct = col_taps[static_cast<std::size_t>(j)];
        if (!ct.in_plane) continue;
        const int c1 = ct.w_hi > 0.0 ? ct.lo + 1 : ct.lo;
        const double gv = grad_out.at(ch, i, j);
        g.at(ch, rt.lo, ct.lo) += gv * (1.0 - rt.w_hi) * (1.0 - ct.w_hi);
        g.at(ch, rt.lo, c1) += gv * (1.0 - rt.w_hi) * ct.w_hi;
        g.at(ch, r1, ct.lo) += gv * rt.w_hi * (1.0 - ct.w_hi);
        g.at(ch, r1, c1) += gv * rt.w_hi * ct.w_hi;
      }
    }
  }
  return g;
}

Tensor gather_pixel_forward(const Tensor& x, int row, int col) {
  if (row < 0 || row >= x.dim(1) || col < 0 || col >= x.dim(2))
    throw std::invalid_argument("gather_pixel: position out of range");
  Tensor out({x.dim(0)});
  for (int c = 0; c < x.dim(0); ++c) out[c] = x.at(c, row, col);
  return out;
}

Tensor gather_pixel_backward(const Tensor& grad_out, const std::vector<int>& src_shape, int row, int col) {
  Tensor g(src_shape);
  for (int c = 0; c < src_shape[0]; ++c) g.at(c, row, col) = grad_out[c];
  return g;
}

double bce_forward(const double* probs, const double* labels, std::size_t n, double clamp, double scale) {
  if (n == 0) throw std::invalid_argument("bce: empty batch");
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(probs[i], clamp, 1.0 - clamp);
    loss += -labels[i] * std::log(p) - (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return loss * scale;
}

void bce_backward(double upstream, const double* probs, const double* labels, std::size_t n, double clamp,
                  double scale, double* grad_probs) {
  for (std::size_t i = 0; i < n; ++i) {
    if (probs[i] <= clamp || probs[i] >= 1.0 - clamp) {
      grad_probs[i] = 0.0;  // clamped region: flat
      continue;
    }
    grad_probs[i] = upstream * scale * (probs[i] - labels[i]) / (probs[i] * (1.0 - probs[i]));
  }
}

}  // namespace kernels
}  // namespace afford
