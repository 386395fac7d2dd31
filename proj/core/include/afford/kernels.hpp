#pragma once

#include <vector>

#include "afford/tensor.hpp"

namespace afford {

/// A window of a feature plane in *global* coordinates. row0/col0 may be
/// negative and row0+rows / col0+cols may exceed the plane extent; cells
/// outside the plane read as zero (this is how zero padding is realized when
/// running valid convolutions on cropped windows).
struct Window {
  int row0 = 0, col0 = 0, rows = 0, cols = 0;
};

/// Geometry for 2x bilinear upsampling of a windowed source plane.
/// Sample centers follow the align-corners-false convention: output index i
/// samples source position (i+0.5)/2 - 0.5, clamped to the *global* source
/// extent. Output cells whose global index falls outside the upsampled plane
/// are zero (they only ever exist as padding for a following convolution).
struct UpsampleSpec {
  int src_global_h = 0, src_global_w = 0;  // full extent of the source plane
  int src_row0 = 0, src_col0 = 0;          // global offset of the source window
  int out_row0 = 0, out_col0 = 0;          // global offset of the output window
  int out_rows = 0, out_cols = 0;
};

inline int conv_out_size(int in, int k, int stride, int padding) {
  return (in + 2 * padding - k) / stride + 1;
}

namespace kernels {

// Convolution over [Cin,H,W] with square kernels [Cout,Cin,k,k].
// Forward/backward are im2col + GEMM; the nested-loop definition lives in the
// test suite as an independent oracle.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, int stride, int padding);
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernels, int stride, int padding, int in_h,
                             int in_w);
Tensor conv2d_backward_kernels(const Tensor& grad_out, const Tensor& input, int stride, int padding, int k);

Tensor add_channel_bias_forward(const Tensor& x, const Tensor& bias);
Tensor channel_bias_grad(const Tensor& grad_out);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);
Tensor sigmoid_forward(const Tensor& x);
Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output);

Tensor concat_channels_forward(const Tensor& a, const Tensor& b);
void concat_channels_backward(const Tensor& grad_out, int channels_a, Tensor& grad_a, Tensor& grad_b);

// Extract a window (zero-filled outside the plane) from a source tensor that
// itself covers the window (src_row0, src_col0, src.rows, src.cols) of the
// plane. plane_h/plane_w bound the true content; dst may extend past them.
Tensor crop_forward(const Tensor& src, int src_row0, int src_col0, const Window& dst, int plane_h, int plane_w);
Tensor crop_backward(const Tensor& grad_out, const std::vector<int>& src_shape, int src_row0, int src_col0,
                     const Window& dst, int plane_h, int plane_w);

Tensor upsample2x_forward(const Tensor& src, const UpsampleSpec& spec);
Tensor upsample2x_backward(const Tensor& grad_out, const std::vector<int>& src_shape, const UpsampleSpec& spec);

Tensor gather_pixel_forward(const Tensor& x, int row, int col);
Tensor gather_pixel_backward(const Tensor& grad_out, const std::vector<int>& src_shape, int row, int col);

// Binary cross-entropy with probability clamping; scale multiplies every term
// (callers use 1/batch to get a batch mean).
double bce_forward(const double* probs, const double* labels, std::size_t n, double clamp, double scale);
void bce_backward(double upstream, const double* probs, const double* labels, std::size_t n, double clamp,
                  double scale, double* grad_probs);

}  // namespace kernels
}  // namespace afford
