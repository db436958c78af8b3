#pragma once

#include <cstdint>
#include <string>

namespace salguide::kernels {

// Hot numeric loops, dispatched at runtime between a scalar reference and
// SIMD variants. The scalar bodies in kernels_scalar.cpp *define* the
// semantics — operation order, fma placement, reduction shape — and every
// backend must reproduce their results exactly (operator==, all inputs).
//
// Conventions shared by all conv kernels:
//  * tensors are dense row-major, x: N x C x H x W, w: Co x Ci x K x K
//  * cross-correlation (no kernel flip), square kernel, symmetric zero pad
//  * each output element accumulates taps in (ci, kh, kw) order via fma,
//    seeded with the bias
//  * weight/bias gradients reduce through four interleaved partial sums
//    (lane = position % 4, folded as (p0+p2) + (p1+p3)) so that 4-wide SIMD
//    reductions match the reference bit for bit
//
// Backends may only deviate by substituting zero-padded scratch reads for
// skipped out-of-range taps; with finite inputs and +0.0 padding this cannot
// change any accumulator value.

struct ConvDims {
  int64_t n = 0, c_in = 0, h = 0, w = 0;  // input
  int64_t c_out = 0, k = 0;               // kernel
  int64_t stride = 1, pad = 0;
  int64_t oh = 0, ow = 0;                 // output
};

// Throws UsageError on inconsistent geometry.
ConvDims make_conv_dims(int64_t n, int64_t c_in, int64_t h, int64_t w,
                        int64_t c_out, int64_t k, int64_t stride, int64_t pad);

struct Backend {
  const char* name;
  void (*conv2d_forward)(const ConvDims&, const double* x, const double* w,
                         const double* bias, double* y);
  // All backward kernels accumulate (+=) into their output buffers.
  void (*conv2d_backward_input)(const ConvDims&, const double* dy, const double* w,
                                double* dx);
  void (*conv2d_backward_weights)(const ConvDims&, const double* dy, const double* x,
                                  double* dw);
  void (*conv2d_backward_bias)(const ConvDims&, const double* dy, double* db);
  void (*relu_forward)(const double* x, double* y, int64_t n);
  void (*relu_backward)(const double* x, const double* dy, double* dx, int64_t n);
  // y[i][c][p] = x[i][c][p] * m[i][p]: per-example spatial mask broadcast
  // across channels. backward: dx += dy * m (the mask gets no gradient).
  void (*channel_mask_forward)(int64_t n, int64_t c, int64_t hw, const double* x,
                               const double* m, double* y);
  void (*channel_mask_backward)(int64_t n, int64_t c, int64_t hw, const double* dy,
                                const double* m, double* dx);
  void (*axpy)(int64_t n, double a, const double* x, double* y);  // y += a*x (fma)
  void (*accumulate)(int64_t n, const double* x, double* y);      // y += x
};

const Backend& scalar();
const Backend* avx2();    // nullptr if unsupported by build or CPU
const Backend* avx512();  // nullptr if unsupported by build or CPU

// Active backend. Default: best supported, overridable with
// SALGUIDE_KERNELS = auto | scalar | avx2 | avx512.
const Backend& active();
// Programmatic override; throws UsageError for unknown or unsupported names.
void select(const std::string& name);

}  // namespace salguide::kernels
