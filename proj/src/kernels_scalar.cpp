#include <cmath>

#include "salguide/errors.hpp"
#include "salguide/kernels.hpp"
#include "salguide/threadpool.hpp"

// Reference kernels. Every loop here is normative: SIMD backends must match
// these results exactly, so changes to operation order are breaking.

namespace salguide::kernels {

ConvDims make_conv_dims(int64_t n, int64_t c_in, int64_t h, int64_t w,
                        int64_t c_out, int64_t k, int64_t stride, int64_t pad) {
  if (n < 1 || c_in < 1 || h < 1 || w < 1 || c_out < 1)
    throw UsageError("conv2d: non-positive tensor dimension");
  if (k < 1 || stride < 1 || pad < 0)
    throw UsageError("conv2d: bad kernel geometry");
  if (h + 2 * pad < k || w + 2 * pad < k)
    throw UsageError("conv2d: kernel larger than padded input");
  ConvDims d;
  d.n = n; d.c_in = c_in; d.h = h; d.w = w;
  d.c_out = c_out; d.k = k; d.stride = stride; d.pad = pad;
  d.oh = (h + 2 * pad - k) / stride + 1;
  d.ow = (w + 2 * pad - k) / stride + 1;
  return d;
}

namespace {

void conv2d_forward_scalar(const ConvDims& d, const double* x, const double* w,
                           const double* bias, double* y) {
  // One job per (n, co) output plane; planes are disjoint.
  ThreadPool::instance().parallel_for(d.n * d.c_out, [&](int64_t b, int64_t e) {
    for (int64_t job = b; job < e; ++job) {
      const int64_t n = job / d.c_out, co = job % d.c_out;
      const double* xn = x + n * d.c_in * d.h * d.w;
      const double* wc = w + co * d.c_in * d.k * d.k;
      double* yp = y + (n * d.c_out + co) * d.oh * d.ow;
      for (int64_t oh = 0; oh < d.oh; ++oh) {
        for (int64_t ow = 0; ow < d.ow; ++ow) {
          double acc = bias[co];
          for (int64_t ci = 0; ci < d.c_in; ++ci) {
            const double* xc = xn + ci * d.h * d.w;
            const double* wk = wc + ci * d.k * d.k;
            for (int64_t kh = 0; kh < d.k; ++kh) {
              const int64_t ih = oh * d.stride - d.pad + kh;
              if (ih < 0 || ih >= d.h) continue;
              for (int64_t kw = 0; kw < d.k; ++kw) {
                const int64_t iw = ow * d.stride - d.pad + kw;
                if (iw < 0 || iw >= d.w) continue;
                acc = std::fma(xc[ih * d.w + iw], wk[kh * d.k + kw], acc);
              }
            }
          }
          yp[oh * d.ow + ow] = acc;
        }
      }
    }
  });
}

void conv2d_backward_input_scalar(const ConvDims& d, const double* dy, const double* w,
                                  double* dx) {
  ThreadPool::instance().parallel_for(d.n * d.c_in, [&](int64_t b, int64_t e) {
    for (int64_t job = b; job < e; ++job) {
      const int64_t n = job / d.c_in, ci = job % d.c_in;
      double* dxp = dx + (n * d.c_in + ci) * d.h * d.w;
      const double* dyn = dy + n * d.c_out * d.oh * d.ow;
      for (int64_t ih = 0; ih < d.h; ++ih) {
        for (int64_t iw = 0; iw < d.w; ++iw) {
          double acc = dxp[ih * d.w + iw];
          for (int64_t co = 0; co < d.c_out; ++co) {
            const double* dyc = dyn + co * d.oh * d.ow;
            const double* wk = w + (co * d.c_in + ci) * d.k * d.k;
            for (int64_t kh = 0; kh < d.k; ++kh) {
              const int64_t num_h = ih + d.pad - kh;
              if (num_h % d.stride != 0) continue;
              const int64_t oh = num_h / d.stride;
              if (oh < 0 || oh >= d.oh) continue;
              for (int64_t kw = 0; kw < d.k; ++kw) {
                const int64_t num_w = iw + d.pad - kw;
                if (num_w % d.stride != 0) continue;
                const int64_t ow = num_w / d.stride;
                if (ow < 0 || ow >= d.ow) continue;
                acc = std::fma(dyc[oh * d.ow + ow], wk[kh * d.k + kw], acc);
              }
            }
          }
          dxp[ih * d.w + iw] = acc;
        }
      }
    }
  });
}

void conv2d_backward_weights_scalar(const ConvDims& d, const double* dy, const double* x,
                                    double* dw) {
  ThreadPool::instance().parallel_for(d.c_out, [&](int64_t b, int64_t e) {
    for (int64_t co = b; co < e; ++co) {
      for (int64_t ci = 0; ci < d.c_in; ++ci) {
        for (int64_t kh = 0; kh < d.k; ++kh) {
          for (int64_t kw = 0; kw < d.k; ++kw) {
            // Four interleaved partials, lane = ow % 4 (phase restarts each
            // row), carried across rows and batch items.
            double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
            for (int64_t n = 0; n < d.n; ++n) {
              const double* dyc = dy + (n * d.c_out + co) * d.oh * d.ow;
              const double* xc = x + (n * d.c_in + ci) * d.h * d.w;
              for (int64_t oh = 0; oh < d.oh; ++oh) {
                const int64_t ih = oh * d.stride - d.pad + kh;
                if (ih < 0 || ih >= d.h) continue;
                for (int64_t ow = 0; ow < d.ow; ++ow) {
                  const int64_t iw = ow * d.stride - d.pad + kw;
                  if (iw < 0 || iw >= d.w) continue;
                  const double g = dyc[oh * d.ow + ow], v = xc[ih * d.w + iw];
                  switch (ow & 3) {
                    case 0: p0 = std::fma(g, v, p0); break;
                    case 1: p1 = std::fma(g, v, p1); break;
                    case 2: p2 = std::fma(g, v, p2); break;
                    default: p3 = std::fma(g, v, p3); break;
                  }
                }
              }
            }
            dw[((co * d.c_in + ci) * d.k + kh) * d.k + kw] += (p0 + p2) + (p1 + p3);
          }
        }
      }
    }
  });
}

void conv2d_backward_bias_scalar(const ConvDims& d, const double* dy, double* db) {
  const int64_t plane = d.oh * d.ow;
  for (int64_t co = 0; co < d.c_out; ++co) {
    double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
    for (int64_t n = 0; n < d.n; ++n) {
      const double* dyc = dy + (n * d.c_out + co) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        switch (i & 3) {
          case 0: p0 += dyc[i]; break;
          case 1: p1 += dyc[i]; break;
          case 2: p2 += dyc[i]; break;
          default: p3 += dyc[i]; break;
        }
      }
    }
    db[co] += (p0 + p2) + (p1 + p3);
  }
}

constexpr int64_t kEltwiseGrain = 1 << 15;

void relu_forward_scalar(const double* x, double* y, int64_t n) {
  auto body = [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  };
  if (n < kEltwiseGrain) body(0, n);
  else ThreadPool::instance().parallel_for(n, body);
}

void relu_backward_scalar(const double* x, const double* dy, double* dx, int64_t n) {
  auto body = [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
  };
  if (n < kEltwiseGrain) body(0, n);
  else ThreadPool::instance().parallel_for(n, body);
}

void channel_mask_forward_scalar(int64_t n, int64_t c, int64_t hw, const double* x,
                                 const double* m, double* y) {
  for (int64_t i = 0; i < n; ++i) {
    const double* mi = m + i * hw;
    for (int64_t ch = 0; ch < c; ++ch) {
      const int64_t off = (i * c + ch) * hw;
      for (int64_t p = 0; p < hw; ++p) y[off + p] = x[off + p] * mi[p];
    }
  }
}

void channel_mask_backward_scalar(int64_t n, int64_t c, int64_t hw, const double* dy,
                                  const double* m, double* dx) {
  for (int64_t i = 0; i < n; ++i) {
    const double* mi = m + i * hw;
    for (int64_t ch = 0; ch < c; ++ch) {
      const int64_t off = (i * c + ch) * hw;
      for (int64_t p = 0; p < hw; ++p) dx[off + p] = std::fma(dy[off + p], mi[p], dx[off + p]);
    }
  }
}

void axpy_scalar(int64_t n, double a, const double* x, double* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void accumulate_scalar(int64_t n, const double* x, double* y) {
  for (int64_t i = 0; i < n; ++i) y[i] += x[i];
}

}  // namespace

const Backend& scalar() {
  static const Backend backend = {
      "scalar",
      conv2d_forward_scalar,
      conv2d_backward_input_scalar,
      conv2d_backward_weights_scalar,
      conv2d_backward_bias_scalar,
      relu_forward_scalar,
      relu_backward_scalar,
      channel_mask_forward_scalar,
      channel_mask_backward_scalar,
      axpy_scalar,
      accumulate_scalar,
  };
  return backend;
}

}  // namespace salguide::kernels
