#pragma once

// Shared pieces of the x86 SIMD backends. Everything here is `static`: the
// header is included by translation units built with different -m flags, and
// each must keep its own copy (a merged `inline` copy could carry AVX-512
// encodings onto an AVX2-only CPU).
//
// Reductions are fixed at 4 lanes regardless of the register width of the
// including backend, because the scalar reference pins lane = position % 4.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include "salguide/kernels.hpp"
#include "salguide/threadpool.hpp"

namespace salguide::kernels::simd {

// Copies `nplanes` h-by-w planes into zero-bordered (h+2p)-by-(w+2p) planes.
// The destination is written in full, so it may start uninitialized.
static void pad_planes(const double* src, int64_t nplanes, int64_t h, int64_t w,
                       int64_t pad, double* dst) {
  const int64_t hp = h + 2 * pad, wp = w + 2 * pad;
  ThreadPool::instance().parallel_for(nplanes, [&](int64_t b, int64_t e) {
    for (int64_t p = b; p < e; ++p) {
      double* dp = dst + p * hp * wp;
      const double* sp = src + p * h * w;
      std::fill(dp, dp + pad * wp, 0.0);
      for (int64_t r = 0; r < h; ++r) {
        double* row = dp + (pad + r) * wp;
        std::fill(row, row + pad, 0.0);
        std::memcpy(row + pad, sp + r * w, static_cast<size_t>(w) * sizeof(double));
        std::fill(row + pad + w, row + wp, 0.0);
      }
      std::fill(dp + (pad + h) * wp, dp + hp * wp, 0.0);
    }
  });
}

static double fold4(__m256d acc) {
  alignas(32) double t[4];
  _mm256_store_pd(t, acc);
  return (t[0] + t[2]) + (t[1] + t[3]);
}

// dL/dW with the reference's 4-lane reduction. Requires stride 1 and
// ow % 4 == 0; callers fall back to the scalar kernel otherwise.
static void conv_dw_lanes4(const ConvDims& d, const double* dy, const double* x,
                           double* dw) {
  const int64_t hp = d.h + 2 * d.pad, wp = d.w + 2 * d.pad;
  std::unique_ptr<double[]> xp(new double[d.n * d.c_in * hp * wp]);
  pad_planes(x, d.n * d.c_in, d.h, d.w, d.pad, xp.get());

  ThreadPool::instance().parallel_for(d.c_out, [&](int64_t b, int64_t e) {
    for (int64_t co = b; co < e; ++co) {
      for (int64_t ci = 0; ci < d.c_in; ++ci) {
        if (d.k == 3) {
          // All nine tap positions at once: nine independent fma chains fed
          // by one dy load, enough ILP to hide fma latency.
          __m256d acc[9];
          for (auto& a : acc) a = _mm256_setzero_pd();
          for (int64_t n = 0; n < d.n; ++n) {
            const double* dyp = dy + (n * d.c_out + co) * d.oh * d.ow;
            const double* xpp = xp.get() + (n * d.c_in + ci) * hp * wp;
            for (int64_t oh = 0; oh < d.oh; ++oh) {
              const double* dyrow = dyp + oh * d.ow;
              const double* xr0 = xpp + (oh + 0) * wp;
              const double* xr1 = xpp + (oh + 1) * wp;
              const double* xr2 = xpp + (oh + 2) * wp;
              for (int64_t ow = 0; ow < d.ow; ow += 4) {
                const __m256d g = _mm256_loadu_pd(dyrow + ow);
                acc[0] = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr0 + ow + 0), acc[0]);
                acc[1] = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr0 + ow + 1), acc[1]);
                acc[2] = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr0 + ow + 2), acc[2]);
                acc[3] = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr1 + ow + 0), acc[3]);
                acc[4] = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr1 + ow + 1), acc[4]);
                acc[5] = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr1 + ow + 2), acc[5]);
                acc[6] = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr2 + ow + 0), acc[6]);
                acc[7] = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr2 + ow + 1), acc[7]);
                acc[8] = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr2 + ow + 2), acc[8]);
              }
            }
          }
          double* dwp = dw + (co * d.c_in + ci) * 9;
          for (int j = 0; j < 9; ++j) dwp[j] += fold4(acc[j]);
        } else {
          for (int64_t kh = 0; kh < d.k; ++kh) {
            for (int64_t kw = 0; kw < d.k; ++kw) {
              __m256d acc = _mm256_setzero_pd();
              for (int64_t n = 0; n < d.n; ++n) {
                const double* dyp = dy + (n * d.c_out + co) * d.oh * d.ow;
                const double* xpp = xp.get() + (n * d.c_in + ci) * hp * wp;
                for (int64_t oh = 0; oh < d.oh; ++oh) {
                  const double* dyrow = dyp + oh * d.ow;
                  const double* xrow = xpp + (oh + kh) * wp + kw;
                  for (int64_t ow = 0; ow < d.ow; ow += 4) {
                    acc = _mm256_fmadd_pd(_mm256_loadu_pd(dyrow + ow),
                                          _mm256_loadu_pd(xrow + ow), acc);
                  }
                }
              }
              dw[((co * d.c_in + ci) * d.k + kh) * d.k + kw] += fold4(acc);
            }
          }
        }
      }
    }
  });
}

// dL/db, 4-lane reduction over each output plane. Requires oh*ow % 4 == 0.
static void conv_db_lanes4(const ConvDims& d, const double* dy, double* db) {
  const int64_t plane = d.oh * d.ow;
  for (int64_t co = 0; co < d.c_out; ++co) {
    __m256d acc = _mm256_setzero_pd();
    for (int64_t n = 0; n < d.n; ++n) {
      const double* dyp = dy + (n * d.c_out + co) * plane;
      for (int64_t i = 0; i < plane; i += 4)
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(dyp + i));
    }
    db[co] += fold4(acc);
  }
}

constexpr int64_t kEltwiseGrain = 1 << 15;

static void relu_forward_v(const double* x, double* y, int64_t n) {
  auto body = [&](int64_t b, int64_t e) {
    const __m256d zero = _mm256_setzero_pd();
    int64_t i = b;
    for (; i + 4 <= e; i += 4)
      _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    for (; i < e; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  };
  if (n < kEltwiseGrain) body(0, n);
  else ThreadPool::instance().parallel_for(n, body);
}

static void relu_backward_v(const double* x, const double* dy, double* dx, int64_t n) {
  auto body = [&](int64_t b, int64_t e) {
    const __m256d zero = _mm256_setzero_pd();
    int64_t i = b;
    for (; i + 4 <= e; i += 4) {
      const __m256d keep = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
      const __m256d add = _mm256_and_pd(keep, _mm256_loadu_pd(dy + i));
      _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), add));
    }
    for (; i < e; ++i) dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
  };
  if (n < kEltwiseGrain) body(0, n);
  else ThreadPool::instance().parallel_for(n, body);
}

static void channel_mask_forward_v(int64_t n, int64_t c, int64_t hw, const double* x,
                                   const double* m, double* y) {
  for (int64_t i = 0; i < n; ++i) {
    const double* mi = m + i * hw;
    for (int64_t ch = 0; ch < c; ++ch) {
      const int64_t off = (i * c + ch) * hw;
      int64_t p = 0;
      for (; p + 4 <= hw; p += 4)
        _mm256_storeu_pd(y + off + p, _mm256_mul_pd(_mm256_loadu_pd(x + off + p),
                                                    _mm256_loadu_pd(mi + p)));
      for (; p < hw; ++p) y[off + p] = x[off + p] * mi[p];
    }
  }
}

static void channel_mask_backward_v(int64_t n, int64_t c, int64_t hw, const double* dy,
                                    const double* m, double* dx) {
  for (int64_t i = 0; i < n; ++i) {
    const double* mi = m + i * hw;
    for (int64_t ch = 0; ch < c; ++ch) {
      const int64_t off = (i * c + ch) * hw;
      int64_t p = 0;
      for (; p + 4 <= hw; p += 4) {
        const __m256d v = _mm256_fmadd_pd(_mm256_loadu_pd(dy + off + p),
                                          _mm256_loadu_pd(mi + p),
                                          _mm256_loadu_pd(dx + off + p));
        _mm256_storeu_pd(dx + off + p, v);
      }
      for (; p < hw; ++p) dx[off + p] = std::fma(dy[off + p], mi[p], dx[off + p]);
    }
  }
}

static void axpy_v(int64_t n, double a, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(a);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

static void accumulate_v(int64_t n, const double* x, double* y) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(x + i),
                                          _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += x[i];
}

// Scalar per-output conv on the padded input; used for vector-width tails.
// Tap order (ci, kh, kw) over the zero-padded plane is value-equal to the
// reference's bounds-checked loop.
static double conv_out_padded(const ConvDims& d, const double* xp, int64_t hp,
                              int64_t wp, const double* w, double bias,
                              int64_t n, int64_t co, int64_t oh, int64_t ow) {
  double acc = bias;
  const double* wc = w + co * d.c_in * d.k * d.k;
  for (int64_t ci = 0; ci < d.c_in; ++ci) {
    const double* xpp = xp + (n * d.c_in + ci) * hp * wp;
    const double* wk = wc + ci * d.k * d.k;
    for (int64_t kh = 0; kh < d.k; ++kh) {
      const double* xrow = xpp + (oh + kh) * wp + ow;
      for (int64_t kw = 0; kw < d.k; ++kw)
        acc = std::fma(xrow[kw], wk[kh * d.k + kw], acc);
    }
  }
  return acc;
}

// Scalar per-input-pixel conv gradient on the padded dy; tap order (co, kh, kw).
static double conv_dx_padded(const ConvDims& d, const double* dyp, int64_t php,
                             int64_t pwp, const double* w, double seed,
                             int64_t n, int64_t ci, int64_t ih, int64_t iw) {
  double acc = seed;
  for (int64_t co = 0; co < d.c_out; ++co) {
    const double* plane = dyp + (n * d.c_out + co) * php * pwp;
    const double* wk = w + (co * d.c_in + ci) * d.k * d.k;
    for (int64_t kh = 0; kh < d.k; ++kh) {
      const double* row = plane + (ih + d.k - 1 - kh) * pwp + iw;
      for (int64_t kw = 0; kw < d.k; ++kw)
        acc = std::fma(row[d.k - 1 - kw], wk[kh * d.k + kw], acc);
    }
  }
  return acc;
}

}  // namespace salguide::kernels::simd
