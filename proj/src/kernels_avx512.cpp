#include "kernels_simd_common.hpp"

// AVX-512 backend: 8-wide forward/dX (lanes are independent outputs, so the
// wider registers cannot change results). Reductions and elementwise ops come
// from the shared 4-lane code — dW/db lane order is pinned at 4.

namespace salguide::kernels {

namespace {

using simd::conv_dx_padded;
using simd::conv_out_padded;

void conv2d_forward_avx512(const ConvDims& d, const double* x, const double* w,
                           const double* bias, double* y) {
  if (d.stride != 1) {
    scalar().conv2d_forward(d, x, w, bias, y);
    return;
  }
  const int64_t hp = d.h + 2 * d.pad, wp = d.w + 2 * d.pad;
  std::unique_ptr<double[]> xp(new double[d.n * d.c_in * hp * wp]);
  simd::pad_planes(x, d.n * d.c_in, d.h, d.w, d.pad, xp.get());

  const int64_t kk = d.k * d.k;
  const int64_t nblk = (d.c_out + 3) / 4;
  ThreadPool::instance().parallel_for(d.n * nblk, [&](int64_t jb, int64_t je) {
    for (int64_t job = jb; job < je; ++job) {
      const int64_t n = job / nblk;
      const int64_t co0 = (job % nblk) * 4;
      const int64_t cnt = std::min<int64_t>(4, d.c_out - co0);
      const double* xn = xp.get() + n * d.c_in * hp * wp;
      for (int64_t oh = 0; oh < d.oh; ++oh) {
        int64_t ow = 0;
        if (cnt == 4) {
          // 4 channels x 16 positions: every weight broadcast feeds two fmas,
          // so the loop runs against the fma ports instead of the load ports.
          for (; ow + 16 <= d.ow; ow += 16) {
            __m512d a00 = _mm512_set1_pd(bias[co0 + 0]), a01 = a00;
            __m512d a10 = _mm512_set1_pd(bias[co0 + 1]), a11 = a10;
            __m512d a20 = _mm512_set1_pd(bias[co0 + 2]), a21 = a20;
            __m512d a30 = _mm512_set1_pd(bias[co0 + 3]), a31 = a30;
            for (int64_t ci = 0; ci < d.c_in; ++ci) {
              const double* xc = xn + ci * hp * wp;
              const double* w0 = w + ((co0 + 0) * d.c_in + ci) * kk;
              const double* w1 = w + ((co0 + 1) * d.c_in + ci) * kk;
              const double* w2 = w + ((co0 + 2) * d.c_in + ci) * kk;
              const double* w3 = w + ((co0 + 3) * d.c_in + ci) * kk;
              for (int64_t kh = 0; kh < d.k; ++kh) {
                const double* xrow = xc + (oh + kh) * wp + ow;
                for (int64_t kw = 0; kw < d.k; ++kw) {
                  const __m512d xv0 = _mm512_loadu_pd(xrow + kw);
                  const __m512d xv1 = _mm512_loadu_pd(xrow + kw + 8);
                  const int64_t wi = kh * d.k + kw;
                  const __m512d wv0 = _mm512_set1_pd(w0[wi]);
                  a00 = _mm512_fmadd_pd(wv0, xv0, a00);
                  a01 = _mm512_fmadd_pd(wv0, xv1, a01);
                  const __m512d wv1 = _mm512_set1_pd(w1[wi]);
                  a10 = _mm512_fmadd_pd(wv1, xv0, a10);
                  a11 = _mm512_fmadd_pd(wv1, xv1, a11);
                  const __m512d wv2 = _mm512_set1_pd(w2[wi]);
                  a20 = _mm512_fmadd_pd(wv2, xv0, a20);
                  a21 = _mm512_fmadd_pd(wv2, xv1, a21);
                  const __m512d wv3 = _mm512_set1_pd(w3[wi]);
                  a30 = _mm512_fmadd_pd(wv3, xv0, a30);
                  a31 = _mm512_fmadd_pd(wv3, xv1, a31);
                }
              }
            }
            const int64_t plane = d.oh * d.ow;
            const int64_t base = (n * d.c_out + co0) * plane + oh * d.ow + ow;
            _mm512_storeu_pd(y + base, a00);
            _mm512_storeu_pd(y + base + 8, a01);
            _mm512_storeu_pd(y + base + plane, a10);
            _mm512_storeu_pd(y + base + plane + 8, a11);
            _mm512_storeu_pd(y + base + 2 * plane, a20);
            _mm512_storeu_pd(y + base + 2 * plane + 8, a21);
            _mm512_storeu_pd(y + base + 3 * plane, a30);
            _mm512_storeu_pd(y + base + 3 * plane + 8, a31);
          }
          for (; ow + 8 <= d.ow; ow += 8) {
            __m512d a0 = _mm512_set1_pd(bias[co0 + 0]);
            __m512d a1 = _mm512_set1_pd(bias[co0 + 1]);
            __m512d a2 = _mm512_set1_pd(bias[co0 + 2]);
            __m512d a3 = _mm512_set1_pd(bias[co0 + 3]);
            for (int64_t ci = 0; ci < d.c_in; ++ci) {
              const double* xc = xn + ci * hp * wp;
              const double* w0 = w + ((co0 + 0) * d.c_in + ci) * kk;
              const double* w1 = w + ((co0 + 1) * d.c_in + ci) * kk;
              const double* w2 = w + ((co0 + 2) * d.c_in + ci) * kk;
              const double* w3 = w + ((co0 + 3) * d.c_in + ci) * kk;
              for (int64_t kh = 0; kh < d.k; ++kh) {
                const double* xrow = xc + (oh + kh) * wp + ow;
                for (int64_t kw = 0; kw < d.k; ++kw) {
                  const __m512d xv = _mm512_loadu_pd(xrow + kw);
                  const int64_t wi = kh * d.k + kw;
                  a0 = _mm512_fmadd_pd(_mm512_set1_pd(w0[wi]), xv, a0);
                  a1 = _mm512_fmadd_pd(_mm512_set1_pd(w1[wi]), xv, a1);
                  a2 = _mm512_fmadd_pd(_mm512_set1_pd(w2[wi]), xv, a2);
                  a3 = _mm512_fmadd_pd(_mm512_set1_pd(w3[wi]), xv, a3);
                }
              }
            }
            const int64_t base = (n * d.c_out + co0) * d.oh * d.ow + oh * d.ow + ow;
            _mm512_storeu_pd(y + base, a0);
            _mm512_storeu_pd(y + base + d.oh * d.ow, a1);
            _mm512_storeu_pd(y + base + 2 * d.oh * d.ow, a2);
            _mm512_storeu_pd(y + base + 3 * d.oh * d.ow, a3);
          }
        } else {
          for (; ow + 8 <= d.ow; ow += 8) {
            for (int64_t j = 0; j < cnt; ++j) {
              __m512d acc = _mm512_set1_pd(bias[co0 + j]);
              for (int64_t ci = 0; ci < d.c_in; ++ci) {
                const double* xc = xn + ci * hp * wp;
                const double* wj = w + ((co0 + j) * d.c_in + ci) * kk;
                for (int64_t kh = 0; kh < d.k; ++kh) {
                  const double* xrow = xc + (oh + kh) * wp + ow;
                  for (int64_t kw = 0; kw < d.k; ++kw)
                    acc = _mm512_fmadd_pd(_mm512_set1_pd(wj[kh * d.k + kw]),
                                          _mm512_loadu_pd(xrow + kw), acc);
                }
              }
              _mm512_storeu_pd(
                  y + ((n * d.c_out + co0 + j) * d.oh + oh) * d.ow + ow, acc);
            }
          }
        }
        for (; ow < d.ow; ++ow)
          for (int64_t j = 0; j < cnt; ++j)
            y[((n * d.c_out + co0 + j) * d.oh + oh) * d.ow + ow] =
                conv_out_padded(d, xp.get(), hp, wp, w, bias[co0 + j], n, co0 + j,
                                oh, ow);
      }
    }
  });
}

void conv2d_backward_input_avx512(const ConvDims& d, const double* dy, const double* w,
                                  double* dx) {
  if (d.stride != 1 || d.pad > d.k - 1) {
    scalar().conv2d_backward_input(d, dy, w, dx);
    return;
  }
  const int64_t padl = d.k - 1 - d.pad;
  const int64_t php = d.h + d.k - 1, pwp = d.w + d.k - 1;
  std::unique_ptr<double[]> dyp(new double[d.n * d.c_out * php * pwp]);
  simd::pad_planes(dy, d.n * d.c_out, d.oh, d.ow, padl, dyp.get());

  // Mirror of the forward layout with c_in and c_out swapped: quads of input
  // channels share each dy load, so the loop is fma-bound, not load-bound.
  const int64_t kk = d.k * d.k;
  const int64_t plane = d.h * d.w;
  const int64_t nblk = (d.c_in + 3) / 4;
  ThreadPool::instance().parallel_for(d.n * nblk, [&](int64_t jb, int64_t je) {
    for (int64_t job = jb; job < je; ++job) {
      const int64_t n = job / nblk;
      const int64_t ci0 = (job % nblk) * 4;
      const int64_t cnt = std::min<int64_t>(4, d.c_in - ci0);
      const double* dyn = dyp.get() + n * d.c_out * php * pwp;
      if (cnt == 4) {
        for (int64_t ih = 0; ih < d.h; ++ih) {
          int64_t iw = 0;
          // 4 input channels x 16 positions, same shape as the forward tile.
          for (; iw + 16 <= d.w; iw += 16) {
            double* out = dx + (n * d.c_in + ci0) * plane + ih * d.w + iw;
            __m512d a00 = _mm512_loadu_pd(out);
            __m512d a01 = _mm512_loadu_pd(out + 8);
            __m512d a10 = _mm512_loadu_pd(out + plane);
            __m512d a11 = _mm512_loadu_pd(out + plane + 8);
            __m512d a20 = _mm512_loadu_pd(out + 2 * plane);
            __m512d a21 = _mm512_loadu_pd(out + 2 * plane + 8);
            __m512d a30 = _mm512_loadu_pd(out + 3 * plane);
            __m512d a31 = _mm512_loadu_pd(out + 3 * plane + 8);
            for (int64_t co = 0; co < d.c_out; ++co) {
              const double* dyc = dyn + co * php * pwp;
              const double* w0 = w + (co * d.c_in + ci0) * kk;
              for (int64_t kh = 0; kh < d.k; ++kh) {
                const double* row = dyc + (ih + d.k - 1 - kh) * pwp + iw;
                for (int64_t kw = 0; kw < d.k; ++kw) {
                  const double* src = row + d.k - 1 - kw;
                  const __m512d g0 = _mm512_loadu_pd(src);
                  const __m512d g1 = _mm512_loadu_pd(src + 8);
                  const int64_t wi = kh * d.k + kw;
                  const __m512d wv0 = _mm512_set1_pd(w0[wi]);
                  a00 = _mm512_fmadd_pd(wv0, g0, a00);
                  a01 = _mm512_fmadd_pd(wv0, g1, a01);
                  const __m512d wv1 = _mm512_set1_pd(w0[kk + wi]);
                  a10 = _mm512_fmadd_pd(wv1, g0, a10);
                  a11 = _mm512_fmadd_pd(wv1, g1, a11);
                  const __m512d wv2 = _mm512_set1_pd(w0[2 * kk + wi]);
                  a20 = _mm512_fmadd_pd(wv2, g0, a20);
                  a21 = _mm512_fmadd_pd(wv2, g1, a21);
                  const __m512d wv3 = _mm512_set1_pd(w0[3 * kk + wi]);
                  a30 = _mm512_fmadd_pd(wv3, g0, a30);
                  a31 = _mm512_fmadd_pd(wv3, g1, a31);
                }
              }
            }
            _mm512_storeu_pd(out, a00);
            _mm512_storeu_pd(out + 8, a01);
            _mm512_storeu_pd(out + plane, a10);
            _mm512_storeu_pd(out + plane + 8, a11);
            _mm512_storeu_pd(out + 2 * plane, a20);
            _mm512_storeu_pd(out + 2 * plane + 8, a21);
            _mm512_storeu_pd(out + 3 * plane, a30);
            _mm512_storeu_pd(out + 3 * plane + 8, a31);
          }
          for (; iw + 8 <= d.w; iw += 8) {
            double* out = dx + (n * d.c_in + ci0) * plane + ih * d.w + iw;
            __m512d a0 = _mm512_loadu_pd(out);
            __m512d a1 = _mm512_loadu_pd(out + plane);
            __m512d a2 = _mm512_loadu_pd(out + 2 * plane);
            __m512d a3 = _mm512_loadu_pd(out + 3 * plane);
            for (int64_t co = 0; co < d.c_out; ++co) {
              const double* dyc = dyn + co * php * pwp;
              const double* w0 = w + (co * d.c_in + ci0) * kk;
              for (int64_t kh = 0; kh < d.k; ++kh) {
                const double* row = dyc + (ih + d.k - 1 - kh) * pwp + iw;
                for (int64_t kw = 0; kw < d.k; ++kw) {
                  const __m512d g = _mm512_loadu_pd(row + d.k - 1 - kw);
                  const int64_t wi = kh * d.k + kw;
                  a0 = _mm512_fmadd_pd(_mm512_set1_pd(w0[wi]), g, a0);
                  a1 = _mm512_fmadd_pd(_mm512_set1_pd(w0[kk + wi]), g, a1);
                  a2 = _mm512_fmadd_pd(_mm512_set1_pd(w0[2 * kk + wi]), g, a2);
                  a3 = _mm512_fmadd_pd(_mm512_set1_pd(w0[3 * kk + wi]), g, a3);
                }
              }
            }
            _mm512_storeu_pd(out, a0);
            _mm512_storeu_pd(out + plane, a1);
            _mm512_storeu_pd(out + 2 * plane, a2);
            _mm512_storeu_pd(out + 3 * plane, a3);
          }
          for (; iw < d.w; ++iw)
            for (int64_t j = 0; j < 4; ++j) {
              double* out = dx + (n * d.c_in + ci0 + j) * plane + ih * d.w + iw;
              *out = conv_dx_padded(d, dyp.get(), php, pwp, w, *out, n, ci0 + j, ih, iw);
            }
        }
        continue;
      }
      // Remainder channels: vectorize across positions, four row tiles deep.
      for (int64_t j = 0; j < cnt; ++j) {
        const int64_t ci = ci0 + j;
        double* dxp = dx + (n * d.c_in + ci) * plane;
        for (int64_t ih = 0; ih < d.h; ++ih) {
          int64_t iw = 0;
          for (; iw + 32 <= d.w; iw += 32) {
            double* out = dxp + ih * d.w + iw;
            __m512d a0 = _mm512_loadu_pd(out);
            __m512d a1 = _mm512_loadu_pd(out + 8);
            __m512d a2 = _mm512_loadu_pd(out + 16);
            __m512d a3 = _mm512_loadu_pd(out + 24);
            for (int64_t co = 0; co < d.c_out; ++co) {
              const double* dyc = dyn + co * php * pwp;
              const double* wk = w + (co * d.c_in + ci) * kk;
              for (int64_t kh = 0; kh < d.k; ++kh) {
                const double* row = dyc + (ih + d.k - 1 - kh) * pwp + iw;
                for (int64_t kw = 0; kw < d.k; ++kw) {
                  const __m512d wv = _mm512_set1_pd(wk[kh * d.k + kw]);
                  const double* src = row + d.k - 1 - kw;
                  a0 = _mm512_fmadd_pd(_mm512_loadu_pd(src), wv, a0);
                  a1 = _mm512_fmadd_pd(_mm512_loadu_pd(src + 8), wv, a1);
                  a2 = _mm512_fmadd_pd(_mm512_loadu_pd(src + 16), wv, a2);
                  a3 = _mm512_fmadd_pd(_mm512_loadu_pd(src + 24), wv, a3);
                }
              }
            }
            _mm512_storeu_pd(out, a0);
            _mm512_storeu_pd(out + 8, a1);
            _mm512_storeu_pd(out + 16, a2);
            _mm512_storeu_pd(out + 24, a3);
          }
          for (; iw + 8 <= d.w; iw += 8) {
            double* out = dxp + ih * d.w + iw;
            __m512d acc = _mm512_loadu_pd(out);
            for (int64_t co = 0; co < d.c_out; ++co) {
              const double* dyc = dyn + co * php * pwp;
              const double* wk = w + (co * d.c_in + ci) * kk;
              for (int64_t kh = 0; kh < d.k; ++kh) {
                const double* row = dyc + (ih + d.k - 1 - kh) * pwp + iw;
                for (int64_t kw = 0; kw < d.k; ++kw)
                  acc = _mm512_fmadd_pd(_mm512_loadu_pd(row + d.k - 1 - kw),
                                        _mm512_set1_pd(wk[kh * d.k + kw]), acc);
              }
            }
            _mm512_storeu_pd(out, acc);
          }
          for (; iw < d.w; ++iw)
            dxp[ih * d.w + iw] = conv_dx_padded(d, dyp.get(), php, pwp, w,
                                                dxp[ih * d.w + iw], n, ci, ih, iw);
        }
      }
    }
  });
}

void conv2d_backward_weights_avx512(const ConvDims& d, const double* dy,
                                    const double* x, double* dw) {
  if (d.stride != 1 || d.ow % 4 != 0) {
    scalar().conv2d_backward_weights(d, dy, x, dw);
    return;
  }
  simd::conv_dw_lanes4(d, dy, x, dw);
}

void conv2d_backward_bias_avx512(const ConvDims& d, const double* dy, double* db) {
  if ((d.oh * d.ow) % 4 != 0) {
    scalar().conv2d_backward_bias(d, dy, db);
    return;
  }
  simd::conv_db_lanes4(d, dy, db);
}

}  // namespace

const Backend& avx512_backend() {
  static const Backend backend = {
      "avx512",
      conv2d_forward_avx512,
      conv2d_backward_input_avx512,
      conv2d_backward_weights_avx512,
      conv2d_backward_bias_avx512,
      simd::relu_forward_v,
      simd::relu_backward_v,
      simd::channel_mask_forward_v,
      simd::channel_mask_backward_v,
      simd::axpy_v,
      simd::accumulate_v,
  };
  return backend;
}

}  // namespace salguide::kernels
