#include "covidseg/core/conv_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#if defined(__AVX2__) || defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace covidseg::kernels {

namespace {

constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 16;
constexpr std::size_t kKc = 128;
constexpr std::size_t kNc = 512;
constexpr std::size_t kChunk = 256;

void micro_full(std::size_t kc, const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                std::size_t ldc) {
#if defined(__AVX512F__)
  __m512d acc[kMr][2];
  for (std::size_t r = 0; r < kMr; ++r) {
    acc[r][0] = _mm512_loadu_pd(c + r * ldc);
    acc[r][1] = _mm512_loadu_pd(c + r * ldc + 8);
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m512d b0 = _mm512_loadu_pd(b + p * ldb);
    const __m512d b1 = _mm512_loadu_pd(b + p * ldb + 8);
    for (std::size_t r = 0; r < kMr; ++r) {
      const __m512d av = _mm512_set1_pd(a[r * lda + p]);
      acc[r][0] = _mm512_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (std::size_t r = 0; r < kMr; ++r) {
    _mm512_storeu_pd(c + r * ldc, acc[r][0]);
    _mm512_storeu_pd(c + r * ldc + 8, acc[r][1]);
  }
#elif defined(__AVX2__) && defined(__FMA__)
  __m256d acc[kMr][4];
  for (std::size_t r = 0; r < kMr; ++r)
    for (std::size_t v = 0; v < 4; ++v) acc[r][v] = _mm256_loadu_pd(c + r * ldc + 4 * v);
  for (std::size_t p = 0; p < kc; ++p) {
    __m256d bv[4];
    for (std::size_t v = 0; v < 4; ++v) bv[v] = _mm256_loadu_pd(b + p * ldb + 4 * v);
    for (std::size_t r = 0; r < kMr; ++r) {
      const __m256d av = _mm256_set1_pd(a[r * lda + p]);
      for (std::size_t v = 0; v < 4; ++v) acc[r][v] = _mm256_fmadd_pd(av, bv[v], acc[r][v]);
    }
  }
  for (std::size_t r = 0; r < kMr; ++r)
    for (std::size_t v = 0; v < 4; ++v) _mm256_storeu_pd(c + r * ldc + 4 * v, acc[r][v]);
#else
  double acc[kMr][kNr];
  for (std::size_t r = 0; r < kMr; ++r)
    for (std::size_t j = 0; j < kNr; ++j) acc[r][j] = c[r * ldc + j];
  for (std::size_t p = 0; p < kc; ++p) {
    const double* brow = b + p * ldb;
    for (std::size_t r = 0; r < kMr; ++r) {
      const double av = a[r * lda + p];
      for (std::size_t j = 0; j < kNr; ++j) acc[r][j] = std::fma(av, brow[j], acc[r][j]);
    }
  }
  for (std::size_t r = 0; r < kMr; ++r)
    for (std::size_t j = 0; j < kNr; ++j) c[r * ldc + j] = acc[r][j];
#endif
}

void micro_edge(std::size_t mr, std::size_t nr, std::size_t kc, const double* a, std::size_t lda, const double* b,
                std::size_t ldb, double* c, std::size_t ldc) {
#if defined(__AVX512F__)
  const __mmask8 m0 = nr >= 8 ? 0xFF : static_cast<__mmask8>((1u << nr) - 1);
  const __mmask8 m1 = nr > 8 ? static_cast<__mmask8>((1u << (nr - 8)) - 1) : 0;
  __m512d acc[kMr][2];
  for (std::size_t r = 0; r < mr; ++r) {
    acc[r][0] = _mm512_maskz_loadu_pd(m0, c + r * ldc);
    acc[r][1] = _mm512_maskz_loadu_pd(m1, c + r * ldc + 8);
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m512d b0 = _mm512_maskz_loadu_pd(m0, b + p * ldb);
    const __m512d b1 = _mm512_maskz_loadu_pd(m1, b + p * ldb + 8);
    for (std::size_t r = 0; r < mr; ++r) {
      const __m512d av = _mm512_set1_pd(a[r * lda + p]);
      acc[r][0] = _mm512_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (std::size_t r = 0; r < mr; ++r) {
    _mm512_mask_storeu_pd(c + r * ldc, m0, acc[r][0]);
    _mm512_mask_storeu_pd(c + r * ldc + 8, m1, acc[r][1]);
  }
#else
  for (std::size_t r = 0; r < mr; ++r) {
    for (std::size_t j = 0; j < nr; ++j) {
      double acc = c[r * ldc + j];
      for (std::size_t p = 0; p < kc; ++p) acc = std::fma(a[r * lda + p], b[p * ldb + j], acc);
      c[r * ldc + j] = acc;
    }
  }
#endif
}

// Calls fn(j, oy, ox_begin, count) for each run of consecutive output positions of
// one output row inside the chunk [p0, p0 + nc); j is the chunk-local column.
template <typename Fn>
void for_each_row_run(const ConvGeometry& g, std::size_t p0, std::size_t nc, Fn&& fn) {
  std::size_t j = 0;
  while (j < nc) {
    const std::size_t p = p0 + j;
    const std::size_t oy = p / g.ow, ox = p % g.ow;
    const std::size_t count = std::min(g.ow - ox, nc - j);
    fn(j, oy, ox, count);
    j += count;
  }
}

// Columns [p0, p0 + nc) of the (taps x oh*ow) patch matrix of one sample, stored
// as (taps x nc).
void im2col_chunk(const ConvGeometry& g, const double* in, std::size_t p0, std::size_t nc, double* col) {
  const long h = static_cast<long>(g.h), w = static_cast<long>(g.w), stride = static_cast<long>(g.stride);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const double* src = in + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* dst = col + ((ci * g.kh + ky) * g.kw + kx) * nc;
        const long off_y = static_cast<long>(ky * g.dilation) - static_cast<long>(g.padding);
        const long off_x = static_cast<long>(kx * g.dilation) - static_cast<long>(g.padding);
        for_each_row_run(g, p0, nc, [&](std::size_t j, std::size_t oy, std::size_t ox0, std::size_t count) {
          double* out = dst + j;
          const long iy = static_cast<long>(oy) * stride + off_y;
          if (iy < 0 || iy >= h) {
            std::fill(out, out + count, 0.0);
            return;
          }
          const double* srow = src + iy * w;
          if (stride == 1) {
            // ix = ox + off_x must land in [0, w).
            const long lo = std::clamp(-off_x - static_cast<long>(ox0), 0L, static_cast<long>(count));
            const long hi = std::clamp(w - off_x - static_cast<long>(ox0), lo, static_cast<long>(count));
            std::fill(out, out + lo, 0.0);
            std::copy(srow + static_cast<long>(ox0) + off_x + lo, srow + static_cast<long>(ox0) + off_x + hi, out + lo);
            std::fill(out + hi, out + count, 0.0);
          } else {
            for (std::size_t t = 0; t < count; ++t) {
              const long ix = static_cast<long>(ox0 + t) * stride + off_x;
              out[t] = (ix >= 0 && ix < w) ? srow[ix] : 0.0;
            }
          }
        });
      }
    }
  }
}

void col2im_chunk_add(const ConvGeometry& g, const double* col, std::size_t p0, std::size_t nc, double* in) {
  const long h = static_cast<long>(g.h), w = static_cast<long>(g.w), stride = static_cast<long>(g.stride);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    double* dst = in + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* src = col + ((ci * g.kh + ky) * g.kw + kx) * nc;
        const long off_y = static_cast<long>(ky * g.dilation) - static_cast<long>(g.padding);
        const long off_x = static_cast<long>(kx * g.dilation) - static_cast<long>(g.padding);
        for_each_row_run(g, p0, nc, [&](std::size_t j, std::size_t oy, std::size_t ox0, std::size_t count) {
          const long iy = static_cast<long>(oy) * stride + off_y;
          if (iy < 0 || iy >= h) return;
          double* drow = dst + iy * w;
          const double* s = src + j;
          if (stride == 1) {
            const long lo = std::clamp(-off_x - static_cast<long>(ox0), 0L, static_cast<long>(count));
            const long hi = std::clamp(w - off_x - static_cast<long>(ox0), lo, static_cast<long>(count));
            double* d = drow + static_cast<long>(ox0) + off_x;
            for (long t = lo; t < hi; ++t) d[t] += s[t];
          } else {
            for (std::size_t t = 0; t < count; ++t) {
              const long ix = static_cast<long>(ox0 + t) * stride + off_x;
              if (ix >= 0 && ix < w) drow[ix] += s[t];
            }
          }
        });
      }
    }
  }
}

void transpose(const double* src, std::size_t rows, std::size_t cols, double* dst) {
  constexpr std::size_t kTile = 16;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile)
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t r1 = std::min(rows, r0 + kTile), c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
    }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.padding == 0;
}

std::vector<double>& scratch(int slot) {
  thread_local std::vector<double> buffers[3];
  return buffers[slot];
}

}  // namespace

void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                     std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      for (std::size_t i = 0; i < m; i += kMr) {
        const std::size_t mr = std::min(kMr, m - i);
        const double* ablk = a + i * lda + pc;
        for (std::size_t j = 0; j < nc; j += kNr) {
          const std::size_t nr = std::min(kNr, nc - j);
          const double* bblk = b + pc * ldb + jc + j;
          double* cblk = c + i * ldc + jc + j;
          if (mr == kMr && nr == kNr) {
            micro_full(kc, ablk, lda, bblk, ldb, cblk, ldc);
          } else {
            micro_edge(mr, nr, kc, ablk, lda, bblk, ldb, cblk, ldc);
          }
        }
      }
    }
  }
}

void conv2d_forward_reference(const ConvGeometry& g, const double* input, const double* kernel, const double* bias,
                              double* output) {
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const long iy = static_cast<long>(oy * g.stride + ky * g.dilation) - static_cast<long>(g.padding);
                const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) - static_cast<long>(g.padding);
                const bool inside = iy >= 0 && iy < static_cast<long>(g.h) && ix >= 0 && ix < static_cast<long>(g.w);
                const double v = inside ? input[((b * g.cin + ci) * g.h + iy) * g.w + ix] : 0.0;
                acc = std::fma(v, kernel[((co * g.cin + ci) * g.kh + ky) * g.kw + kx], acc);
              }
            }
          }
          output[((b * g.cout + co) * g.oh + oy) * g.ow + ox] = acc + bias[co];
        }
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, const double* input, const double* kernel, const double* bias,
                    double* output) {
  const std::size_t plane = g.out_plane();
  const std::size_t taps = g.taps();
  const bool pointwise = is_pointwise(g);
  auto& col = scratch(0);
  col.resize(taps * kChunk);
  for (std::size_t b = 0; b < g.n; ++b) {
    const double* in = input + b * g.cin * g.h * g.w;
    double* out = output + b * g.cout * plane;
    std::fill(out, out + g.cout * plane, 0.0);
    if (pointwise) {
      gemm_accumulate(g.cout, plane, taps, kernel, taps, in, plane, out, plane);
    } else {
      for (std::size_t p0 = 0; p0 < plane; p0 += kChunk) {
        const std::size_t nc = std::min(kChunk, plane - p0);
        im2col_chunk(g, in, p0, nc, col.data());
        gemm_accumulate(g.cout, nc, taps, kernel, taps, col.data(), nc, out + p0, plane);
      }
    }
    for (std::size_t co = 0; co < g.cout; ++co) {
      double* o = out + co * plane;
      for (std::size_t p = 0; p < plane; ++p) o[p] += bias[co];
    }
  }
}

void conv2d_backward(const ConvGeometry& g, const double* input, const double* kernel, const double* grad_output,
                     double* grad_input, double* grad_kernel, double* grad_bias) {
  const std::size_t plane = g.out_plane();
  const std::size_t taps = g.taps();
  const bool pointwise = is_pointwise(g);

  if (grad_bias) {
    for (std::size_t b = 0; b < g.n; ++b) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        const double* go = grad_output + (b * g.cout + co) * plane;
        double s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) s += go[p];
        grad_bias[co] += s;
      }
    }
  }

  std::vector<double> kernel_t;
  if (grad_input) {
    kernel_t.resize(taps * g.cout);
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t t = 0; t < taps; ++t) kernel_t[t * g.cout + co] = kernel[co * taps + t];
  }

  auto& col = scratch(0);
  auto& col_t = scratch(1);
  col.resize(taps * kChunk);
  col_t.resize(taps * kChunk);
  for (std::size_t b = 0; b < g.n; ++b) {
    const double* in = input + b * g.cin * g.h * g.w;
    const double* go = grad_output + b * g.cout * plane;
    double* gi = grad_input ? grad_input + b * g.cin * g.h * g.w : nullptr;
    if (gi && pointwise) gemm_accumulate(taps, plane, g.cout, kernel_t.data(), g.cout, go, plane, gi, plane);

    for (std::size_t p0 = 0; p0 < plane; p0 += kChunk) {
      const std::size_t nc = std::min(kChunk, plane - p0);
      if (grad_kernel) {
        im2col_chunk(g, in, p0, nc, col.data());
        transpose(col.data(), taps, nc, col_t.data());
        gemm_accumulate(g.cout, taps, nc, go + p0, plane, col_t.data(), taps, grad_kernel, taps);
      }
      if (gi && !pointwise) {
        std::fill(col.begin(), col.begin() + taps * nc, 0.0);
        gemm_accumulate(taps, nc, g.cout, kernel_t.data(), g.cout, go + p0, plane, col.data(), nc);
        col2im_chunk_add(g, col.data(), p0, nc, gi);
      }
    }
  }
}

}  // namespace covidseg::kernels
