// AVX2/FMA kernel variants. Compiled with -mavx2 -mfma on x86-64 only and
// reached purely through the runtime dispatch table, so the rest of the
// build stays baseline-ISA. Accumulation order differs from the scalar
// reference; the equivalence tests compare within floating-point tolerance.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "mgt/kernels.hpp"

namespace mgt::kernels {
namespace {

inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  __m128 s = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, s);
  s = _mm_add_ss(s, sh);
  return _mm_cvtss_f32(s);
}

inline double hsum256d(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// ---------------------------------------------------------------- gemm f32

// 4-row by 16-column register tile; the k loop broadcasts A and streams B.
void gemm_nn_f32_avx2(const float* a, const float* b, float* c, int m, int k, int n) {
  const int n16 = n & ~15;
  const int m4 = m & ~3;
  for (int i0 = 0; i0 < m4; i0 += 4) {
    const float* a0 = a + static_cast<size_t>(i0) * k;
    const float* a1 = a0 + k;
    const float* a2 = a1 + k;
    const float* a3 = a2 + k;
    float* c0 = c + static_cast<size_t>(i0) * n;
    float* c1 = c0 + n;
    float* c2 = c1 + n;
    float* c3 = c2 + n;
    int j = 0;
    for (; j < n16; j += 16) {
      __m256 acc00 = _mm256_loadu_ps(c0 + j), acc01 = _mm256_loadu_ps(c0 + j + 8);
      __m256 acc10 = _mm256_loadu_ps(c1 + j), acc11 = _mm256_loadu_ps(c1 + j + 8);
      __m256 acc20 = _mm256_loadu_ps(c2 + j), acc21 = _mm256_loadu_ps(c2 + j + 8);
      __m256 acc30 = _mm256_loadu_ps(c3 + j), acc31 = _mm256_loadu_ps(c3 + j + 8);
      const float* bp = b + j;
      for (int p = 0; p < k; ++p, bp += n) {
        const __m256 b0 = _mm256_loadu_ps(bp);
        const __m256 b1 = _mm256_loadu_ps(bp + 8);
        __m256 av = _mm256_set1_ps(a0[p]);
        acc00 = _mm256_fmadd_ps(av, b0, acc00);
        acc01 = _mm256_fmadd_ps(av, b1, acc01);
        av = _mm256_set1_ps(a1[p]);
        acc10 = _mm256_fmadd_ps(av, b0, acc10);
        acc11 = _mm256_fmadd_ps(av, b1, acc11);
        av = _mm256_set1_ps(a2[p]);
        acc20 = _mm256_fmadd_ps(av, b0, acc20);
        acc21 = _mm256_fmadd_ps(av, b1, acc21);
        av = _mm256_set1_ps(a3[p]);
        acc30 = _mm256_fmadd_ps(av, b0, acc30);
        acc31 = _mm256_fmadd_ps(av, b1, acc31);
      }
      _mm256_storeu_ps(c0 + j, acc00);
      _mm256_storeu_ps(c0 + j + 8, acc01);
      _mm256_storeu_ps(c1 + j, acc10);
      _mm256_storeu_ps(c1 + j + 8, acc11);
      _mm256_storeu_ps(c2 + j, acc20);
      _mm256_storeu_ps(c2 + j + 8, acc21);
      _mm256_storeu_ps(c3 + j, acc30);
      _mm256_storeu_ps(c3 + j + 8, acc31);
    }
    for (; j < n; ++j) {
      float s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      const float* bp = b + j;
      for (int p = 0; p < k; ++p, bp += n) {
        s0 += a0[p] * *bp;
        s1 += a1[p] * *bp;
        s2 += a2[p] * *bp;
        s3 += a3[p] * *bp;
      }
      c0[j] += s0;
      c1[j] += s1;
      c2[j] += s2;
      c3[j] += s3;
    }
  }
  // leftover rows
  for (int i = m4; i < m; ++i) {
    const float* arow = a + static_cast<size_t>(i) * k;
    float* crow = c + static_cast<size_t>(i) * n;
    int j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256 acc = _mm256_loadu_ps(crow + j);
      const float* bp = b + j;
      for (int p = 0; p < k; ++p, bp += n) {
        acc = _mm256_fmadd_ps(_mm256_set1_ps(arow[p]), _mm256_loadu_ps(bp), acc);
      }
      _mm256_storeu_ps(crow + j, acc);
    }
    for (; j < n; ++j) {
      float s = 0;
      const float* bp = b + j;
      for (int p = 0; p < k; ++p, bp += n) s += arow[p] * *bp;
      crow[j] += s;
    }
  }
}

// Row-against-row dot products, 4 output columns at a time.
void gemm_nt_f32_avx2(const float* a, const float* b, float* c, int m, int k, int n) {
  const int k8 = static_cast<int>(static_cast<unsigned>(k) & ~7u);
  const int n4 = n & ~3;
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<size_t>(i) * k;
    float* crow = c + static_cast<size_t>(i) * n;
    int j = 0;
    for (; j < n4; j += 4) {
      const float* b0 = b + static_cast<size_t>(j) * k;
      const float* b1 = b0 + k;
      const float* b2 = b1 + k;
      const float* b3 = b2 + k;
      __m256 acc0 = _mm256_setzero_ps();
      __m256 acc1 = _mm256_setzero_ps();
      __m256 acc2 = _mm256_setzero_ps();
      __m256 acc3 = _mm256_setzero_ps();
      for (int p = 0; p < k8; p += 8) {
        const __m256 av = _mm256_loadu_ps(arow + p);
        acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + p), acc0);
        acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + p), acc1);
        acc2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + p), acc2);
        acc3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + p), acc3);
      }
      float s0 = hsum256(acc0), s1 = hsum256(acc1), s2 = hsum256(acc2), s3 = hsum256(acc3);
      for (int p = k8; p < k; ++p) {
        s0 += arow[p] * b0[p];
        s1 += arow[p] * b1[p];
        s2 += arow[p] * b2[p];
        s3 += arow[p] * b3[p];
      }
      crow[j] += s0;
      crow[j + 1] += s1;
      crow[j + 2] += s2;
      crow[j + 3] += s3;
    }
    for (; j < n; ++j) {
      const float* brow = b + static_cast<size_t>(j) * k;
      __m256 acc = _mm256_setzero_ps();
      for (int p = 0; p < k8; p += 8) {
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(brow + p), acc);
      }
      float s = hsum256(acc);
      for (int p = k8; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

// k blocked by 4 so each C row is touched once per 4 rank-1 updates.
void gemm_tn_f32_avx2(const float* a, const float* b, float* c, int m, int k, int n) {
  const int k4 = k & ~3;
  const int n8 = n & ~7;
  for (int p0 = 0; p0 < k4; p0 += 4) {
    const float* a0 = a + static_cast<size_t>(p0) * m;
    const float* a1 = a0 + m;
    const float* a2 = a1 + m;
    const float* a3 = a2 + m;
    const float* b0 = b + static_cast<size_t>(p0) * n;
    const float* b1 = b0 + n;
    const float* b2 = b1 + n;
    const float* b3 = b2 + n;
    for (int i = 0; i < m; ++i) {
      float* crow = c + static_cast<size_t>(i) * n;
      const __m256 av0 = _mm256_set1_ps(a0[i]);
      const __m256 av1 = _mm256_set1_ps(a1[i]);
      const __m256 av2 = _mm256_set1_ps(a2[i]);
      const __m256 av3 = _mm256_set1_ps(a3[i]);
      int j = 0;
      for (; j < n8; j += 8) {
        __m256 acc = _mm256_loadu_ps(crow + j);
        acc = _mm256_fmadd_ps(av0, _mm256_loadu_ps(b0 + j), acc);
        acc = _mm256_fmadd_ps(av1, _mm256_loadu_ps(b1 + j), acc);
        acc = _mm256_fmadd_ps(av2, _mm256_loadu_ps(b2 + j), acc);
        acc = _mm256_fmadd_ps(av3, _mm256_loadu_ps(b3 + j), acc);
        _mm256_storeu_ps(crow + j, acc);
      }
      for (; j < n; ++j) {
        crow[j] += a0[i] * b0[j] + a1[i] * b1[j] + a2[i] * b2[j] + a3[i] * b3[j];
      }
    }
  }
  for (int p = k4; p < k; ++p) {
    const float* arow = a + static_cast<size_t>(p) * m;
    const float* brow = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      float* crow = c + static_cast<size_t>(i) * n;
      const __m256 av = _mm256_set1_ps(arow[i]);
      int j = 0;
      for (; j < n8; j += 8) {
        _mm256_storeu_ps(crow + j,
                         _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j), _mm256_loadu_ps(crow + j)));
      }
      for (; j < n; ++j) crow[j] += arow[i] * brow[j];
    }
  }
}

// ---------------------------------------------------------------- gemm f64

void gemm_nn_f64_avx2(const double* a, const double* b, double* c, int m, int k, int n) {
  const int n8 = n & ~7;
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    int j = 0;
    for (; j < n8; j += 8) {
      __m256d acc0 = _mm256_loadu_pd(crow + j);
      __m256d acc1 = _mm256_loadu_pd(crow + j + 4);
      const double* bp = b + j;
      for (int p = 0; p < k; ++p, bp += n) {
        const __m256d av = _mm256_set1_pd(arow[p]);
        acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp), acc0);
        acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 4), acc1);
      }
      _mm256_storeu_pd(crow + j, acc0);
      _mm256_storeu_pd(crow + j + 4, acc1);
    }
    for (; j < n; ++j) {
      double s = 0;
      const double* bp = b + j;
      for (int p = 0; p < k; ++p, bp += n) s += arow[p] * *bp;
      crow[j] += s;
    }
  }
}

void gemm_nt_f64_avx2(const double* a, const double* b, double* c, int m, int k, int n) {
  const int k4 = k & ~3;
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<size_t>(j) * k;
      __m256d acc = _mm256_setzero_pd();
      for (int p = 0; p < k4; p += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p), _mm256_loadu_pd(brow + p), acc);
      }
      double s = hsum256d(acc);
      for (int p = k4; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

void gemm_tn_f64_avx2(const double* a, const double* b, double* c, int m, int k, int n) {
  const int n4 = n & ~3;
  for (int p = 0; p < k; ++p) {
    const double* arow = a + static_cast<size_t>(p) * m;
    const double* brow = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      double* crow = c + static_cast<size_t>(i) * n;
      const __m256d av = _mm256_set1_pd(arow[i]);
      int j = 0;
      for (; j < n4; j += 4) {
        _mm256_storeu_pd(crow + j,
                         _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), _mm256_loadu_pd(crow + j)));
      }
      for (; j < n; ++j) crow[j] += arow[i] * brow[j];
    }
  }
}

// ---------------------------------------------------------------- vectors

float dot_f32_avx2(const float* a, const float* b, size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float s = hsum256(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double dot_f64_avx2(const double* a, const double* b, size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum256d(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_f32_avx2(float alpha, const float* x, float* y, size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_f64_avx2(double alpha, const double* x, double* y, size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void mul_f32_avx2(const float* a, const float* b, float* out, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void relu_f32_avx2(const float* x, float* y, size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_f32_avx2(const float* x, const float* dy, float* dx, size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

void adam_f32_avx2(float* p, const float* g, float* m, float* v, size_t n, AdamScalars s) {
  const __m256 lr = _mm256_set1_ps(s.lr);
  const __m256 b1 = _mm256_set1_ps(s.beta1);
  const __m256 onemb1 = _mm256_set1_ps(1.0f - s.beta1);
  const __m256 b2 = _mm256_set1_ps(s.beta2);
  const __m256 onemb2 = _mm256_set1_ps(1.0f - s.beta2);
  const __m256 eps = _mm256_set1_ps(s.eps);
  const __m256 bc1 = _mm256_set1_ps(s.bc1);
  const __m256 bc2 = _mm256_set1_ps(s.bc2);
  const __m256 l2 = _mm256_set1_ps(s.l2);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 pv = _mm256_loadu_ps(p + i);
    const __m256 ge = _mm256_fmadd_ps(l2, pv, _mm256_loadu_ps(g + i));
    const __m256 mv = _mm256_fmadd_ps(onemb1, ge, _mm256_mul_ps(b1, _mm256_loadu_ps(m + i)));
    const __m256 vv =
        _mm256_fmadd_ps(onemb2, _mm256_mul_ps(ge, ge), _mm256_mul_ps(b2, _mm256_loadu_ps(v + i)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    const __m256 num = _mm256_mul_ps(mv, bc1);
    const __m256 den = _mm256_add_ps(_mm256_sqrt_ps(_mm256_mul_ps(vv, bc2)), eps);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(pv, _mm256_mul_ps(lr, _mm256_div_ps(num, den))));
  }
  if (i < n) scalar_ops().adam_f32(p + i, g + i, m + i, v + i, n - i, s);
}

bool any_nonfinite_f32_avx2(const float* x, size_t n) {
  // finite iff |x| < inf; the unordered NaN compare also lands here
  const __m256 absmask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7FFFFFFF));
  const __m256 inf = _mm256_set1_ps(std::numeric_limits<float>::infinity());
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 ax = _mm256_and_ps(_mm256_loadu_ps(x + i), absmask);
    const __m256 bad = _mm256_cmp_ps(ax, inf, _CMP_NLT_UQ);
    if (_mm256_movemask_ps(bad) != 0) return true;
  }
  for (; i < n; ++i) {
    if (!std::isfinite(x[i])) return true;
  }
  return false;
}

float max_f32_avx2(const float* x, size_t n) {
  float best = x[0];
  size_t i = 0;
  if (n >= 8) {
    __m256 acc = _mm256_loadu_ps(x);
    for (i = 8; i + 8 <= n; i += 8) acc = _mm256_max_ps(acc, _mm256_loadu_ps(x + i));
    alignas(32) float lane[8];
    _mm256_store_ps(lane, acc);
    for (float f : lane) {
      if (f > best) best = f;
    }
  }
  for (; i < n; ++i) {
    if (x[i] > best) best = x[i];
  }
  return best;
}

double max_f64_avx2(const double* x, size_t n) {
  double best = x[0];
  size_t i = 0;
  if (n >= 4) {
    __m256d acc = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
    alignas(32) double lane[4];
    _mm256_store_pd(lane, acc);
    for (double f : lane) {
      if (f > best) best = f;
    }
  }
  for (; i < n; ++i) {
    if (x[i] > best) best = x[i];
  }
  return best;
}

double sum_f64_avx2(const double* x, size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  double s = hsum256d(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i];
  return s;
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops table = {
      gemm_nn_f32_avx2, gemm_nt_f32_avx2, gemm_tn_f32_avx2,
      gemm_nn_f64_avx2, gemm_nt_f64_avx2, gemm_tn_f64_avx2,
      dot_f32_avx2,     dot_f64_avx2,
      axpy_f32_avx2,    axpy_f64_avx2,
      mul_f32_avx2,
      relu_f32_avx2,    relu_bwd_f32_avx2,
      adam_f32_avx2,
      any_nonfinite_f32_avx2,
      max_f32_avx2,     max_f64_avx2,
      sum_f64_avx2,
  };
  return table;
}

}  // namespace mgt::kernels

#endif  // x86-64
