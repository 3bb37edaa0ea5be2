// Compiled with -mavx2 -mfma; only reached after a CPUID check.

#include "mhub/simd/kernels.hpp"

#include <immintrin.h>

namespace mhub::simd::avx2 {

namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

}  // namespace

float l2sq(const float* a, const float* b, std::size_t d) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= d; i += 16) {
    const __m256 d0 = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    const __m256 d1 = _mm256_sub_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8));
    acc0 = _mm256_fmadd_ps(d0, d0, acc0);
    acc1 = _mm256_fmadd_ps(d1, d1, acc1);
  }
  for (; i + 8 <= d; i += 8) {
    const __m256 d0 = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc0 = _mm256_fmadd_ps(d0, d0, acc0);
  }
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < d; ++i) {
    const float diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

float dot(const float* a, const float* b, std::size_t d) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= d; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= d; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < d; ++i) acc += a[i] * b[i];
  return acc;
}

void l2sq_many(const float* q, const float* rows, std::size_t n, std::size_t d, float* out) {
  // Four rows per pass share the query loads.
  std::size_t r = 0;
  if (d >= 8) {
    for (; r + 4 <= n; r += 4) {
      const float* r0 = rows + (r + 0) * d;
      const float* r1 = rows + (r + 1) * d;
      const float* r2 = rows + (r + 2) * d;
      const float* r3 = rows + (r + 3) * d;
      __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps();
      __m256 a2 = _mm256_setzero_ps(), a3 = _mm256_setzero_ps();
      std::size_t i = 0;
      for (; i + 8 <= d; i += 8) {
        const __m256 qv = _mm256_loadu_ps(q + i);
        const __m256 d0 = _mm256_sub_ps(qv, _mm256_loadu_ps(r0 + i));
        const __m256 d1 = _mm256_sub_ps(qv, _mm256_loadu_ps(r1 + i));
        const __m256 d2 = _mm256_sub_ps(qv, _mm256_loadu_ps(r2 + i));
        const __m256 d3 = _mm256_sub_ps(qv, _mm256_loadu_ps(r3 + i));
        a0 = _mm256_fmadd_ps(d0, d0, a0);
        a1 = _mm256_fmadd_ps(d1, d1, a1);
        a2 = _mm256_fmadd_ps(d2, d2, a2);
        a3 = _mm256_fmadd_ps(d3, d3, a3);
      }
      float s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
      for (; i < d; ++i) {
        const float e0 = q[i] - r0[i], e1 = q[i] - r1[i], e2 = q[i] - r2[i], e3 = q[i] - r3[i];
        s0 += e0 * e0;
        s1 += e1 * e1;
        s2 += e2 * e2;
        s3 += e3 * e3;
      }
      out[r + 0] = s0;
      out[r + 1] = s1;
      out[r + 2] = s2;
      out[r + 3] = s3;
    }
  }
  for (; r < n; ++r) out[r] = l2sq(q, rows + r * d, d);
}

void matvec(const float* rows, const float* v, std::size_t n, std::size_t d, float* out) {
  std::size_t r = 0;
  if (d >= 8) {
    for (; r + 4 <= n; r += 4) {
      const float* r0 = rows + (r + 0) * d;
      const float* r1 = rows + (r + 1) * d;
      const float* r2 = rows + (r + 2) * d;
      const float* r3 = rows + (r + 3) * d;
      __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps();
      __m256 a2 = _mm256_setzero_ps(), a3 = _mm256_setzero_ps();
      std::size_t i = 0;
      for (; i + 8 <= d; i += 8) {
        const __m256 x = _mm256_loadu_ps(v + i);
        a0 = _mm256_fmadd_ps(_mm256_loadu_ps(r0 + i), x, a0);
        a1 = _mm256_fmadd_ps(_mm256_loadu_ps(r1 + i), x, a1);
        a2 = _mm256_fmadd_ps(_mm256_loadu_ps(r2 + i), x, a2);
        a3 = _mm256_fmadd_ps(_mm256_loadu_ps(r3 + i), x, a3);
      }
      float s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
      for (; i < d; ++i) {
        s0 += r0[i] * v[i];
        s1 += r1[i] * v[i];
        s2 += r2[i] * v[i];
        s3 += r3[i] * v[i];
      }
      out[r + 0] = s0;
      out[r + 1] = s1;
      out[r + 2] = s2;
      out[r + 3] = s3;
    }
  }
  for (; r < n; ++r) out[r] = dot(rows + r * d, v, d);
}

}  // namespace mhub::simd::avx2
