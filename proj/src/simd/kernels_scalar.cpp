#include "mhub/simd/kernels.hpp"

namespace mhub::simd::scalar {

float l2sq(const float* a, const float* b, std::size_t d) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < d; ++i) {
    const float diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

float dot(const float* a, const float* b, std::size_t d) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < d; ++i) acc += a[i] * b[i];
  return acc;
}

void l2sq_many(const float* q, const float* rows, std::size_t n, std::size_t d, float* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = l2sq(q, rows + i * d, d);
}

void matvec(const float* rows, const float* v, std::size_t n, std::size_t d, float* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = dot(rows + i * d, v, d);
}

}  // namespace mhub::simd::scalar
