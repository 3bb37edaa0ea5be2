#pragma once

// Distance kernels used by k-means, PQ, HNSW and the OPQ projection.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2+FMA (x86-64) or NEON (aarch64) variant. The variant is
// picked once at startup from CPUID / the build target; MHUB_SIMD=scalar
// forces the reference path. Variants differ from the reference only in
// float summation order.

#include <cstddef>
#include <span>
#include <string_view>

namespace mhub::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  // Squared Euclidean distance between two d-vectors.
  float (*l2sq)(const float* a, const float* b, std::size_t d);
  // Inner product of two d-vectors.
  float (*dot)(const float* a, const float* b, std::size_t d);
  // out[i] = l2sq(q, rows + i*d) for i in [0, n).
  void (*l2sq_many)(const float* q, const float* rows, std::size_t n, std::size_t d, float* out);
  // out[i] = dot(rows + i*d, v) for i in [0, n) (matrix-vector product).
  void (*matvec)(const float* rows, const float* v, std::size_t n, std::size_t d, float* out);
};

namespace scalar {
float l2sq(const float* a, const float* b, std::size_t d);
float dot(const float* a, const float* b, std::size_t d);
void l2sq_many(const float* q, const float* rows, std::size_t n, std::size_t d, float* out);
void matvec(const float* rows, const float* v, std::size_t n, std::size_t d, float* out);
}  // namespace scalar

#if defined(MHUB_HAVE_AVX2)
namespace avx2 {
float l2sq(const float* a, const float* b, std::size_t d);
float dot(const float* a, const float* b, std::size_t d);
void l2sq_many(const float* q, const float* rows, std::size_t n, std::size_t d, float* out);
void matvec(const float* rows, const float* v, std::size_t n, std::size_t d, float* out);
}  // namespace avx2
#endif

#if defined(MHUB_HAVE_NEON)
namespace neon {
float l2sq(const float* a, const float* b, std::size_t d);
float dot(const float* a, const float* b, std::size_t d);
void l2sq_many(const float* q, const float* rows, std::size_t n, std::size_t d, float* out);
void matvec(const float* rows, const float* v, std::size_t n, std::size_t d, float* out);
}  // namespace neon
#endif

// True when `isa` was compiled in and the running CPU supports it.
bool isa_available(Isa isa);

// Table for a specific ISA; throws std::invalid_argument if unavailable.
const KernelTable& table(Isa isa);

// Table selected at startup.
const KernelTable& active();

// Overrides the startup choice (tests and benchmarks). Not thread-safe with
// respect to concurrent kernel calls.
void force_isa(Isa isa);

inline float l2sq(std::span<const float> a, std::span<const float> b) {
  return active().l2sq(a.data(), b.data(), a.size());
}
inline float dot(std::span<const float> a, std::span<const float> b) {
  return active().dot(a.data(), b.data(), a.size());
}

struct Nearest {
  std::size_t index;
  float distance;
};

// Exhaustive argmin of l2sq(q, rows[i]); ties go to the lowest index.
// `scratch` must hold at least n floats.
Nearest nearest(const float* q, const float* rows, std::size_t n, std::size_t d, float* scratch);

}  // namespace mhub::simd
