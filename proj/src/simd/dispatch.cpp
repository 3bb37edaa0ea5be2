#include "mhub/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace mhub::simd {

namespace {

constexpr KernelTable kScalarTable{Isa::kScalar, scalar::l2sq, scalar::dot, scalar::l2sq_many, scalar::matvec};
#if defined(MHUB_HAVE_AVX2)
constexpr KernelTable kAvx2Table{Isa::kAvx2, avx2::l2sq, avx2::dot, avx2::l2sq_many, avx2::matvec};
#endif
#if defined(MHUB_HAVE_NEON)
constexpr KernelTable kNeonTable{Isa::kNeon, neon::l2sq, neon::dot, neon::l2sq_many, neon::matvec};
#endif

bool cpu_has_avx2() {
#if defined(MHUB_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* detect() {
  if (const char* env = std::getenv("MHUB_SIMD"); env != nullptr && std::string(env) == "scalar") {
    return &kScalarTable;
  }
  if (isa_available(Isa::kAvx2)) return &table(Isa::kAvx2);
  if (isa_available(Isa::kNeon)) return &table(Isa::kNeon);
  return &kScalarTable;
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{detect()};
  return current;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return true;
    case Isa::kAvx2: {
      static const bool has = cpu_has_avx2();
      return has;
    }
    case Isa::kNeon:
#if defined(MHUB_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!isa_available(isa)) {
    throw std::invalid_argument("SIMD variant not available: " + std::string(isa_name(isa)));
  }
  switch (isa) {
#if defined(MHUB_HAVE_AVX2)
    case Isa::kAvx2: return kAvx2Table;
#endif
#if defined(MHUB_HAVE_NEON)
    case Isa::kNeon: return kNeonTable;
#endif
    default: return kScalarTable;
  }
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void force_isa(Isa isa) { slot().store(&table(isa), std::memory_order_relaxed); }

Nearest nearest(const float* q, const float* rows, std::size_t n, std::size_t d, float* scratch) {
  active().l2sq_many(q, rows, n, d, scratch);
  Nearest best{0, scratch[0]};
  for (std::size_t i = 1; i < n; ++i) {
    if (scratch[i] < best.distance) best = {i, scratch[i]};
  }
  return best;
}

}  // namespace mhub::simd
