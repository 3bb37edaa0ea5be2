#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mhub/matrix.hpp"

namespace mhub::quantizer {

// 4-bit product quantizer: m_sub sub-quantizers of 16 centroids each over
// consecutive dim/m_sub slices. A vector is stored as m_sub nibbles
// (m_sub / 2 bytes).
struct PqCodebook {
  std::size_t m_sub = 0;
  std::size_t bits = 4;
  std::size_t dsub = 0;
  std::vector<float> centroids;          // m_sub x 16 x dsub
  std::vector<double> subspace_inertia;  // training inertia per subspace

  std::size_t dim() const { return m_sub * dsub; }
  std::size_t ksub() const { return std::size_t{1} << bits; }
  std::size_t code_bytes() const { return (m_sub * bits + 7) / 8; }
  std::span<const float> centroid(std::size_t m, std::size_t c) const {
    return {centroids.data() + (m * ksub() + c) * dsub, dsub};
  }

  friend bool operator==(const PqCodebook&, const PqCodebook&) = default;
};

struct PqTrainOptions {
  int kmeans_iters = 25;
  std::size_t threads = 0;
};

// Seed used for the k-means of subspace m.
std::uint64_t pq_subspace_seed(std::uint64_t seed, std::size_t m);

// Independent 16-centroid k-means on each subspace slice. Throws InputError
// if dim is not divisible by m_sub or there are fewer than 16 rows.
PqCodebook train_pq(const FloatMatrix& data, std::size_t m_sub, std::uint64_t seed, const PqTrainOptions& opts = {});

// One code (< 16) per subspace.
std::vector<std::uint8_t> pq_encode(const PqCodebook& cb, std::span<const float> v);
std::vector<float> pq_decode(const PqCodebook& cb, std::span<const std::uint8_t> codes);

// Two codes per byte, low nibble first.
std::vector<std::uint8_t> pq_pack(std::span<const std::uint8_t> codes);
std::vector<std::uint8_t> pq_unpack(std::span<const std::uint8_t> packed, std::size_t m_sub);

// Mean over rows of ||x - decode(encode(x))||^2.
double pq_reconstruction_error(const PqCodebook& cb, const FloatMatrix& data);

// Extracts columns [m*dsub, (m+1)*dsub) of every row.
FloatMatrix subspace_slice(const FloatMatrix& data, std::size_t m, std::size_t dsub);

}  // namespace mhub::quantizer
