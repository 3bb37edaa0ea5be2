#pragma once

// OPQ -> IVF (k-means, HNSW-assisted assignment) -> 4-bit PQ index, built
// from a factory string such as "OPQ16_64,IVF1000_HNSW32,PQ16x4fsr".

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mhub/matrix.hpp"
#include "mhub/quantizer/hnsw.hpp"
#include "mhub/quantizer/kmeans.hpp"
#include "mhub/quantizer/opq.hpp"
#include "mhub/quantizer/pq.hpp"

namespace mhub::quantizer {

struct IndexConfig {
  bool has_opq = false;
  std::size_t opq_m = 0;
  std::size_t opq_d_out = 0;  // 0: same as the input dimension
  std::size_t nlist = 0;      // K
  std::size_t hnsw_links = 32;
  std::size_t pq_m = 0;
  std::size_t pq_bits = 4;
  std::string pq_suffix;  // e.g. "fsr"; accepted, layout not reproduced

  // Throws InputError on anything outside the supported grammar:
  //   [OPQ<m>[_<d>],]IVF<k>_HNSW<links>,PQ<m>x4[fs][r]
  static IndexConfig parse(std::string_view s);
  std::string str() const;
  std::size_t output_dim(std::size_t d_in) const { return has_opq && opq_d_out ? opq_d_out : d_in; }

  friend bool operator==(const IndexConfig&, const IndexConfig&) = default;
};

struct IndexTrainOptions {
  std::uint64_t seed = 0;
  int kmeans_iters = 20;
  int kmeans_restarts = 0;  // 0: automatic
  int opq_iters = 10;
  std::size_t opq_max_samples = 0;  // 0: 256 * K
  int pq_kmeans_iters = 25;
  std::size_t ef_construction = 200;
  std::size_t threads = 0;
};

struct Index {
  IndexConfig config;
  std::size_t d_in = 0;
  OpqRotation opq;
  KMeansModel coarse;  // centroids live in the rotated space
  HnswGraph graph;     // over coarse.centroids
  PqCodebook pq;

  std::size_t d_out() const { return opq.d_out(); }
  std::size_t k() const { return coarse.k(); }

  friend bool operator==(const Index& a, const Index& b) {
    return a.config == b.config && a.d_in == b.d_in && a.opq == b.opq && a.coarse.centroids == b.coarse.centroids &&
           a.graph == b.graph && a.pq == b.pq;
  }
};

// OPQ (if configured) -> k-means(K) on the rotated data -> HNSW over the
// centroids -> PQ on the rotated vectors (not IVF residuals).
Index train_index(const FloatMatrix& data, const IndexConfig& config, const IndexTrainOptions& opts = {});

// Rotates each frame and returns the HNSW-nearest coarse centroid id.
std::vector<std::int32_t> index_assign(const Index& idx, const FloatMatrix& frames, std::size_t ef_search,
                                       std::size_t threads = 0);

// Packed 4-bit PQ code of one frame (pq_m / 2 bytes).
std::vector<std::uint8_t> index_encode(const Index& idx, std::span<const float> frame);

// Little-endian, versioned ("MHIX") binary layout.
std::vector<std::uint8_t> serialize_index(const Index& idx);
Index deserialize_index(std::span<const std::uint8_t> bytes);
void save_index(const Index& idx, const std::string& path);
Index load_index(const std::string& path);

inline constexpr std::uint32_t kIndexVersion = 1;

}  // namespace mhub::quantizer
