#include "mhub/quantizer/pq.hpp"

#include <algorithm>
#include <string>

#include "mhub/error.hpp"
#include "mhub/quantizer/kmeans.hpp"
#include "mhub/rng.hpp"
#include "mhub/simd/kernels.hpp"

namespace mhub::quantizer {

std::uint64_t pq_subspace_seed(std::uint64_t seed, std::size_t m) { return derive_seed(seed, 0x5051ULL + m); }

FloatMatrix subspace_slice(const FloatMatrix& data, std::size_t m, std::size_t dsub) {
  FloatMatrix out(data.rows(), dsub);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    std::copy_n(data.row(i).data() + m * dsub, dsub, out.row(i).data());
  }
  return out;
}

PqCodebook train_pq(const FloatMatrix& data, std::size_t m_sub, std::uint64_t seed, const PqTrainOptions& opts) {
  if (m_sub == 0 || data.cols() % m_sub != 0) {
    throw InputError("PQ: dim " + std::to_string(data.cols()) + " is not divisible by M=" + std::to_string(m_sub));
  }
  PqCodebook cb;
  cb.m_sub = m_sub;
  cb.dsub = data.cols() / m_sub;
  if (data.rows() < cb.ksub()) throw InputError("PQ: need at least 16 training vectors");
  cb.centroids.resize(m_sub * cb.ksub() * cb.dsub);
  for (std::size_t m = 0; m < m_sub; ++m) {
    KMeansOptions ko;
    ko.k = cb.ksub();
    ko.max_iters = opts.kmeans_iters;
    ko.seed = pq_subspace_seed(seed, m);
    ko.threads = opts.threads;
    const auto model = train_kmeans(subspace_slice(data, m, cb.dsub), ko);
    std::copy(model.centroids.values().begin(), model.centroids.values().end(),
              cb.centroids.begin() + static_cast<std::ptrdiff_t>(m * cb.ksub() * cb.dsub));
    cb.subspace_inertia.push_back(model.inertia);
  }
  return cb;
}

std::vector<std::uint8_t> pq_encode(const PqCodebook& cb, std::span<const float> v) {
  if (v.size() != cb.dim()) throw InputError("pq_encode: dimension mismatch");
  std::vector<std::uint8_t> codes(cb.m_sub);
  std::vector<float> scratch(cb.ksub());
  for (std::size_t m = 0; m < cb.m_sub; ++m) {
    const auto best = simd::nearest(v.data() + m * cb.dsub, cb.centroids.data() + m * cb.ksub() * cb.dsub, cb.ksub(),
                                    cb.dsub, scratch.data());
    codes[m] = static_cast<std::uint8_t>(best.index);
  }
  return codes;
}

std::vector<float> pq_decode(const PqCodebook& cb, std::span<const std::uint8_t> codes) {
  if (codes.size() != cb.m_sub) throw InputError("pq_decode: expected " + std::to_string(cb.m_sub) + " codes");
  std::vector<float> out(cb.dim());
  for (std::size_t m = 0; m < cb.m_sub; ++m) {
    if (codes[m] >= cb.ksub()) throw InputError("pq_decode: code value " + std::to_string(codes[m]) + " >= 16");
    const auto c = cb.centroid(m, codes[m]);
    std::copy(c.begin(), c.end(), out.begin() + static_cast<std::ptrdiff_t>(m * cb.dsub));
  }
  return out;
}

std::vector<std::uint8_t> pq_pack(std::span<const std::uint8_t> codes) {
  std::vector<std::uint8_t> out((codes.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] > 0x0f) throw InputError("pq_pack: code value >= 16");
    out[i / 2] |= static_cast<std::uint8_t>(codes[i] << ((i % 2) * 4));
  }
  return out;
}

std::vector<std::uint8_t> pq_unpack(std::span<const std::uint8_t> packed, std::size_t m_sub) {
  if (packed.size() != (m_sub + 1) / 2) throw InputError("pq_unpack: wrong packed length");
  std::vector<std::uint8_t> codes(m_sub);
  for (std::size_t i = 0; i < m_sub; ++i) codes[i] = (packed[i / 2] >> ((i % 2) * 4)) & 0x0f;
  return codes;
}

double pq_reconstruction_error(const PqCodebook& cb, const FloatMatrix& data) {
  if (data.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto rec = pq_decode(cb, pq_encode(cb, data.row(i)));
    const auto x = data.row(i);
    for (std::size_t t = 0; t < rec.size(); ++t) {
      const double d = static_cast<double>(x[t]) - rec[t];
      total += d * d;
    }
  }
  return total / static_cast<double>(data.rows());
}

}  // namespace mhub::quantizer
