#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mhub/matrix.hpp"

namespace mhub::quantizer {

// Linear map x -> R x with orthonormal rows (R R^T = I), d_out <= d_in.
struct OpqRotation {
  FloatMatrix matrix;  // d_out x d_in
  bool identity = false;

  std::size_t d_in() const { return matrix.cols(); }
  std::size_t d_out() const { return matrix.rows(); }

  void apply(std::span<const float> x, std::span<float> out) const;
  FloatMatrix apply(const FloatMatrix& x) const;
  // R^T y: back to the input space.
  std::vector<float> apply_transpose(std::span<const float> y) const;

  friend bool operator==(const OpqRotation&, const OpqRotation&) = default;
};

OpqRotation identity_rotation(std::size_t dim);

// max |R R^T - I|.
double orthonormality_error(const OpqRotation& r);

struct OpqOptions {
  std::size_t m_sub = 16;
  std::size_t d_out = 64;
  int iters = 10;
  std::uint64_t seed = 0;
  // Training rows are subsampled to at most this many; 0 keeps all.
  std::size_t max_samples = 65536;
  int pq_kmeans_iters = 10;
  std::size_t threads = 0;
};

struct OpqReport {
  double initial_error = 0.0;  // PQ reconstruction error of the PCA initialisation
  double final_error = 0.0;    // error of the returned rotation (<= initial_error)
  double identity_error = -1.0;  // error without rotation; square case only
  std::vector<double> error_history;
  std::vector<double> orthonormality_history;  // after every Procrustes step
  bool pca_fallback = false;
};

// Alternating optimisation: starts from the PCA rotation (with eigenvalue
// allocation across subspaces), or from the identity when d_out equals the
// input dim and it scores lower, then repeatedly trains PQ on the rotated data and
// solve the orthogonal Procrustes problem for the rotation. Returns the
// rotation with the lowest measured reconstruction error, measured in the
// input space so the discarded dimensions count. Rank-deficient data (rank
// below d_out) skips the optimisation and returns the PCA rotation.
OpqRotation train_opq(const FloatMatrix& data, const OpqOptions& opts, OpqReport* report = nullptr);

// PQ seed used to score every candidate rotation.
std::uint64_t opq_eval_seed(std::uint64_t seed);

// Mean ||x - R^T decode(encode(R x))||^2 with a PQ trained on R x.
double opq_reconstruction_error(const FloatMatrix& data, const OpqRotation& r, std::size_t m_sub,
                                std::uint64_t seed, int pq_kmeans_iters = 10);

}  // namespace mhub::quantizer
