#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mhub/matrix.hpp"

namespace mhub::quantizer {

struct KMeansOptions {
  std::size_t k = 1000;
  int max_iters = 25;
  std::uint64_t seed = 0;
  // Number of k-means++ restarts; 0 picks 8 for small problems
  // (n * k <= kSmallProblem) and 1 otherwise.
  int restarts = 0;
  // Stop when the relative inertia improvement of an iteration is below tol.
  double tol = 1e-4;
  // Worker cap for the assignment step; 0 uses mhub::num_threads().
  std::size_t threads = 0;

  static constexpr std::size_t kSmallProblem = 65536;
};

struct KMeansModel {
  FloatMatrix centroids;  // k x dim
  double inertia = 0.0;   // sum of squared distances to the assigned centroid
  // Inertia after the initial assignment and after each Lloyd update of the
  // selected restart. Non-increasing.
  std::vector<double> inertia_history;

  std::size_t k() const { return centroids.rows(); }
  std::size_t dim() const { return centroids.cols(); }
};

// Lloyd's algorithm with k-means++ seeding, best of `restarts` runs. Empty
// clusters are re-seeded at the point farthest from its current centroid.
// Throws InputError if n < k, k == 0 or the data contains non-finite values.
KMeansModel train_kmeans(const FloatMatrix& data, const KMeansOptions& opts);

// Nearest centroid (squared L2) for each query; ties go to the lowest id.
std::vector<std::int32_t> assign_exhaustive(const KMeansModel& model, const FloatMatrix& queries,
                                            std::size_t threads = 0);

// Sum over rows of min_c ||x - c||^2, accumulated in double.
double inertia(const FloatMatrix& data, const FloatMatrix& centroids);

}  // namespace mhub::quantizer
