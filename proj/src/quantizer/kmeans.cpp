#include "mhub/quantizer/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mhub/error.hpp"
#include "mhub/parallel.hpp"
#include "mhub/rng.hpp"
#include "mhub/simd/kernels.hpp"

namespace mhub::quantizer {

namespace {

double l2sq_double(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

struct Assignment {
  std::vector<std::int32_t> labels;
  std::vector<double> dist;  // double-precision distance to the assigned centroid
  double inertia = 0.0;
};

// Assignment step. Chunk boundaries depend only on (n, threads) and the
// reduction runs in chunk order, so the result is independent of scheduling.
Assignment assign(const FloatMatrix& data, const FloatMatrix& centroids, std::size_t threads) {
  const std::size_t n = data.rows();
  const std::size_t k = centroids.rows();
  const std::size_t d = data.cols();
  Assignment a;
  a.labels.resize(n);
  a.dist.resize(n);
  parallel_chunks(n, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<float> scratch(k);
    for (std::size_t i = begin; i < end; ++i) {
      const auto best = simd::nearest(data.row(i).data(), centroids.data(), k, d, scratch.data());
      a.labels[i] = static_cast<std::int32_t>(best.index);
      a.dist[i] = l2sq_double(data.row(i), centroids.row(best.index));
    }
  });
  for (double v : a.dist) a.inertia += v;
  return a;
}

FloatMatrix kmeanspp_init(const FloatMatrix& data, std::size_t k, Rng& rng) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  FloatMatrix c(k, d);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);

  std::size_t first = rng.uniform_index(n);
  std::copy_n(data.row(first).data(), d, c.row(0).data());
  taken[first] = 1;
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      min_d2[i] = std::min(min_d2[i], l2sq_double(data.row(i), c.row(j - 1)));
      total += min_d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform01() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += min_d2[i];
        if (acc > target && min_d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        // Rounding pushed target past the final partial sum.
        for (std::size_t i = n; i-- > 0;) {
          if (min_d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // Every point coincides with a chosen centroid; take an unused one.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i]) free.push_back(i);
      }
      pick = free[rng.uniform_index(free.size())];
    }
    taken[pick] = 1;
    std::copy_n(data.row(pick).data(), d, c.row(j).data());
  }
  return c;
}

// Update step: re-seeds empty clusters, then recomputes every centroid as the
// mean of its members.
FloatMatrix update(const FloatMatrix& data, Assignment& a, std::size_t k) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  std::vector<std::size_t> count(k, 0);
  for (auto l : a.labels) ++count[static_cast<std::size_t>(l)];

  for (std::size_t j = 0; j < k; ++j) {
    if (count[j] != 0) continue;
    std::size_t far = n;
    double far_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (count[static_cast<std::size_t>(a.labels[i])] > 1 && a.dist[i] > far_d) {
        far_d = a.dist[i];
        far = i;
      }
    }
    if (far == n) continue;  // n >= k guarantees a donor while clusters are empty
    --count[static_cast<std::size_t>(a.labels[far])];
    a.labels[far] = static_cast<std::int32_t>(j);
    a.dist[far] = 0.0;
    count[j] = 1;
  }

  std::vector<double> sums(k * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* s = sums.data() + static_cast<std::size_t>(a.labels[i]) * d;
    const auto x = data.row(i);
    for (std::size_t t = 0; t < d; ++t) s[t] += x[t];
  }
  FloatMatrix c(k, d);
  for (std::size_t j = 0; j < k; ++j) {
    const double inv = count[j] ? 1.0 / static_cast<double>(count[j]) : 0.0;
    for (std::size_t t = 0; t < d; ++t) c(j, t) = static_cast<float>(sums[j * d + t] * inv);
  }
  return c;
}

KMeansModel run_once(const FloatMatrix& data, const KMeansOptions& opts, std::uint64_t seed, std::size_t threads) {
  Rng rng(seed);
  KMeansModel model;
  model.centroids = kmeanspp_init(data, opts.k, rng);
  Assignment a = assign(data, model.centroids, threads);
  model.inertia_history.push_back(a.inertia);
  for (int it = 0; it < opts.max_iters; ++it) {
    const double prev = a.inertia;
    FloatMatrix next = update(data, a, opts.k);
    Assignment na = assign(data, next, threads);
    if (na.inertia > prev) {
      // Float rounding in the centroid means can undo a converged step by a
      // few ulps; keep the previous state.
      break;
    }
    model.centroids = std::move(next);
    a = std::move(na);
    model.inertia_history.push_back(a.inertia);
    if (a.inertia == 0.0 || prev - a.inertia < opts.tol * prev) break;
  }
  model.inertia = a.inertia;
  return model;
}

}  // namespace

KMeansModel train_kmeans(const FloatMatrix& data, const KMeansOptions& opts) {
  if (opts.k == 0) throw InputError("k-means: k must be >= 1");
  if (data.rows() < opts.k) {
    throw InputError("k-means: need at least k=" + std::to_string(opts.k) + " points, got " +
                     std::to_string(data.rows()));
  }
  if (data.cols() == 0) throw InputError("k-means: zero-dimensional data");
  for (float v : data.values()) {
    if (!std::isfinite(v)) throw InputError("k-means: data contains non-finite values");
  }
  const std::size_t threads = opts.threads ? opts.threads : num_threads();
  int restarts = opts.restarts;
  if (restarts <= 0) restarts = data.rows() * opts.k <= KMeansOptions::kSmallProblem ? 8 : 1;

  KMeansModel best;
  for (int r = 0; r < restarts; ++r) {
    KMeansModel m = run_once(data, opts, derive_seed(opts.seed, static_cast<std::uint64_t>(r)), threads);
    if (r == 0 || m.inertia < best.inertia) best = std::move(m);
  }
  return best;
}

std::vector<std::int32_t> assign_exhaustive(const KMeansModel& model, const FloatMatrix& queries,
                                            std::size_t threads) {
  if (queries.rows() != 0 && queries.cols() != model.dim()) {
    throw InputError("assign_exhaustive: query dim " + std::to_string(queries.cols()) + " != centroid dim " +
                     std::to_string(model.dim()));
  }
  std::vector<std::int32_t> labels(queries.rows());
  const std::size_t k = model.k();
  const std::size_t d = model.dim();
  parallel_chunks(queries.rows(), threads ? threads : num_threads(),
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    std::vector<float> scratch(k);
                    for (std::size_t i = begin; i < end; ++i) {
                      labels[i] = static_cast<std::int32_t>(
                          simd::nearest(queries.row(i).data(), model.centroids.data(), k, d, scratch.data()).index);
                    }
                  });
  return labels;
}

double inertia(const FloatMatrix& data, const FloatMatrix& centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < centroids.rows(); ++j) best = std::min(best, l2sq_double(data.row(i), centroids.row(j)));
    total += best;
  }
  return total;
}

}  // namespace mhub::quantizer
