#include "mhub/quantizer/opq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "mhub/error.hpp"
#include "mhub/quantizer/pq.hpp"
#include "mhub/rng.hpp"
#include "mhub/simd/kernels.hpp"

namespace mhub::quantizer {

namespace {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
using RowMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kChunk = 4096;

Eigen::Map<const RowMatF> view(const FloatMatrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

// X^T X accumulated in double over row chunks.
MatD second_moment(const FloatMatrix& x) {
  const auto d = static_cast<Eigen::Index>(x.cols());
  MatD acc = MatD::Zero(d, d);
  const auto v = view(x);
  for (std::size_t b = 0; b < x.rows(); b += kChunk) {
    const auto rows = static_cast<Eigen::Index>(std::min(kChunk, x.rows() - b));
    const MatD blk = v.middleRows(static_cast<Eigen::Index>(b), rows).cast<double>();
    acc.noalias() += blk.transpose() * blk;
  }
  return acc;
}

// Y^T X in double (d_out x d_in).
MatD cross_moment(const FloatMatrix& y, const FloatMatrix& x) {
  MatD acc = MatD::Zero(static_cast<Eigen::Index>(y.cols()), static_cast<Eigen::Index>(x.cols()));
  const auto vy = view(y);
  const auto vx = view(x);
  for (std::size_t b = 0; b < x.rows(); b += kChunk) {
    const auto rows = static_cast<Eigen::Index>(std::min(kChunk, x.rows() - b));
    const MatD by = vy.middleRows(static_cast<Eigen::Index>(b), rows).cast<double>();
    const MatD bx = vx.middleRows(static_cast<Eigen::Index>(b), rows).cast<double>();
    acc.noalias() += by.transpose() * bx;
  }
  return acc;
}

OpqRotation from_eigen(const MatD& r) {
  OpqRotation out;
  out.matrix = FloatMatrix(static_cast<std::size_t>(r.rows()), static_cast<std::size_t>(r.cols()));
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
      out.matrix(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = static_cast<float>(r(i, j));
    }
  }
  return out;
}

MatD to_eigen(const OpqRotation& r) { return view(r.matrix).cast<double>(); }

// Top d_out eigenvectors of the second moment, distributed over the m_sub
// subspaces so that the products of eigenvalues per subspace are balanced.
MatD pca_rotation(const FloatMatrix& x, std::size_t m_sub, std::size_t d_out, std::size_t* rank) {
  const MatD cov = second_moment(x) / std::max<double>(1.0, static_cast<double>(x.rows()));
  Eigen::SelfAdjointEigenSolver<MatD> es(cov);
  const auto& evals = es.eigenvalues();  // ascending
  const auto& evecs = es.eigenvectors();
  const Eigen::Index d_in = cov.rows();
  const double top = std::max(0.0, evals(d_in - 1));
  *rank = 0;
  for (Eigen::Index i = 0; i < d_in; ++i) {
    if (evals(i) > 1e-10 * top && top > 0.0) ++*rank;
  }

  const std::size_t dsub = d_out / m_sub;
  std::vector<double> log_prod(m_sub, 0.0);
  std::vector<std::vector<Eigen::Index>> buckets(m_sub);
  for (std::size_t t = 0; t < d_out; ++t) {
    const Eigen::Index e = d_in - 1 - static_cast<Eigen::Index>(t);
    std::size_t best = m_sub;
    for (std::size_t b = 0; b < m_sub; ++b) {
      if (buckets[b].size() < dsub && (best == m_sub || log_prod[b] < log_prod[best])) best = b;
    }
    buckets[best].push_back(e);
    log_prod[best] += std::log(std::max(evals(e), 1e-30));
  }
  MatD r(static_cast<Eigen::Index>(d_out), d_in);
  Eigen::Index row = 0;
  for (const auto& b : buckets) {
    for (Eigen::Index e : b) r.row(row++) = evecs.col(e).transpose();
  }
  return r;
}

struct Evaluation {
  double error = 0.0;
  FloatMatrix reconstructed;  // PQ reconstruction of R x, n x d_out
};

Evaluation evaluate(const FloatMatrix& x, const OpqRotation& r, std::size_t m_sub, std::uint64_t seed, int iters,
                    std::size_t threads) {
  const FloatMatrix y = r.apply(x);
  PqTrainOptions po;
  po.kmeans_iters = iters;
  po.threads = threads;
  const PqCodebook cb = train_pq(y, m_sub, seed, po);
  Evaluation ev;
  ev.reconstructed = FloatMatrix(y.rows(), y.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const auto rec = pq_decode(cb, pq_encode(cb, y.row(i)));
    std::copy(rec.begin(), rec.end(), ev.reconstructed.row(i).begin());
    // ||x - R^T yhat||^2 = ||x||^2 - ||R x||^2 + ||R x - yhat||^2 for orthonormal rows.
    double xx = 0.0, yy = 0.0, rr = 0.0;
    for (float v : x.row(i)) xx += static_cast<double>(v) * v;
    const auto yi = y.row(i);
    for (std::size_t t = 0; t < yi.size(); ++t) {
      yy += static_cast<double>(yi[t]) * yi[t];
      const double e = static_cast<double>(yi[t]) - rec[t];
      rr += e * e;
    }
    total += std::max(0.0, xx - yy) + rr;
  }
  ev.error = y.rows() ? total / static_cast<double>(y.rows()) : 0.0;
  return ev;
}

}  // namespace

void OpqRotation::apply(std::span<const float> x, std::span<float> out) const {
  if (identity) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  simd::active().matvec(matrix.data(), x.data(), d_out(), d_in(), out.data());
}

FloatMatrix OpqRotation::apply(const FloatMatrix& x) const {
  if (x.rows() != 0 && x.cols() != d_in()) throw InputError("OPQ: input dim mismatch");
  FloatMatrix out(x.rows(), d_out());
  for (std::size_t i = 0; i < x.rows(); ++i) apply(x.row(i), out.row(i));
  return out;
}

std::vector<float> OpqRotation::apply_transpose(std::span<const float> y) const {
  std::vector<float> out(d_in(), 0.0f);
  for (std::size_t r = 0; r < d_out(); ++r) {
    const auto row = matrix.row(r);
    for (std::size_t c = 0; c < d_in(); ++c) out[c] += row[c] * y[r];
  }
  return out;
}

OpqRotation identity_rotation(std::size_t dim) {
  OpqRotation r;
  r.matrix = FloatMatrix(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) r.matrix(i, i) = 1.0f;
  r.identity = true;
  return r;
}

double orthonormality_error(const OpqRotation& r) {
  const MatD m = to_eigen(r);
  const MatD g = m * m.transpose();
  return (g - MatD::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

OpqRotation train_opq(const FloatMatrix& data, const OpqOptions& opts, OpqReport* report) {
  const std::size_t d_in = data.cols();
  if (opts.d_out == 0 || opts.d_out > d_in) {
    throw InputError("OPQ: output dim " + std::to_string(opts.d_out) + " must be in [1, " + std::to_string(d_in) + "]");
  }
  if (opts.m_sub == 0 || opts.d_out % opts.m_sub != 0) {
    throw InputError("OPQ: output dim " + std::to_string(opts.d_out) + " is not divisible by M=" +
                     std::to_string(opts.m_sub));
  }
  OpqReport local;
  OpqReport& rep = report ? *report : local;
  rep = OpqReport{};

  const FloatMatrix x = subsample_rows(data, opts.max_samples, derive_seed(opts.seed, 0x0b5ULL));
  std::size_t rank = 0;
  MatD r = pca_rotation(x, opts.m_sub, opts.d_out, &rank);
  OpqRotation best = from_eigen(r);
  rep.orthonormality_history.push_back(orthonormality_error(best));

  if (rank < opts.d_out || x.rows() < 16) {
    spdlog::warn("OPQ: training data has rank {} (< {}) or too few rows ({}); using the PCA rotation", rank,
                 opts.d_out, x.rows());
    rep.pca_fallback = true;
    return best;
  }

  const std::uint64_t eval_seed = opq_eval_seed(opts.seed);
  Evaluation ev = evaluate(x, best, opts.m_sub, eval_seed, opts.pq_kmeans_iters, opts.threads);
  rep.initial_error = rep.final_error = ev.error;
  rep.error_history.push_back(ev.error);
  if (opts.d_out == x.cols()) {
    // Square case: no rotation is a candidate too, so the result never
    // quantizes worse than plain PQ under the same evaluation.
    const OpqRotation id = identity_rotation(x.cols());
    Evaluation id_ev = evaluate(x, id, opts.m_sub, eval_seed, opts.pq_kmeans_iters, opts.threads);
    rep.identity_error = id_ev.error;
    if (id_ev.error < ev.error) {
      best = id;
      best.identity = false;
      r = MatD::Identity(static_cast<Eigen::Index>(x.cols()), static_cast<Eigen::Index>(x.cols()));
      ev = std::move(id_ev);
      rep.final_error = ev.error;
    }
  }

  for (int it = 1; it <= opts.iters; ++it) {
    // Procrustes: maximise tr(R X^T Yhat) over R with orthonormal rows.
    const MatD a = cross_moment(ev.reconstructed, x);
    Eigen::BDCSVD<MatD> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    r = svd.matrixU() * svd.matrixV().transpose();
    const OpqRotation candidate = from_eigen(r);
    const double ortho = orthonormality_error(candidate);
    rep.orthonormality_history.push_back(ortho);
    if (ortho >= 1e-5) {
      throw std::logic_error("OPQ: rotation lost orthonormality (" + std::to_string(ortho) + ")");
    }
    ev = evaluate(x, candidate, opts.m_sub, eval_seed, opts.pq_kmeans_iters, opts.threads);
    rep.error_history.push_back(ev.error);
    if (ev.error < rep.final_error) {
      rep.final_error = ev.error;
      best = candidate;
    }
  }
  return best;
}

std::uint64_t opq_eval_seed(std::uint64_t seed) { return derive_seed(seed, 0ULL); }

double opq_reconstruction_error(const FloatMatrix& data, const OpqRotation& r, std::size_t m_sub,
                                std::uint64_t seed, int pq_kmeans_iters) {
  return evaluate(data, r, m_sub, seed, pq_kmeans_iters, 0).error;
}

}  // namespace mhub::quantizer
