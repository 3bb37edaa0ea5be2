#include "mhub/pretext.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mhub/error.hpp"
#include "mhub/rng.hpp"

namespace mhub::pretext {

MaskSpec gen_mask_spans(std::int64_t num_frames, double mask_prob, std::int64_t span_len, std::uint64_t seed) {
  if (num_frames < 1) throw InputError("mask: T must be >= 1");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) throw InputError("mask: mask_prob must be in [0, 1]");
  if (span_len < 1) throw InputError("mask: span_len must be >= 1");
  MaskSpec spec;
  spec.num_frames = num_frames;
  spec.span_len = span_len;
  spec.mask_prob = mask_prob;
  Rng rng(seed);
  // Frames covered so far extend to covered_end (exclusive).
  std::int64_t covered_end = 0;
  for (std::int64_t t = 0; t < num_frames; ++t) {
    if (rng.bernoulli(mask_prob)) covered_end = std::max(covered_end, std::min(num_frames, t + span_len));
    if (t < covered_end) spec.indices.push_back(t);
  }
  return spec;
}

double expected_mask_fraction(double mask_prob, std::int64_t span_len) {
  return 1.0 - std::pow(1.0 - mask_prob, static_cast<double>(span_len));
}

LossResult hubert_loss(const LossInputs& in) {
  const std::size_t t_len = in.num_frames();
  const std::size_t c = in.num_classes;
  if (t_len == 0) throw InputError("loss: no frames");
  if (c == 0) throw InputError("loss: no classes");
  if (in.logits.size() != t_len * c) throw InputError("loss: logits must be T x C");
  if (!(in.psi >= 0.0 && in.psi <= 1.0)) throw InputError("loss: psi must be in [0, 1]");

  std::vector<char> masked(t_len, 0);
  for (std::size_t i = 0; i < in.mask.size(); ++i) {
    const std::int64_t m = in.mask[i];
    if (m < 0 || static_cast<std::size_t>(m) >= t_len) throw InputError("loss: mask index out of range");
    if (i && m <= in.mask[i - 1]) throw InputError("loss: mask indices must be sorted and unique");
    masked[static_cast<std::size_t>(m)] = 1;
  }

  LossResult r;
  r.masked_count = in.mask.size();
  r.unmasked_count = t_len - r.masked_count;
  r.grad.assign(t_len * c, 0.0);

  const bool mean = in.reduction == Reduction::kMean;
  const double w_m = r.masked_count ? (mean ? in.psi / static_cast<double>(r.masked_count) : in.psi) : 0.0;
  const double w_u =
      r.unmasked_count ? (mean ? (1.0 - in.psi) / static_cast<double>(r.unmasked_count) : 1.0 - in.psi) : 0.0;

  double sum_m = 0.0;
  double sum_u = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    const std::int32_t z = in.labels[t];
    if (z < 0 || static_cast<std::size_t>(z) >= c) {
      throw InputError("loss: label " + std::to_string(z) + " outside [0, " + std::to_string(c) + ")");
    }
    const double* row = in.logits.data() + t * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (std::isnan(row[j]) || row[j] == std::numeric_limits<double>::infinity()) {
        throw InputError("loss: NaN or +inf logit at frame " + std::to_string(t));
      }
      mx = std::max(mx, row[j]);
    }
    if (!std::isfinite(mx)) throw InputError("loss: frame " + std::to_string(t) + " has no finite logit");
    double z_sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) z_sum += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z_sum);
    const double nll = log_z - row[z];

    const double w = masked[t] ? w_m : w_u;
    (masked[t] ? sum_m : sum_u) += nll;
    double* g = r.grad.data() + t * c;
    for (std::size_t j = 0; j < c; ++j) g[j] = w * std::exp(row[j] - log_z);
    g[z] -= w;
  }
  if (mean) {
    r.masked = r.masked_count ? sum_m / static_cast<double>(r.masked_count) : 0.0;
    r.unmasked = r.unmasked_count ? sum_u / static_cast<double>(r.unmasked_count) : 0.0;
  } else {
    r.masked = sum_m;
    r.unmasked = sum_u;
  }
  r.loss = in.psi * r.masked + (1.0 - in.psi) * r.unmasked;
  return r;
}

}  // namespace mhub::pretext
