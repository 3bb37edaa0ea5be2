#pragma once

// Masked-prediction pretext loss over frame-level cluster targets, and span
// mask generation.

#include <cstdint>
#include <vector>

namespace mhub::pretext {

struct MaskSpec {
  std::int64_t num_frames = 0;        // T
  std::vector<std::int64_t> indices;  // sorted, unique, in [0, T)
  std::int64_t span_len = 10;
  double mask_prob = 0.08;

  double masked_fraction() const {
    return num_frames ? static_cast<double>(indices.size()) / static_cast<double>(num_frames) : 0.0;
  }
};

// Every frame independently starts a span with probability mask_prob; spans
// cover span_len frames, are clipped at T and unioned.
MaskSpec gen_mask_spans(std::int64_t num_frames, double mask_prob, std::int64_t span_len, std::uint64_t seed);

// Expected masked fraction of an interior frame: 1 - (1 - p)^span_len.
double expected_mask_fraction(double mask_prob, std::int64_t span_len);

enum class Reduction {
  kMean,  // L_m and L_u are per-frame means over their index sets
  kSum,   // raw sums over the index sets
};

struct LossInputs {
  std::size_t num_classes = 0;          // C
  std::vector<double> logits;           // T x C, row-major, pre-softmax
  std::vector<std::int32_t> labels;     // T targets in [0, C)
  std::vector<std::int64_t> mask;       // masked frame indices, sorted and unique
  double psi = 1.0;                     // weight of the masked term
  Reduction reduction = Reduction::kMean;

  std::size_t num_frames() const { return labels.size(); }
};

struct LossResult {
  double loss = 0.0;      // psi * masked + (1 - psi) * unmasked
  double masked = 0.0;    // L_m, negative log-likelihood
  double unmasked = 0.0;  // L_u
  std::size_t masked_count = 0;
  std::size_t unmasked_count = 0;
  std::vector<double> grad;  // dL/dlogits, T x C
};

// Throws InputError for T == 0, shape mismatches, labels outside [0, C),
// psi outside [0, 1], unsorted or out-of-range mask indices, and NaN or +inf
// logits. -inf logits are allowed (zero probability) as long as each row has
// a finite maximum.
LossResult hubert_loss(const LossInputs& in);

}  // namespace mhub::pretext
