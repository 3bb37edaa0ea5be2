#pragma once

// Two-level language/source up-sampling, RAM-budgeted sampling of clustering
// data, and length-sorted random-crop batch planning.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mhub/corpus.hpp"
#include "mhub/rng.hpp"

namespace mhub::sampler {

struct SamplingConfig {
  double alpha = 0.7;  // language temperature; 1 = proportional
  double beta = 0.9;   // source temperature within a language
  std::uint64_t seed = 0;

  void validate() const;
};

struct LanguageDistribution {
  std::map<std::string, double> probs;
};

struct SourceDistribution {
  std::map<std::string, std::map<std::string, double>> probs;  // language -> source -> P
};

// P_l proportional to (n_l / N)^alpha.
LanguageDistribution language_probs(const corpus::CorpusStats& stats, double alpha);

// Within each language, P_x proportional to (n_l(x) / n_l)^beta.
SourceDistribution source_probs(const corpus::CorpusStats& stats, double beta);

// Draws (language, source) pairs from the two distributions and utterances
// uniformly within a pair's pool.
class TwoLevelSampler {
 public:
  TwoLevelSampler(const corpus::Manifest& m, const SamplingConfig& cfg);

  std::size_t num_pools() const { return pools_.size(); }
  const std::vector<std::size_t>& pool(std::size_t p) const { return pools_[p]; }

  // Index of a (language, source) pool.
  std::size_t draw_pool(Rng& rng) const;

  // Manifest index of one utterance, drawn with replacement.
  std::size_t draw(Rng& rng) const;

 private:
  struct Language {
    double cumulative = 0.0;
    std::vector<double> source_cumulative;
    std::vector<std::size_t> pool_ids;
  };
  std::vector<Language> languages_;
  std::vector<std::vector<std::size_t>> pools_;
};

struct EpochPlan {
  std::vector<std::size_t> draws;                              // manifest indices, longest first
  std::map<std::string, std::int64_t> per_language_counts;     // B_l

  std::size_t size() const { return draws.size(); }
};

// num_draws draws (default: the manifest size N), sorted by duration
// descending with ties in manifest order. Deterministic in cfg.seed.
EpochPlan draw_epoch(const corpus::Manifest& m, const SamplingConfig& cfg,
                     std::optional<std::size_t> num_draws = std::nullopt);

// (N - distinct utterances drawn) / N.
double repeat_fraction(const EpochPlan& plan);

struct BudgetSample {
  std::vector<std::size_t> indices;  // manifest indices in draw order
  std::uint64_t bytes = 0;
};

// Draws utterances through the two-level distribution, without replacement
// inside each pool until that pool is exhausted (then it is reshuffled),
// stopping before the first draw that would overflow budget_bytes.
BudgetSample budget_sample(const corpus::Manifest& m, const SamplingConfig& cfg, std::uint64_t budget_bytes,
                           int feature_dim, double frame_rate_hz, int bytes_per_value);

struct BatchOptions {
  std::int64_t max_frames = 2'800'000;
  std::int64_t crop_len = 400;
  double frame_rate_hz = 50.0;
  std::uint64_t seed = 0;
};

struct BatchItem {
  std::size_t utterance = 0;  // manifest index
  std::int64_t crop_start = 0;
  std::int64_t crop_len = 0;
};

struct Batch {
  std::vector<BatchItem> items;
  std::int64_t frames() const;
};

struct BatchPlan {
  std::vector<Batch> batches;
  std::int64_t max_frames = 0;
  std::int64_t crop_len = 0;
};

// Walks the (length-sorted) draws, cropping utterances longer than crop_len
// to a uniformly placed window and filling each batch until the next item
// would exceed max_frames. Zero-frame utterances are skipped.
BatchPlan plan_batches(const EpochPlan& plan, const corpus::Manifest& m, const BatchOptions& opts);

// JSON-lines, one draw / one batch per line.
std::string write_epoch_plan(const EpochPlan& plan, const corpus::Manifest& m);
EpochPlan parse_epoch_plan(std::string_view jsonl, const corpus::Manifest& m);
std::string write_batch_plan(const BatchPlan& plan, const corpus::Manifest& m);

}  // namespace mhub::sampler
