#pragma once

// Manifest data model, duration filtering, short-utterance concatenation
// plans, validation-set carving and feature storage estimates.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mhub::corpus {

struct Utterance {
  std::string id;
  std::string path;      // relative to Manifest::root
  std::string language;  // ISO 639-3
  std::string source;    // dataset name
  std::int64_t num_samples = 0;
  std::int32_t sample_rate = 16000;

  double duration_s() const { return static_cast<double>(num_samples) / sample_rate; }

  // Frames at `frame_rate_hz` (truncating).
  std::int64_t num_frames(double frame_rate_hz) const;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

// (language, source) pair.
using PairKey = std::pair<std::string, std::string>;

struct Manifest {
  std::string root;
  std::vector<Utterance> utterances;  // order is significant: label files align by position

  std::size_t size() const { return utterances.size(); }
  bool empty() const { return utterances.empty(); }

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

struct CorpusStats {
  std::int64_t total_examples = 0;                   // N
  std::map<std::string, std::int64_t> per_language;  // n_l
  std::map<PairKey, std::int64_t> per_pair;          // n_l(x)
  double total_hours = 0.0;
};

// Parses the 6-column TSV manifest: first line is the root directory, then
// id, path, language, source, num_samples, sample_rate per line. Throws
// ParseError (with line number) on malformed rows, non-positive counts and
// duplicate (language, source, id) keys.
Manifest parse_manifest(std::string_view text);

std::string write_manifest(const Manifest& m);

Manifest read_manifest_file(const std::string& path);
void write_manifest_file(const Manifest& m, const std::string& path);

// Throws InputError if an utterance or the key uniqueness invariant is broken.
void validate(const Manifest& m);

CorpusStats compute_stats(const Manifest& m);

struct DurationSplit {
  Manifest kept;
  std::vector<Utterance> dropped;
};

// Keeps min_s <= duration <= max_s (both bounds inclusive).
DurationSplit filter_durations(const Manifest& m, double min_s, double max_s);

struct ConcatGroup {
  std::string language;
  std::string source;
  std::vector<std::string> ids;
  double duration_s = 0.0;
  bool under_target = false;
};

struct ConcatenationPlan {
  double target_min_s = 0.0;
  std::vector<ConcatGroup> groups;
};

// Greedy plan: within each (language, source) pair, in manifest order,
// utterances are appended to the open group until it reaches target_min_s.
// A trailing group below target is flagged. Pairs appear in order of their
// first utterance.
ConcatenationPlan concat_short(const Manifest& m, double target_min_s);

// Samples min(per_pair, n_l(x)) utterances per (language, source) pair,
// uniformly without replacement. The result keeps manifest order; the
// training manifest is not modified.
Manifest carve_validation(const Manifest& m, int per_pair, std::uint64_t seed);

// hours * 3600 * frame_rate_hz * feature_dim * bytes_per_value.
double estimate_storage(double hours, int feature_dim, double frame_rate_hz, int bytes_per_value);

inline constexpr double kTiB = 1099511627776.0;
inline constexpr double kTB = 1e12;

}  // namespace mhub::corpus
