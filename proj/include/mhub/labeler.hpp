#pragma once

// Feature-file I/O and sharded application of a trained index to produce
// per-frame label files aligned with a manifest.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mhub/matrix.hpp"
#include "mhub/quantizer/index.hpp"

namespace mhub::labeler {

// Feature files: "MHFT", version u32, dim u32, num_frames u64, then
// num_frames x dim little-endian float32, row-major.
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 20;

enum class NanPolicy { kWarn, kReject };

struct FeatureHeader {
  std::uint32_t version = kFeatureVersion;
  std::uint32_t dim = 0;
  std::uint64_t num_frames = 0;
};

std::vector<std::uint8_t> write_features(const FloatMatrix& m);

// Rejects bad magic/version and payloads whose length differs from the
// header. Non-finite values are counted (nan_count) or, with kReject, raise
// InputError.
FloatMatrix read_features(std::span<const std::uint8_t> bytes, NanPolicy policy = NanPolicy::kWarn,
                          std::size_t* nan_count = nullptr);

FeatureHeader read_feature_header(const std::string& path);
FloatMatrix read_feature_file(const std::string& path, NanPolicy policy = NanPolicy::kWarn,
                              std::size_t* nan_count = nullptr);
void write_feature_file(const std::string& path, const FloatMatrix& m);

// One line per utterance of space-separated cluster ids.
struct LabelFile {
  std::vector<std::vector<std::int32_t>> lines;
  friend bool operator==(const LabelFile&, const LabelFile&) = default;
};

std::string write_labels(const LabelFile& labels);
LabelFile parse_labels(std::string_view text);

struct ShardRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

// Contiguous, order-preserving partition of the files into num_shards ranges
// whose frame totals each differ from total/num_shards by at most the
// largest single file.
std::vector<ShardRange> shard(std::span<const std::uint64_t> frame_counts, std::size_t num_shards);

struct FileError {
  std::size_t position = 0;
  std::string path;
  std::string message;
};

struct ApplyOptions {
  std::size_t ef_search = 64;
  std::size_t num_shards = 0;  // 0: one shard per worker
  std::size_t threads = 0;     // 0: mhub::num_threads()
};

struct LabelRun {
  LabelFile labels;                // failed files leave an empty line
  std::vector<FileError> errors;  // processing continues past failures
  std::uint64_t frames = 0;
  std::uint64_t nan_values = 0;  // replaced by zero before assignment
  double seconds = 0.0;
  double frames_per_second = 0.0;
  bool ok() const { return errors.empty(); }
};

LabelRun apply_labels(const quantizer::Index& idx, const std::vector<std::string>& feature_files,
                      const ApplyOptions& opts = {});

}  // namespace mhub::labeler
