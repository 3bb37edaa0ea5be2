#pragma once

// Pipeline orchestration behind the `mhub` command-line tool.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace mhub::cli {

enum ExitCode : int {
  kOk = 0,
  kInputError = 1,
  kPartialFailure = 2,
  kInternalError = 3,
};

struct PipelineConfig {
  std::uint64_t seed = 0;  // root seed; each subcommand derives its own
  std::size_t threads = 0;

  struct Paths {
    std::string manifest;
    std::string features_dir;
    std::string features_list;
    std::string annotations;
    std::string index;
    std::string labels;
    std::string plans;
  } paths;

  struct Sampling {
    double alpha = 0.7;
    double beta = 0.9;
  } sampling;

  struct Duration {
    double min_s = 2.0;
    double max_s = 30.0;
  } duration;

  struct Thresholds {
    double music_s = 2.0;
    double noise_s = 2.0;
    double no_energy_s = 5.0;
  } thresholds;

  struct IndexParams {
    std::string config = "OPQ16_64,IVF1000_HNSW32,PQ16x4fsr";
    std::size_t ef_search = 64;
    std::size_t ef_construction = 200;
    int kmeans_iters = 20;
    int opq_iters = 10;
    std::size_t max_train_vectors = 0;  // 0: all frames
  } index;

  struct BatchParams {
    std::int64_t max_frames = 2'800'000;
    std::int64_t crop_len = 400;
    double frame_rate_hz = 50.0;
  } batch;

  struct LossParams {
    double psi = 1.0;
    double mask_prob = 0.08;
    std::int64_t span_len = 10;
  } loss;
};

// Reads a JSON config; unknown keys are rejected.
PipelineConfig load_config(const std::string& path);
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& c);

// Feature file for a manifest utterance: <features_dir>/<path with its
// extension replaced by .mhft>.
std::string feature_path_for(const std::string& features_dir, const std::string& utterance_path);

// Hex SHA-256 of a file's bytes.
std::string file_digest(const std::string& path);

// Runs one command line (argv[0] is the program name). The JSON report goes
// to `out` (or the human summary with --format text); diagnostics go to
// `err`. Returns an ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mhub::cli
