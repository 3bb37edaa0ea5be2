#include "mhub/labeler.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>

#include <spdlog/spdlog.h>

#include "mhub/byteio.hpp"
#include "mhub/error.hpp"
#include "mhub/parallel.hpp"

namespace mhub::labeler {

namespace {

constexpr std::string_view kMagic = "MHFT";

FeatureHeader parse_header(ByteReader& r) {
  if (r.raw(4) != kMagic) throw InputError("features: bad magic");
  FeatureHeader h;
  h.version = r.u32();
  if (h.version != kFeatureVersion) throw InputError("features: unsupported version " + std::to_string(h.version));
  h.dim = r.u32();
  h.num_frames = r.u64();
  return h;
}

}  // namespace

std::vector<std::uint8_t> write_features(const FloatMatrix& m) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(m.cols()));
  w.u64(m.rows());
  w.f32s(m.values());
  return w.take();
}

FloatMatrix read_features(std::span<const std::uint8_t> bytes, NanPolicy policy, std::size_t* nan_count) {
  ByteReader r(bytes, "features");
  const FeatureHeader h = parse_header(r);
  const unsigned __int128 expected = static_cast<unsigned __int128>(h.num_frames) * h.dim * sizeof(float);
  if (expected != r.remaining()) {
    throw InputError("features: payload length mismatch (header says " + std::to_string(h.num_frames) + " x " +
                     std::to_string(h.dim) + ", payload has " + std::to_string(r.remaining()) + " bytes)");
  }
  FloatMatrix m(static_cast<std::size_t>(h.num_frames), h.dim);
  r.f32s(m.storage());
  std::size_t bad = 0;
  for (float v : m.values()) bad += !std::isfinite(v);
  if (bad && policy == NanPolicy::kReject) {
    throw InputError("features: " + std::to_string(bad) + " non-finite values");
  }
  if (nan_count) *nan_count = bad;
  return m;
}

FeatureHeader read_feature_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::vector<std::uint8_t> buf(kFeatureHeaderBytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw InputError(path + ": truncated header");
  ByteReader r(buf, path);
  return parse_header(r);
}

FloatMatrix read_feature_file(const std::string& path, NanPolicy policy, std::size_t* nan_count) {
  try {
    return read_features(read_file_bytes(path), policy, nan_count);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_feature_file(const std::string& path, const FloatMatrix& m) { write_file_bytes(path, write_features(m)); }

std::string write_labels(const LabelFile& labels) {
  std::string out;
  char buf[16];
  for (const auto& line : labels.lines) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i) out += ' ';
      const auto res = std::to_chars(buf, buf + sizeof(buf), line[i]);
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

LabelFile parse_labels(std::string_view text) {
  LabelFile lf;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    std::vector<std::int32_t> values;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\r')) ++p;
      if (p == end) break;
      std::int32_t v = 0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc() || v < 0) throw ParseError(line_no, "bad label value");
      values.push_back(v);
      p = res.ptr;
    }
    lf.lines.push_back(std::move(values));
  }
  return lf;
}

std::vector<ShardRange> shard(std::span<const std::uint64_t> frame_counts, std::size_t num_shards) {
  if (num_shards == 0) throw InputError("shard: num_shards must be >= 1");
  const std::size_t n = frame_counts.size();
  std::vector<std::uint64_t> prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + frame_counts[i];
  const std::uint64_t total = prefix[n];

  // Boundary s sits at the prefix sum nearest to s * total / num_shards. With
  // no frames at all, files are split by count instead.
  std::vector<std::size_t> cut(num_shards + 1, 0);
  cut[num_shards] = n;
  std::size_t i = 0;
  for (std::size_t s = 1; s < num_shards; ++s) {
    if (total == 0) {
      cut[s] = n * s / num_shards;
      continue;
    }
    const long double target = static_cast<long double>(total) * s / num_shards;
    while (i < n && static_cast<long double>(prefix[i + 1]) <= target) ++i;
    // prefix[i] <= target < prefix[i+1] (or i == n)
    std::size_t b = i;
    if (i < n && static_cast<long double>(prefix[i + 1]) - target < target - static_cast<long double>(prefix[i])) {
      b = i + 1;
    }
    cut[s] = std::max(b, cut[s - 1]);
  }
  std::vector<ShardRange> out(num_shards);
  for (std::size_t s = 0; s < num_shards; ++s) out[s] = {cut[s], cut[s + 1]};
  return out;
}

LabelRun apply_labels(const quantizer::Index& idx, const std::vector<std::string>& feature_files,
                      const ApplyOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  LabelRun run;
  const std::size_t n = feature_files.size();
  run.labels.lines.resize(n);
  if (n == 0) return run;

  std::vector<std::uint64_t> frames(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    try {
      frames[i] = read_feature_header(feature_files[i]).num_frames;
    } catch (const InputError&) {
      // Reported when the file is processed.
    }
  }
  const std::size_t threads = opts.threads ? opts.threads : num_threads();
  const std::size_t num_shards = opts.num_shards ? opts.num_shards : threads;
  const auto shards = shard(frames, num_shards);

  std::vector<std::vector<FileError>> errors(shards.size());
  std::vector<std::uint64_t> done_frames(shards.size(), 0);
  std::vector<std::uint64_t> nan_values(shards.size(), 0);
  parallel_chunks(shards.size(), threads, [&](std::size_t, std::size_t first, std::size_t last) {
    for (std::size_t s = first; s < last; ++s) {
      for (std::size_t f = shards[s].begin; f < shards[s].end; ++f) {
        try {
          std::size_t bad = 0;
          FloatMatrix m = read_feature_file(feature_files[f], NanPolicy::kWarn, &bad);
          if (m.rows() && m.cols() != idx.d_in) {
            throw InputError(feature_files[f] + ": dim " + std::to_string(m.cols()) + " != index dim " +
                             std::to_string(idx.d_in));
          }
          if (bad) {
            for (float& v : m.storage()) {
              if (!std::isfinite(v)) v = 0.0f;
            }
            nan_values[s] += bad;
          }
          run.labels.lines[f] = quantizer::index_assign(idx, m, opts.ef_search, 1);
          done_frames[s] += m.rows();
        } catch (const std::exception& e) {
          errors[s].push_back({f, feature_files[f], e.what()});
        }
      }
    }
  });

  for (std::size_t s = 0; s < shards.size(); ++s) {
    run.errors.insert(run.errors.end(), errors[s].begin(), errors[s].end());
    run.frames += done_frames[s];
    run.nan_values += nan_values[s];
  }
  if (run.nan_values) {
    spdlog::warn("labeling: replaced {} non-finite feature values with 0", run.nan_values);
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.frames_per_second = run.seconds > 0 ? static_cast<double>(run.frames) / run.seconds : 0.0;
  return run;
}

}  // namespace mhub::labeler
