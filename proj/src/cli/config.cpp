#include <filesystem>
#include <fstream>

#include <openssl/evp.h>

#include "mhub/cli.hpp"
#include "mhub/error.hpp"

namespace mhub::cli {

namespace {

using nlohmann::json;

// Copies j[key] into field when present; rejects keys not listed.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InputError("config: '" + where_ + "' must be an object");
  }
  template <typename T>
  Reader& get(const char* key, T& field) {
    seen_.push_back(key);
    if (const auto it = j_.find(key); it != j_.end()) {
      try {
        field = it->get<T>();
      } catch (const json::exception& e) {
        throw InputError("config: " + where_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }
  const json* child(const char* key) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  void done() const {
    for (const auto& [k, v] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) {
        throw InputError("config: unknown key '" + where_ + "." + k + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

}  // namespace

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  Reader top(j, "config");
  top.get("seed", c.seed).get("threads", c.threads);
  if (const json* p = top.child("paths")) {
    Reader r(*p, "paths");
    r.get("manifest", c.paths.manifest)
        .get("features_dir", c.paths.features_dir)
        .get("features_list", c.paths.features_list)
        .get("annotations", c.paths.annotations)
        .get("index", c.paths.index)
        .get("labels", c.paths.labels)
        .get("plans", c.paths.plans)
        .done();
  }
  if (const json* p = top.child("sampling")) {
    Reader r(*p, "sampling");
    r.get("alpha", c.sampling.alpha).get("beta", c.sampling.beta).done();
  }
  if (const json* p = top.child("duration")) {
    Reader r(*p, "duration");
    r.get("min_s", c.duration.min_s).get("max_s", c.duration.max_s).done();
  }
  if (const json* p = top.child("thresholds")) {
    Reader r(*p, "thresholds");
    r.get("music_s", c.thresholds.music_s)
        .get("noise_s", c.thresholds.noise_s)
        .get("no_energy_s", c.thresholds.no_energy_s)
        .done();
  }
  if (const json* p = top.child("index")) {
    Reader r(*p, "index");
    r.get("config", c.index.config)
        .get("ef_search", c.index.ef_search)
        .get("ef_construction", c.index.ef_construction)
        .get("kmeans_iters", c.index.kmeans_iters)
        .get("opq_iters", c.index.opq_iters)
        .get("max_train_vectors", c.index.max_train_vectors)
        .done();
  }
  if (const json* p = top.child("batch")) {
    Reader r(*p, "batch");
    r.get("max_frames", c.batch.max_frames)
        .get("crop_len", c.batch.crop_len)
        .get("frame_rate_hz", c.batch.frame_rate_hz)
        .done();
  }
  if (const json* p = top.child("loss")) {
    Reader r(*p, "loss");
    r.get("psi", c.loss.psi).get("mask_prob", c.loss.mask_prob).get("span_len", c.loss.span_len).done();
  }
  top.done();
  return c;
}

json config_to_json(const PipelineConfig& c) {
  return json{
      {"seed", c.seed},
      {"threads", c.threads},
      {"paths",
       {{"manifest", c.paths.manifest},
        {"features_dir", c.paths.features_dir},
        {"features_list", c.paths.features_list},
        {"annotations", c.paths.annotations},
        {"index", c.paths.index},
        {"labels", c.paths.labels},
        {"plans", c.paths.plans}}},
      {"sampling", {{"alpha", c.sampling.alpha}, {"beta", c.sampling.beta}}},
      {"duration", {{"min_s", c.duration.min_s}, {"max_s", c.duration.max_s}}},
      {"thresholds",
       {{"music_s", c.thresholds.music_s},
        {"noise_s", c.thresholds.noise_s},
        {"no_energy_s", c.thresholds.no_energy_s}}},
      {"index",
       {{"config", c.index.config},
        {"ef_search", c.index.ef_search},
        {"ef_construction", c.index.ef_construction},
        {"kmeans_iters", c.index.kmeans_iters},
        {"opq_iters", c.index.opq_iters},
        {"max_train_vectors", c.index.max_train_vectors}}},
      {"batch",
       {{"max_frames", c.batch.max_frames},
        {"crop_len", c.batch.crop_len},
        {"frame_rate_hz", c.batch.frame_rate_hz}}},
      {"loss", {{"psi", c.loss.psi}, {"mask_prob", c.loss.mask_prob}, {"span_len", c.loss.span_len}}},
  };
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

std::string feature_path_for(const std::string& features_dir, const std::string& utterance_path) {
  std::filesystem::path p(utterance_path);
  p.replace_extension(".mhft");
  return (std::filesystem::path(features_dir) / p).string();
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xf];
  }
  return out;
}

}  // namespace mhub::cli
