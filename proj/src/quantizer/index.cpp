#include "mhub/quantizer/index.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include "mhub/byteio.hpp"
#include "mhub/error.hpp"
#include "mhub/parallel.hpp"
#include "mhub/rng.hpp"

namespace mhub::quantizer {

namespace {

constexpr std::string_view kMagic = "MHIX";
constexpr std::size_t kPqTrainCap = 65536;

bool eat(std::string_view& s, std::string_view prefix) {
  if (!s.starts_with(prefix)) return false;
  s.remove_prefix(prefix.size());
  return true;
}

bool eat_uint(std::string_view& s, std::size_t& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr == s.data()) return false;
  s.remove_prefix(static_cast<std::size_t>(ptr - s.data()));
  return true;
}

[[noreturn]] void bad_config(std::string_view whole, std::string_view why) {
  throw InputError("index config '" + std::string(whole) + "': " + std::string(why));
}

}  // namespace

IndexConfig IndexConfig::parse(std::string_view s) {
  IndexConfig c;
  std::vector<std::string_view> parts;
  for (std::size_t start = 0;;) {
    const std::size_t comma = s.find(',', start);
    parts.push_back(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  std::size_t i = 0;
  if (i < parts.size() && parts[i].starts_with("OPQ")) {
    std::string_view p = parts[i++];
    eat(p, "OPQ");
    if (!eat_uint(p, c.opq_m) || c.opq_m == 0) bad_config(s, "OPQ needs a positive M");
    if (eat(p, "_") && (!eat_uint(p, c.opq_d_out) || c.opq_d_out == 0)) bad_config(s, "OPQ needs a positive D");
    if (!p.empty()) bad_config(s, "trailing characters after OPQ");
    c.has_opq = true;
  }
  if (i >= parts.size()) bad_config(s, "missing IVF component");
  {
    std::string_view p = parts[i++];
    if (!eat(p, "IVF") || !eat_uint(p, c.nlist) || c.nlist == 0) bad_config(s, "expected IVF<K>");
    if (!eat(p, "_HNSW") || !eat_uint(p, c.hnsw_links) || c.hnsw_links < 2) {
      bad_config(s, "expected IVF<K>_HNSW<links> with links >= 2");
    }
    if (!p.empty()) bad_config(s, "trailing characters after IVF");
  }
  if (i >= parts.size()) bad_config(s, "missing PQ component");
  {
    std::string_view p = parts[i++];
    if (!eat(p, "PQ") || !eat_uint(p, c.pq_m) || c.pq_m == 0) bad_config(s, "expected PQ<M>x4");
    if (!eat(p, "x") || !eat_uint(p, c.pq_bits)) bad_config(s, "expected PQ<M>x<bits>");
    if (c.pq_bits != 4) bad_config(s, "only 4-bit PQ is supported");
    if (!(p.empty() || p == "fs" || p == "fsr" || p == "r")) bad_config(s, "unknown PQ suffix");
    c.pq_suffix = std::string(p);
  }
  if (i != parts.size()) bad_config(s, "unexpected trailing components");
  if (c.has_opq && c.opq_d_out && c.opq_d_out % c.opq_m != 0) bad_config(s, "OPQ D must be divisible by M");
  return c;
}

std::string IndexConfig::str() const {
  std::string out;
  if (has_opq) {
    out += "OPQ" + std::to_string(opq_m);
    if (opq_d_out) out += "_" + std::to_string(opq_d_out);
    out += ",";
  }
  out += "IVF" + std::to_string(nlist) + "_HNSW" + std::to_string(hnsw_links);
  out += ",PQ" + std::to_string(pq_m) + "x" + std::to_string(pq_bits) + pq_suffix;
  return out;
}

Index train_index(const FloatMatrix& data, const IndexConfig& config, const IndexTrainOptions& opts) {
  const std::size_t d_in = data.cols();
  const std::size_t d_out = config.output_dim(d_in);
  if (data.rows() < config.nlist) {
    throw InputError("index: need at least K=" + std::to_string(config.nlist) + " training vectors, got " +
                     std::to_string(data.rows()));
  }
  if (d_out > d_in) throw InputError("index: OPQ output dim exceeds input dim " + std::to_string(d_in));
  if (d_out % config.pq_m != 0) {
    throw InputError("index: PQ M=" + std::to_string(config.pq_m) + " does not divide dim " + std::to_string(d_out));
  }
  if (config.has_opq && d_out % config.opq_m != 0) {
    throw InputError("index: OPQ M=" + std::to_string(config.opq_m) + " does not divide dim " + std::to_string(d_out));
  }

  Index idx;
  idx.config = config;
  idx.d_in = d_in;
  if (config.has_opq) {
    OpqOptions oo;
    oo.m_sub = config.opq_m;
    oo.d_out = d_out;
    oo.iters = opts.opq_iters;
    oo.seed = derive_seed(opts.seed, 1);
    oo.max_samples = opts.opq_max_samples ? opts.opq_max_samples : 256 * config.nlist;
    oo.threads = opts.threads;
    idx.opq = train_opq(data, oo);
  } else {
    idx.opq = identity_rotation(d_in);
  }
  const FloatMatrix rotated = idx.opq.apply(data);

  KMeansOptions ko;
  ko.k = config.nlist;
  ko.max_iters = opts.kmeans_iters;
  ko.restarts = opts.kmeans_restarts;
  ko.seed = derive_seed(opts.seed, 2);
  ko.threads = opts.threads;
  idx.coarse = train_kmeans(rotated, ko);

  HnswOptions ho;
  ho.max_links = config.hnsw_links;
  ho.ef_construction = opts.ef_construction;
  ho.seed = derive_seed(opts.seed, 3);
  idx.graph = HnswGraph::build(idx.coarse.centroids, ho);

  PqTrainOptions po;
  po.kmeans_iters = opts.pq_kmeans_iters;
  po.threads = opts.threads;
  idx.pq = train_pq(subsample_rows(rotated, kPqTrainCap, derive_seed(opts.seed, 4)), config.pq_m,
                    derive_seed(opts.seed, 5), po);
  return idx;
}

std::vector<std::int32_t> index_assign(const Index& idx, const FloatMatrix& frames, std::size_t ef_search,
                                       std::size_t threads) {
  if (frames.rows() == 0) return {};
  if (frames.cols() != idx.d_in) {
    throw InputError("index_assign: frame dim " + std::to_string(frames.cols()) + " != index input dim " +
                     std::to_string(idx.d_in));
  }
  std::vector<std::int32_t> labels(frames.rows());
  parallel_chunks(frames.rows(), threads ? threads : num_threads(),
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    std::vector<float> y(idx.d_out());
                    HnswScratch scratch;
                    for (std::size_t i = begin; i < end; ++i) {
                      idx.opq.apply(frames.row(i), y);
                      labels[i] = static_cast<std::int32_t>(
                          idx.graph.search(idx.coarse.centroids, y, ef_search, scratch).index);
                    }
                  });
  return labels;
}

std::vector<std::uint8_t> index_encode(const Index& idx, std::span<const float> frame) {
  if (frame.size() != idx.d_in) throw InputError("index_encode: dim mismatch");
  std::vector<float> y(idx.d_out());
  idx.opq.apply(frame, y);
  return pq_pack(pq_encode(idx.pq, y));
}

std::vector<std::uint8_t> serialize_index(const Index& idx) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kIndexVersion);
  w.str(idx.config.str());
  w.u32(static_cast<std::uint32_t>(idx.d_in));
  w.u32(static_cast<std::uint32_t>(idx.d_out()));
  w.u32(static_cast<std::uint32_t>(idx.k()));
  w.u32(static_cast<std::uint32_t>(idx.pq.m_sub));
  w.u32(static_cast<std::uint32_t>(idx.pq.bits));
  w.u32(static_cast<std::uint32_t>(idx.graph.max_links()));
  w.u32(idx.opq.identity ? 1u : 0u);
  w.f32s(idx.opq.matrix.values());
  w.f32s(idx.coarse.centroids.values());
  w.f64(idx.coarse.inertia);
  w.u32(idx.graph.entry_point());
  w.i32(idx.graph.max_level());
  for (std::uint32_t i = 0; i < idx.graph.size(); ++i) w.i32(idx.graph.level(i));
  for (std::uint32_t i = 0; i < idx.graph.size(); ++i) {
    for (int lev = 0; lev <= idx.graph.level(i); ++lev) {
      const auto nbs = idx.graph.neighbors(i, lev);
      w.u32(static_cast<std::uint32_t>(nbs.size()));
      for (auto nb : nbs) w.u32(nb);
    }
  }
  w.f32s(idx.pq.centroids);
  return w.take();
}

Index deserialize_index(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "index");
  if (r.raw(4) != kMagic) throw InputError("index: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kIndexVersion) throw InputError("index: unsupported version " + std::to_string(version));
  Index idx;
  idx.config = IndexConfig::parse(r.str());
  idx.d_in = r.u32();
  const std::size_t d_out = r.u32();
  const std::size_t k = r.u32();
  const std::size_t pq_m = r.u32();
  const std::size_t pq_bits = r.u32();
  const std::size_t links = r.u32();
  const bool identity = r.u32() != 0;
  if (k != idx.config.nlist || pq_m != idx.config.pq_m || pq_bits != 4 || pq_m == 0 || d_out % pq_m != 0 ||
      d_out != idx.config.output_dim(idx.d_in) || links != idx.config.hnsw_links) {
    throw InputError("index: header does not match its config string");
  }
  r.need((d_out * idx.d_in + k * d_out) * sizeof(float));
  idx.opq.matrix = FloatMatrix(d_out, idx.d_in);
  r.f32s(idx.opq.matrix.storage());
  idx.opq.identity = identity;
  idx.coarse.centroids = FloatMatrix(k, d_out);
  r.f32s(idx.coarse.centroids.storage());
  idx.coarse.inertia = r.f64();

  const std::uint32_t entry = r.u32();
  const int max_level = r.i32();
  r.need(k * 4);
  std::vector<int> levels(k);
  for (auto& l : levels) {
    l = r.i32();
    if (l < 0 || l > 64) throw InputError("index: corrupt graph levels");
  }
  std::vector<std::vector<std::vector<std::uint32_t>>> adj(k);
  for (std::size_t i = 0; i < k; ++i) {
    adj[i].resize(static_cast<std::size_t>(levels[i]) + 1);
    for (auto& list : adj[i]) {
      const std::uint32_t cnt = r.u32();
      if (cnt > 2 * links) throw InputError("index: corrupt adjacency");
      list.resize(cnt);
      for (auto& nb : list) nb = r.u32();
    }
  }
  idx.graph = HnswGraph::from_parts(links, entry, max_level, std::move(levels), std::move(adj));

  idx.pq.m_sub = pq_m;
  idx.pq.bits = pq_bits;
  idx.pq.dsub = d_out / pq_m;
  idx.pq.centroids.resize(pq_m * idx.pq.ksub() * idx.pq.dsub);
  r.f32s(idx.pq.centroids);
  if (r.remaining() != 0) throw InputError("index: trailing bytes");
  return idx;
}

void save_index(const Index& idx, const std::string& path) { write_file_bytes(path, serialize_index(idx)); }

Index load_index(const std::string& path) { return deserialize_index(read_file_bytes(path)); }

}  // namespace mhub::quantizer
