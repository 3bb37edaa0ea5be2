#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mhub/matrix.hpp"
#include "mhub/simd/kernels.hpp"

namespace mhub::quantizer {

struct HnswOptions {
  std::size_t max_links = 32;  // per node at levels >= 1; level 0 allows twice as many
  std::size_t ef_construction = 200;
  std::uint64_t seed = 0;
};

// Per-thread search state (visited marks and candidate buffers). A graph may
// be searched concurrently as long as each thread owns its scratch.
class HnswScratch {
 public:
  void prepare(std::size_t n);
  bool visit(std::uint32_t node) {
    if (tags_[node] == epoch_) return false;
    tags_[node] = epoch_;
    return true;
  }

 private:
  friend class HnswGraph;
  std::vector<std::uint32_t> tags_;
  std::uint32_t epoch_ = 0;
  std::vector<std::pair<float, std::uint32_t>> candidates_;
  std::vector<std::pair<float, std::uint32_t>> results_;
};

// Hierarchical navigable small-world graph over a fixed point set (the
// coarse centroids). Points are not owned; callers pass the same matrix to
// build and search.
class HnswGraph {
 public:
  HnswGraph() = default;

  static HnswGraph build(const FloatMatrix& points, const HnswOptions& opts);

  std::size_t size() const { return levels_.size(); }
  bool empty() const { return levels_.empty(); }
  std::size_t max_links() const { return max_links_; }
  std::size_t max_links_at(int level) const { return level == 0 ? 2 * max_links_ : max_links_; }
  int max_level() const { return max_level_; }
  std::uint32_t entry_point() const { return entry_; }
  int level(std::uint32_t node) const { return levels_[node]; }
  std::span<const std::uint32_t> neighbors(std::uint32_t node, int level) const {
    return links_[node][static_cast<std::size_t>(level)];
  }

  // Approximate nearest point to `query`. Throws InputError on an empty graph.
  simd::Nearest search(const FloatMatrix& points, std::span<const float> query, std::size_t ef_search,
                       HnswScratch& scratch) const;
  simd::Nearest search(const FloatMatrix& points, std::span<const float> query, std::size_t ef_search) const;

  // Raw construction for deserialisation; validates structure.
  static HnswGraph from_parts(std::size_t max_links, std::uint32_t entry, int max_level, std::vector<int> levels,
                              std::vector<std::vector<std::vector<std::uint32_t>>> links);

  friend bool operator==(const HnswGraph&, const HnswGraph&) = default;

 private:
  using Candidate = std::pair<float, std::uint32_t>;

  std::uint32_t greedy_descend(const FloatMatrix& points, const float* q, std::uint32_t start, float& start_dist,
                               int level) const;
  // Best-first search at one level; returns up to ef candidates, nearest first.
  std::vector<Candidate> search_layer(const FloatMatrix& points, const float* q, std::uint32_t entry,
                                      float entry_dist, std::size_t ef, int level, HnswScratch& scratch) const;
  std::vector<Candidate> select_neighbors(const FloatMatrix& points, const std::vector<Candidate>& sorted,
                                          std::size_t m) const;
  void link(const FloatMatrix& points, std::uint32_t from, std::uint32_t to, int level);

  std::size_t max_links_ = 32;
  std::uint32_t entry_ = 0;
  int max_level_ = -1;
  std::vector<int> levels_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // [node][level] -> neighbour ids
};

}  // namespace mhub::quantizer
