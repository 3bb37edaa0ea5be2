#include "mhub/quantizer/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include "mhub/error.hpp"
#include "mhub/rng.hpp"

namespace mhub::quantizer {

namespace {

inline float dist(const FloatMatrix& points, const float* q, std::uint32_t node) {
  return simd::active().l2sq(q, points.row(node).data(), points.cols());
}

}  // namespace

void HnswScratch::prepare(std::size_t n) {
  if (tags_.size() < n) tags_.resize(n, 0);
  if (++epoch_ == 0) {
    std::fill(tags_.begin(), tags_.end(), 0);
    epoch_ = 1;
  }
}

std::uint32_t HnswGraph::greedy_descend(const FloatMatrix& points, const float* q, std::uint32_t start,
                                        float& start_dist, int level) const {
  std::uint32_t cur = start;
  bool moved = true;
  while (moved) {
    moved = false;
    for (std::uint32_t nb : links_[cur][static_cast<std::size_t>(level)]) {
      const float d = dist(points, q, nb);
      if (d < start_dist || (d == start_dist && nb < cur)) {
        start_dist = d;
        cur = nb;
        moved = true;
      }
    }
  }
  return cur;
}

std::vector<HnswGraph::Candidate> HnswGraph::search_layer(const FloatMatrix& points, const float* q,
                                                          std::uint32_t entry, float entry_dist, std::size_t ef,
                                                          int level, HnswScratch& scratch) const {
  scratch.prepare(size());
  // candidates: min-heap on distance; results: max-heap on distance.
  auto& cand = scratch.candidates_;
  auto& res = scratch.results_;
  cand.clear();
  res.clear();
  const auto min_cmp = [](const Candidate& a, const Candidate& b) { return a > b; };
  const auto max_cmp = [](const Candidate& a, const Candidate& b) { return a < b; };

  scratch.visit(entry);
  cand.emplace_back(entry_dist, entry);
  res.emplace_back(entry_dist, entry);
  while (!cand.empty()) {
    std::pop_heap(cand.begin(), cand.end(), min_cmp);
    const Candidate c = cand.back();
    cand.pop_back();
    if (c.first > res.front().first && res.size() >= ef) break;
    for (std::uint32_t nb : links_[c.second][static_cast<std::size_t>(level)]) {
      if (!scratch.visit(nb)) continue;
      const float d = dist(points, q, nb);
      if (res.size() < ef || d < res.front().first) {
        cand.emplace_back(d, nb);
        std::push_heap(cand.begin(), cand.end(), min_cmp);
        res.emplace_back(d, nb);
        std::push_heap(res.begin(), res.end(), max_cmp);
        if (res.size() > ef) {
          std::pop_heap(res.begin(), res.end(), max_cmp);
          res.pop_back();
        }
      }
    }
  }
  std::vector<Candidate> out(res.begin(), res.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<HnswGraph::Candidate> HnswGraph::select_neighbors(const FloatMatrix& points,
                                                              const std::vector<Candidate>& sorted,
                                                              std::size_t m) const {
  // Keep a candidate only if it is closer to the base point than to every
  // neighbour already kept.
  std::vector<Candidate> kept;
  for (const auto& c : sorted) {
    if (kept.size() >= m) break;
    bool good = true;
    for (const auto& k : kept) {
      if (dist(points, points.row(c.second).data(), k.second) < c.first) {
        good = false;
        break;
      }
    }
    if (good) kept.push_back(c);
  }
  return kept;
}

void HnswGraph::link(const FloatMatrix& points, std::uint32_t from, std::uint32_t to, int level) {
  auto& list = links_[from][static_cast<std::size_t>(level)];
  if (std::find(list.begin(), list.end(), to) != list.end()) return;
  list.push_back(to);
  const std::size_t cap = max_links_at(level);
  if (list.size() <= cap) return;
  const float* base = points.row(from).data();
  std::vector<Candidate> cands;
  cands.reserve(list.size());
  for (std::uint32_t nb : list) cands.emplace_back(dist(points, base, nb), nb);
  std::sort(cands.begin(), cands.end());
  const auto kept = select_neighbors(points, cands, cap);
  list.clear();
  for (const auto& k : kept) list.push_back(k.second);
}

HnswGraph HnswGraph::build(const FloatMatrix& points, const HnswOptions& opts) {
  if (opts.max_links < 2) throw InputError("HNSW: max_links must be >= 2");
  HnswGraph g;
  g.max_links_ = opts.max_links;
  const std::size_t n = points.rows();
  g.levels_.resize(n);
  g.links_.resize(n);
  const double level_mult = 1.0 / std::log(static_cast<double>(opts.max_links));
  Rng rng(opts.seed);
  HnswScratch scratch;
  const std::size_t ef = std::max<std::size_t>(opts.ef_construction, opts.max_links);

  for (std::size_t i = 0; i < n; ++i) {
    const auto node = static_cast<std::uint32_t>(i);
    const double u = 1.0 - rng.uniform01();  // (0, 1]
    const int level = static_cast<int>(std::floor(-std::log(u) * level_mult));
    g.levels_[i] = level;
    g.links_[i].resize(static_cast<std::size_t>(level) + 1);
    if (g.max_level_ < 0) {
      g.entry_ = node;
      g.max_level_ = level;
      continue;
    }
    const float* q = points.row(i).data();
    std::uint32_t cur = g.entry_;
    float cur_dist = dist(points, q, cur);
    for (int lev = g.max_level_; lev > level; --lev) cur = g.greedy_descend(points, q, cur, cur_dist, lev);
    for (int lev = std::min(level, g.max_level_); lev >= 0; --lev) {
      const auto found = g.search_layer(points, q, cur, cur_dist, ef, lev, scratch);
      const auto chosen = g.select_neighbors(points, found, opts.max_links);
      for (const auto& c : chosen) {
        g.link(points, node, c.second, lev);
        g.link(points, c.second, node, lev);
      }
      cur = found.front().second;
      cur_dist = found.front().first;
    }
    if (level > g.max_level_) {
      g.max_level_ = level;
      g.entry_ = node;
    }
  }
  return g;
}

simd::Nearest HnswGraph::search(const FloatMatrix& points, std::span<const float> query, std::size_t ef_search,
                                HnswScratch& scratch) const {
  if (empty()) throw InputError("HNSW: search on an empty graph");
  if (query.size() != points.cols()) throw InputError("HNSW: query dim mismatch");
  const float* q = query.data();
  std::uint32_t cur = entry_;
  float cur_dist = dist(points, q, cur);
  for (int lev = max_level_; lev > 0; --lev) cur = greedy_descend(points, q, cur, cur_dist, lev);
  const auto found = search_layer(points, q, cur, cur_dist, std::max<std::size_t>(1, ef_search), 0, scratch);
  return {found.front().second, found.front().first};
}

simd::Nearest HnswGraph::search(const FloatMatrix& points, std::span<const float> query,
                                std::size_t ef_search) const {
  HnswScratch scratch;
  return search(points, query, ef_search, scratch);
}

HnswGraph HnswGraph::from_parts(std::size_t max_links, std::uint32_t entry, int max_level, std::vector<int> levels,
                                std::vector<std::vector<std::vector<std::uint32_t>>> links) {
  const std::size_t n = levels.size();
  if (links.size() != n) throw InputError("HNSW: level/link count mismatch");
  if (n > 0 && (entry >= n || levels[entry] != max_level)) throw InputError("HNSW: bad entry point");
  for (std::size_t i = 0; i < n; ++i) {
    if (levels[i] < 0 || levels[i] > max_level || links[i].size() != static_cast<std::size_t>(levels[i]) + 1) {
      throw InputError("HNSW: bad level for node " + std::to_string(i));
    }
    for (std::size_t lev = 0; lev < links[i].size(); ++lev) {
      if (links[i][lev].size() > (lev == 0 ? 2 * max_links : max_links)) throw InputError("HNSW: link cap exceeded");
      for (auto nb : links[i][lev]) {
        if (nb >= n || levels[nb] < static_cast<int>(lev)) throw InputError("HNSW: dangling link");
      }
    }
  }
  HnswGraph g;
  g.max_links_ = max_links;
  g.entry_ = entry;
  g.max_level_ = n ? max_level : -1;
  g.levels_ = std::move(levels);
  g.links_ = std::move(links);
  return g;
}

}  // namespace mhub::quantizer
