#include "mhub/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "mhub/error.hpp"

namespace mhub::sampler {

namespace {

std::size_t pick(const std::vector<double>& cumulative, double u) {
  // First bucket whose cumulative mass exceeds u; the last bucket absorbs
  // rounding when u lands beyond the final partial sum.
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

// a is strictly longer than b (exact integer comparison across sample rates).
bool longer(const corpus::Utterance& a, const corpus::Utterance& b) {
  return static_cast<__int128>(a.num_samples) * b.sample_rate > static_cast<__int128>(b.num_samples) * a.sample_rate;
}

}  // namespace

void SamplingConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("alpha must be in [0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0)) throw InputError("beta must be in [0, 1]");
}

LanguageDistribution language_probs(const corpus::CorpusStats& stats, double alpha) {
  if (stats.total_examples <= 0) throw InputError("language_probs: empty corpus");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("alpha must be in [0, 1]");
  const double n_total = static_cast<double>(stats.total_examples);
  LanguageDistribution d;
  double z = 0.0;
  for (const auto& [lang, n] : stats.per_language) {
    if (n <= 0) continue;
    const double w = std::pow(static_cast<double>(n) / n_total, alpha);
    d.probs[lang] = w;
    z += w;
  }
  for (auto& [lang, p] : d.probs) p /= z;
  return d;
}

SourceDistribution source_probs(const corpus::CorpusStats& stats, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw InputError("beta must be in [0, 1]");
  SourceDistribution d;
  for (const auto& [key, n] : stats.per_pair) {
    const auto it = stats.per_language.find(key.first);
    if (it == stats.per_language.end() || it->second <= 0) {
      throw InputError("source_probs: language '" + key.first + "' has zero examples");
    }
    if (n <= 0) continue;
    d.probs[key.first][key.second] = std::pow(static_cast<double>(n) / static_cast<double>(it->second), beta);
  }
  for (const auto& [lang, n] : stats.per_language) {
    if (n > 0 && !d.probs.contains(lang)) {
      throw InputError("source_probs: language '" + lang + "' has no sources");
    }
  }
  for (auto& [lang, sources] : d.probs) {
    double z = 0.0;
    for (const auto& [src, w] : sources) z += w;
    for (auto& [src, w] : sources) w /= z;
  }
  return d;
}

TwoLevelSampler::TwoLevelSampler(const corpus::Manifest& m, const SamplingConfig& cfg) {
  cfg.validate();
  if (m.empty()) throw InputError("cannot sample from an empty manifest");
  const auto stats = corpus::compute_stats(m);
  const auto lp = language_probs(stats, cfg.alpha);
  const auto sp = source_probs(stats, cfg.beta);

  std::map<corpus::PairKey, std::size_t> pool_of;
  for (const auto& [key, n] : stats.per_pair) {
    pool_of[key] = pools_.size();
    pools_.emplace_back();
  }
  for (std::size_t i = 0; i < m.utterances.size(); ++i) {
    const auto& u = m.utterances[i];
    pools_[pool_of.at({u.language, u.source})].push_back(i);
  }

  double acc = 0.0;
  for (const auto& [lang, p] : lp.probs) {
    Language l;
    acc += p;
    l.cumulative = acc;
    double src_acc = 0.0;
    for (const auto& [src, q] : sp.probs.at(lang)) {
      src_acc += q;
      l.source_cumulative.push_back(src_acc);
      l.pool_ids.push_back(pool_of.at({lang, src}));
    }
    languages_.push_back(std::move(l));
  }
}

std::size_t TwoLevelSampler::draw_pool(Rng& rng) const {
  const double u = rng.uniform01();
  auto it = std::upper_bound(languages_.begin(), languages_.end(), u,
                             [](double v, const Language& l) { return v < l.cumulative; });
  if (it == languages_.end()) --it;
  const double v = rng.uniform01();
  return it->pool_ids[pick(it->source_cumulative, v)];
}

std::size_t TwoLevelSampler::draw(Rng& rng) const {
  const auto& p = pools_[draw_pool(rng)];
  return p[rng.uniform_index(p.size())];
}

EpochPlan draw_epoch(const corpus::Manifest& m, const SamplingConfig& cfg, std::optional<std::size_t> num_draws) {
  const TwoLevelSampler sampler(m, cfg);
  const std::size_t n = num_draws.value_or(m.size());
  Rng rng(cfg.seed);
  EpochPlan plan;
  plan.draws.resize(n);
  for (auto& d : plan.draws) d = sampler.draw(rng);
  std::sort(plan.draws.begin(), plan.draws.end(), [&](std::size_t a, std::size_t b) {
    const auto& ua = m.utterances[a];
    const auto& ub = m.utterances[b];
    if (longer(ua, ub)) return true;
    if (longer(ub, ua)) return false;
    return a < b;
  });
  for (std::size_t d : plan.draws) ++plan.per_language_counts[m.utterances[d].language];
  return plan;
}

double repeat_fraction(const EpochPlan& plan) {
  if (plan.draws.empty()) return 0.0;
  const std::unordered_set<std::size_t> distinct(plan.draws.begin(), plan.draws.end());
  return static_cast<double>(plan.draws.size() - distinct.size()) / static_cast<double>(plan.draws.size());
}

BudgetSample budget_sample(const corpus::Manifest& m, const SamplingConfig& cfg, std::uint64_t budget_bytes,
                           int feature_dim, double frame_rate_hz, int bytes_per_value) {
  if (budget_bytes == 0) throw InputError("budget_sample: budget must be positive");
  if (feature_dim <= 0 || !(frame_rate_hz > 0.0) || bytes_per_value <= 0) {
    throw InputError("budget_sample: dim, frame rate and bytes per value must be positive");
  }
  BudgetSample out;
  if (m.empty()) return out;

  const TwoLevelSampler sampler(m, cfg);
  Rng rng(cfg.seed);
  const auto bytes_of = [&](std::size_t i) {
    const auto frames = std::max<std::int64_t>(1, m.utterances[i].num_frames(frame_rate_hz));
    return static_cast<std::uint64_t>(frames) * static_cast<std::uint64_t>(feature_dim) *
           static_cast<std::uint64_t>(bytes_per_value);
  };

  // Per-pool shuffled order with a cursor; reshuffled when exhausted.
  std::vector<std::vector<std::size_t>> order(sampler.num_pools());
  std::vector<std::size_t> cursor(sampler.num_pools(), 0);
  for (;;) {
    const std::size_t p = sampler.draw_pool(rng);
    auto& ord = order[p];
    if (cursor[p] == ord.size()) {
      ord = sampler.pool(p);
      shuffle(ord, rng);
      cursor[p] = 0;
    }
    const std::size_t idx = ord[cursor[p]++];
    const std::uint64_t b = bytes_of(idx);
    if (out.bytes + b > budget_bytes) break;
    out.bytes += b;
    out.indices.push_back(idx);
  }
  if (out.indices.empty()) {
    spdlog::warn("budget_sample: budget of {} bytes is smaller than the first drawn utterance", budget_bytes);
  }
  return out;
}

std::int64_t Batch::frames() const {
  std::int64_t total = 0;
  for (const auto& it : items) total += it.crop_len;
  return total;
}

BatchPlan plan_batches(const EpochPlan& plan, const corpus::Manifest& m, const BatchOptions& opts) {
  if (opts.crop_len < 1 || opts.max_frames < 1) throw InputError("plan_batches: crop_len and max_frames must be >= 1");
  if (opts.crop_len > opts.max_frames) throw InputError("plan_batches: crop_len must not exceed max_frames");
  if (!(opts.frame_rate_hz > 0.0)) throw InputError("plan_batches: frame rate must be positive");

  BatchPlan out;
  out.max_frames = opts.max_frames;
  out.crop_len = opts.crop_len;
  Rng rng(opts.seed);
  Batch current;
  std::int64_t current_frames = 0;
  for (std::size_t idx : plan.draws) {
    if (idx >= m.size()) throw InputError("plan_batches: draw refers to utterance outside the manifest");
    const std::int64_t frames = m.utterances[idx].num_frames(opts.frame_rate_hz);
    if (frames <= 0) continue;
    BatchItem item{idx, 0, frames};
    if (frames > opts.crop_len) {
      item.crop_len = opts.crop_len;
      item.crop_start = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(frames - opts.crop_len + 1)));
    }
    if (current_frames + item.crop_len > opts.max_frames) {
      out.batches.push_back(std::move(current));
      current = Batch{};
      current_frames = 0;
    }
    current.items.push_back(item);
    current_frames += item.crop_len;
  }
  if (!current.items.empty()) out.batches.push_back(std::move(current));
  return out;
}

std::string write_epoch_plan(const EpochPlan& plan, const corpus::Manifest& m) {
  std::string out;
  for (std::size_t rank = 0; rank < plan.draws.size(); ++rank) {
    const std::size_t i = plan.draws[rank];
    const auto& u = m.utterances.at(i);
    nlohmann::ordered_json j;
    j["rank"] = rank;
    j["index"] = i;
    j["id"] = u.id;
    j["language"] = u.language;
    j["source"] = u.source;
    j["num_samples"] = u.num_samples;
    out += j.dump();
    out += '\n';
  }
  return out;
}

EpochPlan parse_epoch_plan(std::string_view jsonl, const corpus::Manifest& m) {
  EpochPlan plan;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t eol = jsonl.find('\n', pos);
    if (eol == std::string_view::npos) eol = jsonl.size();
    const std::string_view line = jsonl.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    std::size_t idx = 0;
    std::string id;
    try {
      const auto j = nlohmann::json::parse(line);
      idx = j.at("index").get<std::size_t>();
      id = j.at("id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    if (idx >= m.size() || m.utterances[idx].id != id) {
      throw ParseError(line_no, "draw '" + id + "' does not match the manifest");
    }
    plan.draws.push_back(idx);
    ++plan.per_language_counts[m.utterances[idx].language];
  }
  return plan;
}

std::string write_batch_plan(const BatchPlan& plan, const corpus::Manifest& m) {
  std::string out;
  for (std::size_t b = 0; b < plan.batches.size(); ++b) {
    nlohmann::ordered_json j;
    j["batch"] = b;
    j["frames"] = plan.batches[b].frames();
    auto items = nlohmann::ordered_json::array();
    for (const auto& it : plan.batches[b].items) {
      nlohmann::ordered_json e;
      e["index"] = it.utterance;
      e["id"] = m.utterances.at(it.utterance).id;
      e["start"] = it.crop_start;
      e["len"] = it.crop_len;
      items.push_back(std::move(e));
    }
    j["items"] = std::move(items);
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace mhub::sampler
