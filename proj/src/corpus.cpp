#include "mhub/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "mhub/error.hpp"
#include "mhub/rng.hpp"

namespace mhub::corpus {

namespace {

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

using Key = std::tuple<std::string, std::string, std::string>;

Key key_of(const Utterance& u) { return {u.language, u.source, u.id}; }

}  // namespace

std::int64_t Utterance::num_frames(double frame_rate_hz) const {
  return static_cast<std::int64_t>(std::floor(duration_s() * frame_rate_hz));
}

Manifest parse_manifest(std::string_view text) {
  Manifest m;
  std::set<Key> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_root = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!have_root) {
      m.root = std::string(line);
      have_root = true;
      continue;
    }
    if (line.empty()) {
      // Only a trailing newline is tolerated.
      if (pos >= text.size()) break;
      throw ParseError(line_no, "empty line");
    }
    const auto f = split_tabs(line);
    if (f.size() != 6) {
      throw ParseError(line_no, "expected 6 tab-separated columns, got " + std::to_string(f.size()));
    }
    Utterance u;
    u.id = std::string(f[0]);
    u.path = std::string(f[1]);
    u.language = std::string(f[2]);
    u.source = std::string(f[3]);
    if (u.id.empty() || u.path.empty() || u.language.empty() || u.source.empty()) {
      throw ParseError(line_no, "empty field");
    }
    if (!parse_int(f[4], u.num_samples)) throw ParseError(line_no, "num_samples is not an integer");
    if (!parse_int(f[5], u.sample_rate)) throw ParseError(line_no, "sample_rate is not an integer");
    if (u.num_samples <= 0) {
      throw ParseError(line_no, "utterance '" + u.id + "' has non-positive num_samples");
    }
    if (u.sample_rate <= 0) {
      throw ParseError(line_no, "utterance '" + u.id + "' has non-positive sample_rate");
    }
    if (!seen.insert(key_of(u)).second) {
      throw ParseError(line_no, "duplicate key (" + u.language + ", " + u.source + ", " + u.id + ")");
    }
    m.utterances.push_back(std::move(u));
  }
  if (!have_root) throw ParseError(1, "missing root line");
  return m;
}

std::string write_manifest(const Manifest& m) {
  std::string out = m.root;
  out += '\n';
  for (const auto& u : m.utterances) {
    out += u.id;
    out += '\t';
    out += u.path;
    out += '\t';
    out += u.language;
    out += '\t';
    out += u.source;
    out += '\t';
    out += std::to_string(u.num_samples);
    out += '\t';
    out += std::to_string(u.sample_rate);
    out += '\n';
  }
  return out;
}

Manifest read_manifest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open manifest: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_manifest(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path + ": " + e.what());
  }
}

void write_manifest_file(const Manifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write manifest: " + path);
  out << write_manifest(m);
}

void validate(const Manifest& m) {
  std::set<Key> seen;
  for (const auto& u : m.utterances) {
    if (u.num_samples <= 0 || u.sample_rate <= 0) {
      throw InputError("utterance '" + u.id + "' has non-positive num_samples or sample_rate");
    }
    if (!seen.insert(key_of(u)).second) {
      throw InputError("duplicate key (" + u.language + ", " + u.source + ", " + u.id + ")");
    }
  }
}

CorpusStats compute_stats(const Manifest& m) {
  CorpusStats s;
  double seconds = 0.0;
  for (const auto& u : m.utterances) {
    ++s.total_examples;
    ++s.per_language[u.language];
    ++s.per_pair[{u.language, u.source}];
    seconds += u.duration_s();
  }
  s.total_hours = seconds / 3600.0;
  return s;
}

DurationSplit filter_durations(const Manifest& m, double min_s, double max_s) {
  if (!(min_s < max_s)) throw InputError("filter_durations: min_s must be < max_s");
  DurationSplit out;
  out.kept.root = m.root;
  for (const auto& u : m.utterances) {
    const double d = u.duration_s();
    if (d >= min_s && d <= max_s) {
      out.kept.utterances.push_back(u);
    } else {
      out.dropped.push_back(u);
    }
  }
  return out;
}

ConcatenationPlan concat_short(const Manifest& m, double target_min_s) {
  ConcatenationPlan plan;
  plan.target_min_s = target_min_s;
  std::vector<PairKey> order;
  std::map<PairKey, std::vector<const Utterance*>> pools;
  for (const auto& u : m.utterances) {
    PairKey k{u.language, u.source};
    auto [it, inserted] = pools.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back(&u);
  }
  for (const auto& k : order) {
    ConcatGroup open;
    for (const Utterance* u : pools[k]) {
      if (open.ids.empty()) {
        open.language = k.first;
        open.source = k.second;
      }
      open.ids.push_back(u->id);
      open.duration_s += u->duration_s();
      if (open.duration_s >= target_min_s) {
        plan.groups.push_back(std::move(open));
        open = ConcatGroup{};
      }
    }
    if (!open.ids.empty()) {
      open.under_target = true;
      plan.groups.push_back(std::move(open));
    }
  }
  return plan;
}

Manifest carve_validation(const Manifest& m, int per_pair, std::uint64_t seed) {
  if (per_pair < 1) throw InputError("carve_validation: per_pair must be >= 1");
  std::map<PairKey, std::vector<std::size_t>> pools;
  for (std::size_t i = 0; i < m.utterances.size(); ++i) {
    const auto& u = m.utterances[i];
    pools[{u.language, u.source}].push_back(i);
  }
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  for (auto& [key, pool] : pools) {
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(per_pair), pool.size());
    // Partial Fisher-Yates: the first `take` slots become the sample.
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + rng.uniform_index(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(chosen.begin(), chosen.end());
  Manifest out;
  out.root = m.root;
  out.utterances.reserve(chosen.size());
  for (std::size_t i : chosen) out.utterances.push_back(m.utterances[i]);
  return out;
}

double estimate_storage(double hours, int feature_dim, double frame_rate_hz, int bytes_per_value) {
  if (!(hours >= 0.0) || !std::isfinite(hours)) throw InputError("estimate_storage: hours must be >= 0");
  if (feature_dim <= 0 || !(frame_rate_hz > 0.0) || bytes_per_value <= 0) {
    throw InputError("estimate_storage: dim, frame rate and bytes per value must be positive");
  }
  return hours * 3600.0 * frame_rate_hz * static_cast<double>(feature_dim) * static_cast<double>(bytes_per_value);
}

}  // namespace mhub::corpus
