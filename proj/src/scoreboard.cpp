#include "mhub/scoreboard.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "mhub/error.hpp"

namespace mhub::scoreboard {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  s = trim(s);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(line, "not a number: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

double normalized(const MetricEntry& e) {
  if (e.direction == Direction::kHigherBetter) return (e.value - e.floor) / (e.sota - e.floor);
  return (e.floor - e.value) / (e.floor - e.sota);
}

double superb_score(const std::vector<MetricEntry>& entries, const ScoreOptions& opts) {
  if (entries.empty()) throw InputError("score: no entries");
  double sum = 0.0;
  for (const auto& e : entries) {
    if (e.sota == e.floor) throw InputError("score: task '" + e.task + "' has sota == floor");
    if (!std::isfinite(e.value) || !std::isfinite(e.sota) || !std::isfinite(e.floor)) {
      throw InputError("score: task '" + e.task + "' has a non-finite value");
    }
    double n = normalized(e);
    if (opts.clip) n = std::min(n, 1.0);
    sum += n;
  }
  return 1000.0 * sum / static_cast<double>(entries.size());
}

std::vector<MetricEntry> parse_metrics_csv(std::string_view text) {
  std::vector<MetricEntry> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    for (std::size_t s = 0;;) {
      const std::size_t comma = line.find(',', s);
      f.push_back(trim(line.substr(s, comma == std::string_view::npos ? std::string_view::npos : comma - s)));
      if (comma == std::string_view::npos) break;
      s = comma + 1;
    }
    if (f.size() != 5) throw ParseError(line_no, "expected 5 columns: task,value,direction,sota,floor");
    if (out.empty() && f[0] == "task" && f[1] == "value") continue;
    MetricEntry e;
    e.task = std::string(f[0]);
    e.value = parse_double(f[1], line_no);
    if (f[2] == "higher_better" || f[2] == "higher") {
      e.direction = Direction::kHigherBetter;
    } else if (f[2] == "lower_better" || f[2] == "lower") {
      e.direction = Direction::kLowerBetter;
    } else {
      throw ParseError(line_no, "direction must be higher_better or lower_better");
    }
    e.sota = parse_double(f[3], line_no);
    e.floor = parse_double(f[4], line_no);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace mhub::scoreboard
