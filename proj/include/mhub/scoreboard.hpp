#pragma once

// SOTA-normalised aggregate of multi-task evaluation metrics (SUPERB-style).

#include <string>
#include <string_view>
#include <vector>

namespace mhub::scoreboard {

enum class Direction { kHigherBetter, kLowerBetter };

struct MetricEntry {
  std::string task;
  double value = 0.0;
  Direction direction = Direction::kHigherBetter;
  double sota = 1.0;
  double floor = 0.0;
};

struct ScoreOptions {
  bool clip = false;  // cap each normalised entry at 1 (SOTA)
};

// Normalised position of value between floor (0) and SOTA (1).
double normalized(const MetricEntry& e);

// 1000 * mean of the normalised entries. Throws InputError on an empty list,
// sota == floor, or non-finite values.
double superb_score(const std::vector<MetricEntry>& entries, const ScoreOptions& opts = {});

// CSV rows `task,value,direction,sota,floor`; a leading header row is
// skipped. direction is higher_better or lower_better.
std::vector<MetricEntry> parse_metrics_csv(std::string_view text);

}  // namespace mhub::scoreboard
