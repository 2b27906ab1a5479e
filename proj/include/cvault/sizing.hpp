#pragma once

#include <cstdint>
#include <vector>

namespace cvault {

// Cache sizing after the five-minute rule: keep an item while the cost of
// holding it for its reuse interval is below the cost of refetching it.
struct SizingInputs {
  // Cost of retaining one byte for one second.
  double cost_per_byte_second = 0.0;
  // Cost of one origin fetch of one item.
  double cost_per_fetch = 0.0;
  double item_bytes = 0.0;
  // Reuse interval of each distinct item, in seconds (inter-access gap).
  std::vector<double> reuse_intervals_s;
  // Fraction of accesses that should hit, in [0, 1].
  double hit_rate_goal = 0.0;
  // Access rate of each item, per second, parallel to reuse_intervals_s.
  // Empty means 1 / interval.
  std::vector<double> access_rates;
};

struct SizingReport {
  double break_even_interval_s = 0.0;
  double break_even_bytes = 0.0;
  double hit_rate_goal_bytes = 0.0;
  double achieved_hit_rate = 0.0;
  double recommended_bytes = 0.0;
};

// Throws ValidationError on negative or inconsistent inputs.
SizingReport size_cache(const SizingInputs& in);

}  // namespace cvault
