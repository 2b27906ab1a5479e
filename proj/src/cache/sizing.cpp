#include "cvault/sizing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cvault/errors.hpp"

namespace cvault {

SizingReport size_cache(const SizingInputs& in) {
  if (!(in.cost_per_byte_second > 0) || !(in.cost_per_fetch >= 0) || !(in.item_bytes > 0))
    throw ValidationError("sizing: costs must be non-negative and byte cost, item size positive");
  if (in.hit_rate_goal < 0 || in.hit_rate_goal > 1) throw ValidationError("sizing: hit_rate_goal must be in [0, 1]");
  if (!in.access_rates.empty() && in.access_rates.size() != in.reuse_intervals_s.size())
    throw ValidationError("sizing: access_rates must parallel reuse_intervals_s");

  struct Item {
    double interval;
    double rate;
  };
  std::vector<Item> items;
  items.reserve(in.reuse_intervals_s.size());
  for (std::size_t i = 0; i < in.reuse_intervals_s.size(); ++i) {
    double interval = in.reuse_intervals_s[i];
    if (!(interval > 0)) throw ValidationError("sizing: reuse intervals must be positive");
    double rate = in.access_rates.empty() ? 1.0 / interval : in.access_rates[i];
    if (rate < 0) throw ValidationError("sizing: access rates must be non-negative");
    items.push_back({interval, rate});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.interval < b.interval; });
  double total_rate = std::accumulate(items.begin(), items.end(), 0.0, [](double s, const Item& it) { return s + it.rate; });

  SizingReport out;
  out.break_even_interval_s = in.cost_per_fetch / (in.item_bytes * in.cost_per_byte_second);
  std::size_t worth = 0;
  while (worth < items.size() && items[worth].interval <= out.break_even_interval_s) ++worth;
  out.break_even_bytes = static_cast<double>(worth) * in.item_bytes;

  std::size_t goal_items = 0;
  double covered = 0;
  while (goal_items < items.size() && (total_rate == 0 ? 0.0 : covered / total_rate) < in.hit_rate_goal) {
    covered += items[goal_items].rate;
    ++goal_items;
  }
  out.hit_rate_goal_bytes = static_cast<double>(goal_items) * in.item_bytes;

  std::size_t chosen = std::max(worth, goal_items);
  out.recommended_bytes = static_cast<double>(chosen) * in.item_bytes;
  double hit = 0;
  for (std::size_t i = 0; i < chosen; ++i) hit += items[i].rate;
  out.achieved_hit_rate = total_rate == 0 ? 0.0 : hit / total_rate;
  return out;
}

}  // namespace cvault
