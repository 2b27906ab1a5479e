#include <algorithm>
#include <cmath>

#include "cvault/sim.hpp"

namespace cvault::sim {

namespace {

std::size_t bucket_index(double t, double bucket_s) { return static_cast<std::size_t>(std::floor(t / bucket_s + 1e-9)); }

template <class F>
double mean_over(const std::vector<Bucket>& buckets, std::size_t from, std::size_t to, F rate) {
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = from; i < to && i < buckets.size(); ++i) {
    if (auto r = rate(buckets[i])) {
      sum += *r;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace

DrillReport cold_start_drill(const SimConfig& config) {
  DrillReport out;
  out.flush_at_s = config.drill.flush_at_s;
  out.limiter_enabled = config.limiter.enabled;
  out.max_in_flight = config.limiter.max_in_flight;
  RunHooks hooks;
  hooks.flush_at_s = config.drill.flush_at_s;
  out.metrics = run_sim(config, hooks);

  const auto& buckets = out.metrics.buckets;
  const double bs = config.bucket_s;
  const std::size_t flush = bucket_index(config.drill.flush_at_s, bs);
  const auto window = static_cast<std::size_t>(std::max(1.0, std::round(config.drill.baseline_window_s / bs)));
  const auto l2_rate = [](const Bucket& b) { return b.l2_hit_rate(); };
  if (flush > 0) {
    out.baseline_l2_hit_rate = mean_over(buckets, flush > window ? flush - window : 0, flush, l2_rate);
  } else {
    // Flushing an empty cache: the reference is the steady state at the end
    // of the run, so recovery time is the initial warmup time.
    std::size_t end = bucket_index(config.workload.duration_s - 1e-9, bs) + 1;
    out.baseline_l2_hit_rate = mean_over(buckets, end > window ? end - window : 0, end, l2_rate);
  }
  const double target = config.drill.recovery_fraction * out.baseline_l2_hit_rate;
  for (std::size_t i = flush; i < buckets.size(); ++i) {
    out.max_backlog_after_flush = std::max(out.max_backlog_after_flush, buckets[i].max_backlog);
    out.rejected_after_flush += buckets[i].rejected;
    if (!out.recovery_s) {
      auto r = buckets[i].l2_hit_rate();
      if (r && *r >= target) out.recovery_s = static_cast<double>(i - flush + 1) * bs;
    }
  }
  return out;
}

ScanReport scan_resistance_experiment(const SimConfig& config) {
  ScanReport out;
  out.burst_at_s = config.workload.cron.first_at_s;
  const double bs = config.bucket_s;
  const std::size_t burst = bucket_index(out.burst_at_s, bs);
  const auto window = static_cast<std::size_t>(std::max(1.0, std::round(config.drill.baseline_window_s / bs)));
  const std::size_t end = bucket_index(config.workload.duration_s - 1e-9, bs) + 1;

  auto run_policy = [&](std::size_t k) {
    SimConfig c = config;
    c.topology.lru_k = k;
    ScanPolicyResult r;
    r.k = k;
    r.metrics = run_sim(c);
    for (const Bucket& b : r.metrics.buckets) r.hot_hit_rate.push_back(b.hot_hit_rate());
    r.baseline = mean_over(r.metrics.buckets, burst > window ? burst - window : 0, burst,
                           [](const Bucket& b) { return b.hot_hit_rate(); });
    r.minimum = 1.0;
    for (std::size_t i = burst; i < end && i < r.hot_hit_rate.size(); ++i) {
      if (r.hot_hit_rate[i]) r.minimum = std::min(r.minimum, *r.hot_hit_rate[i]);
    }
    r.hot_evictions = r.metrics.hot_evictions;
    return r;
  };
  out.lru1 = run_policy(1);
  out.lru2 = run_policy(2);
  return out;
}

}  // namespace cvault::sim
