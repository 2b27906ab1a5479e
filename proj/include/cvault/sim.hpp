#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvault/hash_ring.hpp"

namespace cvault::sim {

// Lognormal in microseconds, parameterised by its median.
struct Lognormal {
  double median_us = 0.0;
  double sigma = 0.0;
};

struct SlowNode {
  NodeId node = 0;
  double factor = 1.0;
};

struct NodeOutage {
  NodeId node = 0;
  double down_at_s = 0.0;
  double up_at_s = 0.0;  // <= down_at_s means never returns
};

// Default medians are the measured values quoted for the production cache
// (L2 hit 550us, origin 36ms); sigmas reproduce the quoted p99.9 values
// (3.7ms, 175ms). They are defaults, not a model of any real deployment.
struct LatencyModel {
  Lognormal l1{10.0, 0.25};
  Lognormal l2{550.0, 0.6168};
  Lognormal origin{36000.0, 0.5117};
  Lognormal manifest_open{1000.0, 0.5};
  std::vector<SlowNode> slow_nodes;
  std::vector<NodeOutage> outages;
  // Origin latency multiplier 1 + coeff * max(0, in_flight - knee) / knee.
  double origin_load_coeff = 0.0;
  double origin_load_knee = 64.0;
};

struct Spike {
  double at_s = 0.0;
  double duration_s = 0.0;
  double multiplier = 1.0;
};

// Periodic bursts of one-shot functions, each started exactly once.
struct CronSpec {
  double first_at_s = 0.0;
  double period_s = 0.0;  // 0: a single burst
  std::size_t bursts = 0;
  std::size_t functions_per_burst = 0;
  double spread_s = 1.0;  // burst starts are spread evenly over this window
  std::size_t unique_chunks_per_function = 0;
  std::size_t touched_chunks = 0;
};

struct WorkloadSpec {
  std::size_t functions = 0;
  std::size_t shared_base_chunks = 0;
  std::size_t unique_chunks_per_function = 0;
  std::size_t touched_chunks = 0;
  double zipf_s = 1.0;
  double arrival_rate_per_s = 0.0;
  double duration_s = 0.0;
  std::vector<Spike> spikes;
  CronSpec cron;
};

struct Topology {
  std::size_t workers = 1;
  std::size_t l1_capacity_chunks = 0;
  std::size_t l2_nodes = 0;
  std::size_t l2_node_capacity_stripes = 0;
  std::uint32_t vnodes = 100;
  std::size_t lru_k = 2;
  bool placement_affinity = false;
  std::size_t chunk_size = 4096;
  std::uint32_t erasure_k = 4;
  bool redundant_fetch = true;
  std::size_t fetch_parallelism = 1;
  bool prewarm_l2 = false;
};

struct LimiterSpec {
  bool enabled = false;
  std::size_t max_in_flight = 64;
};

// Demand concurrency = offered rate x observed start latency: when starts
// slow down, more sandboxes (and so more starts) are needed. Arrival rate
// is scaled by clamp(latency_ewma / reference, 1, max_multiplier).
struct FeedbackSpec {
  bool enabled = false;
  double reference_latency_us = 10000.0;
  double max_multiplier = 8.0;
  double ewma_alpha = 0.05;
};

struct DrillSpec {
  double flush_at_s = 0.0;
  double recovery_fraction = 0.9;
  double baseline_window_s = 10.0;
};

enum class Mode { run, cold_start, scan_resistance };

struct SimConfig {
  Mode mode = Mode::run;
  std::uint64_t seed = 1;
  double bucket_s = 1.0;
  WorkloadSpec workload;
  LatencyModel latency;
  Topology topology;
  LimiterSpec limiter;
  FeedbackSpec feedback;
  DrillSpec drill;
};

// Throws ValidationError naming the offending field path.
SimConfig parse_config(const nlohmann::json& doc);
SimConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const SimConfig& config);
// Rejects inconsistent settings (touched > image chunks, k vs nodes, ...).
void validate(const SimConfig& config);

class ConcurrencyLimiter {
 public:
  ConcurrencyLimiter(bool enabled, std::size_t max_in_flight) : enabled_(enabled), max_(max_in_flight) {}
  bool try_acquire();
  void release();
  std::size_t in_flight() const { return in_flight_; }
  std::uint64_t rejected() const { return rejected_; }
  bool enabled() const { return enabled_; }
  std::size_t max_in_flight() const { return max_; }

 private:
  bool enabled_;
  std::size_t max_;
  std::size_t in_flight_ = 0;
  std::uint64_t rejected_ = 0;
};

struct Bucket {
  double start_s = 0.0;
  std::uint64_t requests = 0;
  std::uint64_t l1 = 0;
  std::uint64_t l2 = 0;
  std::uint64_t l3 = 0;
  std::uint64_t hot_requests = 0;  // chunk requests from non-cron starts
  std::uint64_t hot_hits = 0;      // of those, served without origin
  std::uint64_t starts = 0;
  std::uint64_t rejected = 0;
  std::size_t max_backlog = 0;

  // l2 / (l2 + l3), the hit rate of requests that reached L2.
  std::optional<double> l2_hit_rate() const;
  std::optional<double> hot_hit_rate() const;
};

struct LittleCheck {
  double time_avg_in_flight = 0.0;
  double arrival_rate_per_s = 0.0;
  double mean_latency_s = 0.0;
  double relative_error() const;
};

struct MetricsReport {
  std::vector<Bucket> buckets;
  std::vector<double> start_latency_us;
  std::vector<double> chunk_latency_us;
  std::vector<double> manifest_open_us;
  // Per admitted start: the largest chunk latency it saw.
  std::vector<double> start_max_chunk_latency_us;
  std::uint64_t starts_admitted = 0;
  std::uint64_t starts_rejected = 0;
  std::uint64_t starts_touching_slow_node = 0;
  std::size_t max_backlog = 0;
  std::uint64_t l2_requests = 0;
  std::uint64_t integrity_events = 0;
  std::uint64_t hot_evictions = 0;  // hot-set entries evicted after the first cron burst began
  std::uint64_t chunk_references = 0;
  std::uint64_t unique_chunks = 0;
  LittleCheck little;

  double dedup_ratio() const;
  nlohmann::json to_json() const;
};

// Empirical CDF table with header "value,cumulative_fraction".
std::string ecdf_csv(const std::vector<double>& samples, std::size_t max_points = 2000);

// Optional actions injected into a run.
struct RunHooks {
  std::optional<double> flush_at_s;  // flush every L1 and all L2 nodes
};

MetricsReport run_sim(const SimConfig& config, const RunHooks& hooks = {});

struct DrillReport {
  double flush_at_s = 0.0;
  double baseline_l2_hit_rate = 0.0;
  std::optional<double> recovery_s;  // flush to first bucket at >= fraction * baseline
  std::size_t max_backlog_after_flush = 0;
  std::uint64_t rejected_after_flush = 0;
  bool limiter_enabled = false;
  std::size_t max_in_flight = 0;
  MetricsReport metrics;

  nlohmann::json to_json() const;
};

DrillReport cold_start_drill(const SimConfig& config);

struct ScanPolicyResult {
  std::size_t k = 0;
  std::vector<std::optional<double>> hot_hit_rate;
  double baseline = 0.0;  // mean hot hit rate over buckets before the burst
  double minimum = 0.0;   // lowest hot hit rate from the burst onwards
  double dip() const { return baseline - minimum; }
  std::uint64_t hot_evictions = 0;
  MetricsReport metrics;
};

struct ScanReport {
  double burst_at_s = 0.0;
  ScanPolicyResult lru1;
  ScanPolicyResult lru2;
  nlohmann::json to_json() const;
};

// Runs the config twice, with LRU-1 and LRU-2 in every cache, same seed.
ScanReport scan_resistance_experiment(const SimConfig& config);

// Writes report.json plus CSV eCDF tables into `dir`; returns written paths.
std::vector<std::filesystem::path> write_reports(const SimConfig& config, const std::filesystem::path& dir);

}  // namespace cvault::sim
