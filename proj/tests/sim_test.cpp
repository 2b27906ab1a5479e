#include <gtest/gtest.h>

#include <cmath>

#include "cvault/errors.hpp"
#include "cvault/sim.hpp"
#include "cvault/stats.hpp"

using namespace cvault;
using namespace cvault::sim;
using nlohmann::json;

namespace {

json small_config() {
  return json::parse(R"({
    "mode": "run", "seed": 3, "bucket_s": 1,
    "workload": {"functions": 6, "shared_base_chunks": 10, "unique_chunks_per_function": 40,
                 "touched_chunks": 30, "zipf_s": 1.0, "arrival_rate_per_s": 20, "duration_s": 20},
    "topology": {"workers": 3, "l1_capacity_chunks": 60, "l2_nodes": 6, "l2_node_capacity_stripes": 200,
                 "chunk_size": 256, "fetch_parallelism": 4}
  })");
}

std::string error_of(const json& doc) {
  try {
    validate(parse_config(doc));
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(SimConfigParse, MissingFieldNamed) {
  json doc = small_config();
  doc["workload"].erase("functions");
  EXPECT_NE(error_of(doc).find("workload.functions"), std::string::npos);
  json doc2 = small_config();
  doc2.erase("seed");
  EXPECT_NE(error_of(doc2).find("seed"), std::string::npos);
}

TEST(SimConfigParse, UnknownFieldNamed) {
  json doc = small_config();
  doc["topology"]["wrokers"] = 2;
  EXPECT_NE(error_of(doc).find("topology.wrokers"), std::string::npos);
}

TEST(SimConfigParse, WrongTypeNamed) {
  json doc = small_config();
  doc["workload"]["duration_s"] = "long";
  EXPECT_NE(error_of(doc).find("workload.duration_s"), std::string::npos);
}

TEST(SimConfigParse, InconsistentSettingsRejected) {
  json doc = small_config();
  doc["workload"]["touched_chunks"] = 51;
  EXPECT_NE(error_of(doc).find("touched_chunks"), std::string::npos);
  json doc2 = small_config();
  doc2["topology"]["l2_nodes"] = 4;
  EXPECT_NE(error_of(doc2).find("l2_nodes"), std::string::npos);
  json doc3 = small_config();
  doc3["latency"] = {{"slow_nodes", json::array({{{"node", 9}, {"factor", 10}}})}};
  EXPECT_NE(error_of(doc3).find("slow_nodes"), std::string::npos);
}

TEST(SimConfigParse, RoundTripThroughJson) {
  SimConfig c = parse_config(small_config());
  EXPECT_EQ(config_to_json(parse_config(config_to_json(c))), config_to_json(c));
}

TEST(SimConfigParse, BundledConfigsValidate) {
  for (const char* name : {"tail_latency.json", "tail_uniform.json", "cold_start.json", "scan_resistance.json"}) {
    EXPECT_NO_THROW(validate(load_config(std::string(CVAULT_CONFIGS) + "/" + name))) << name;
  }
}

// The lognormal sigmas put p99.9 (z = 3.0902) at the quoted values.
TEST(LatencyDefaults, SigmaReproducesQuotedTail) {
  LatencyModel m;
  const double z = 3.090232;
  EXPECT_NEAR(m.l2.median_us * std::exp(z * m.l2.sigma), 3700.0, 5.0);
  EXPECT_NEAR(m.origin.median_us * std::exp(z * m.origin.sigma), 175000.0, 200.0);
  EXPECT_EQ(m.l2.median_us, 550.0);
  EXPECT_EQ(m.origin.median_us, 36000.0);
}

TEST(Limiter, CountsRejections) {
  ConcurrencyLimiter l(true, 2);
  EXPECT_TRUE(l.try_acquire());
  EXPECT_TRUE(l.try_acquire());
  EXPECT_FALSE(l.try_acquire());
  EXPECT_EQ(l.rejected(), 1u);
  l.release();
  EXPECT_TRUE(l.try_acquire());
  ConcurrencyLimiter off(false, 1);
  for (int i = 0; i < 5; ++i) EXPECT_TRUE(off.try_acquire());
}

TEST(Simulation, SameSeedSameReport) {
  SimConfig c = parse_config(small_config());
  EXPECT_EQ(run_sim(c).to_json(), run_sim(c).to_json());
  SimConfig d = c;
  d.seed = 4;
  EXPECT_NE(run_sim(d).to_json(), run_sim(c).to_json());
}

TEST(Simulation, TierCountsConserveRequests) {
  SimConfig c = parse_config(small_config());
  MetricsReport r = run_sim(c);
  std::uint64_t requests = 0, starts = 0;
  for (const Bucket& b : r.buckets) {
    EXPECT_EQ(b.l1 + b.l2 + b.l3, b.requests);
    requests += b.requests;
    starts += b.starts;
  }
  EXPECT_EQ(starts, r.starts_admitted);
  EXPECT_EQ(requests, r.starts_admitted * c.workload.touched_chunks);
  EXPECT_EQ(r.start_latency_us.size(), r.starts_admitted);
  EXPECT_EQ(r.chunk_latency_us.size(), requests);
  EXPECT_GT(r.dedup_ratio(), 1.0);
  EXPECT_EQ(r.integrity_events, 0u);
}

TEST(Simulation, LittlesLawHolds) {
  json doc = small_config();
  doc["workload"]["duration_s"] = 200;
  MetricsReport r = run_sim(parse_config(doc));
  EXPECT_LT(r.little.relative_error(), 0.05);
}

TEST(Simulation, LimiterCapsBacklog) {
  json doc = small_config();
  doc["limiter"] = {{"enabled", true}, {"max_in_flight", 2}};
  doc["workload"]["arrival_rate_per_s"] = 200;
  MetricsReport r = run_sim(parse_config(doc));
  EXPECT_LE(r.max_backlog, 2u);
  EXPECT_GT(r.starts_rejected, 0u);
}

TEST(Simulation, RedundantFetchCutsTailWithSlowNode) {
  json doc = small_config();
  doc["topology"]["l1_capacity_chunks"] = 0;
  doc["topology"]["prewarm_l2"] = true;
  doc["topology"]["l2_node_capacity_stripes"] = 2000;
  doc["latency"] = {{"slow_nodes", json::array({{{"node", 0}, {"factor", 10}}})}};
  SimConfig c = parse_config(doc);
  MetricsReport with = run_sim(c);
  c.topology.redundant_fetch = false;
  MetricsReport without = run_sim(c);
  EXPECT_EQ(with.starts_admitted, without.starts_admitted);
  EXPECT_LT(percentile(with.start_latency_us, 0.999), percentile(without.start_latency_us, 0.999));
  EXPECT_LT(percentile(with.chunk_latency_us, 0.99), percentile(without.chunk_latency_us, 0.99));
}

TEST(Simulation, NodeOutageServedWithoutOriginUnderRedundancy) {
  json doc = small_config();
  doc["topology"]["l1_capacity_chunks"] = 0;
  doc["topology"]["prewarm_l2"] = true;
  doc["topology"]["l2_node_capacity_stripes"] = 2000;
  doc["latency"] = {{"outages", json::array({{{"node", 2}, {"down_at_s", 5}, {"up_at_s", 0}}})}};
  MetricsReport r = run_sim(parse_config(doc));
  std::uint64_t l3 = 0;
  for (const Bucket& b : r.buckets) l3 += b.l3;
  EXPECT_EQ(l3, 0u);
}

TEST(ColdStart, FlushDropsThenRecovers) {
  json doc = small_config();
  doc["mode"] = "cold_start";
  doc["workload"]["duration_s"] = 40;
  doc["drill"] = {{"flush_at_s", 20}, {"recovery_fraction", 0.9}, {"baseline_window_s", 5}};
  DrillReport d = cold_start_drill(parse_config(doc));
  EXPECT_GT(d.baseline_l2_hit_rate, 0.5);
  ASSERT_TRUE(d.recovery_s.has_value());
  EXPECT_GT(*d.recovery_s, 0.0);
  auto flushed = d.metrics.buckets[20].l2_hit_rate();
  ASSERT_TRUE(flushed.has_value());
  EXPECT_LT(*flushed, d.baseline_l2_hit_rate);
}

TEST(ScanResistance, BundledConfigPaired) {
  SimConfig c = load_config(std::string(CVAULT_CONFIGS) + "/scan_resistance.json");
  ScanReport r = scan_resistance_experiment(c);
  EXPECT_EQ(r.lru1.k, 1u);
  EXPECT_EQ(r.lru2.k, 2u);
  EXPECT_LT(r.lru2.dip(), r.lru1.dip());
  EXPECT_EQ(r.lru2.hot_evictions, 0u);
  EXPECT_EQ(r.lru1.metrics.starts_admitted, r.lru2.metrics.starts_admitted);
}

TEST(Reports, EcdfCsvHeader) {
  std::string csv = ecdf_csv({3, 1, 2});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "value,cumulative_fraction");
}
