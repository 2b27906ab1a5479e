#include <cmath>
#include <fstream>
#include <sstream>

#include "cvault/errors.hpp"
#include "cvault/sim.hpp"
#include "cvault/stats.hpp"

namespace cvault::sim {

using nlohmann::json;

std::optional<double> Bucket::l2_hit_rate() const {
  if (l2 + l3 == 0) return std::nullopt;
  return static_cast<double>(l2) / static_cast<double>(l2 + l3);
}

std::optional<double> Bucket::hot_hit_rate() const {
  if (hot_requests == 0) return std::nullopt;
  return static_cast<double>(hot_hits) / static_cast<double>(hot_requests);
}

double LittleCheck::relative_error() const {
  double predicted = arrival_rate_per_s * mean_latency_s;
  if (predicted == 0) return time_avg_in_flight == 0 ? 0.0 : 1.0;
  return std::abs(time_avg_in_flight - predicted) / predicted;
}

double MetricsReport::dedup_ratio() const {
  return unique_chunks == 0 ? 0.0 : static_cast<double>(chunk_references) / static_cast<double>(unique_chunks);
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json summary(const std::vector<double>& samples) {
  return {{"count", samples.size()},
          {"mean", mean(samples)},
          {"p50", percentile(samples, 0.5)},
          {"p99", percentile(samples, 0.99)},
          {"p999", percentile(samples, 0.999)},
          {"max", percentile(samples, 1.0)}};
}

json fraction(std::uint64_t part, std::uint64_t whole) {
  return whole == 0 ? json(nullptr) : json(static_cast<double>(part) / static_cast<double>(whole));
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

}  // namespace

json MetricsReport::to_json() const {
  json buckets_json = json::array();
  for (const Bucket& b : buckets) {
    buckets_json.push_back({{"start_s", b.start_s},
                            {"requests", b.requests},
                            {"l1", b.l1},
                            {"l2", b.l2},
                            {"l3", b.l3},
                            {"l1_fraction", fraction(b.l1, b.requests)},
                            {"l2_fraction", fraction(b.l2, b.requests)},
                            {"l3_fraction", fraction(b.l3, b.requests)},
                            {"l2_hit_rate", optional_json(b.l2_hit_rate())},
                            {"hot_hit_rate", optional_json(b.hot_hit_rate())},
                            {"starts", b.starts},
                            {"rejected", b.rejected},
                            {"max_backlog", b.max_backlog}});
  }
  return {{"starts_admitted", starts_admitted},
          {"starts_rejected", starts_rejected},
          {"starts_touching_slow_node", starts_touching_slow_node},
          {"max_backlog", max_backlog},
          {"l2_requests", l2_requests},
          {"integrity_events", integrity_events},
          {"hot_evictions", hot_evictions},
          {"chunk_references", chunk_references},
          {"unique_chunks", unique_chunks},
          {"dedup_ratio", dedup_ratio()},
          {"start_latency_us", summary(start_latency_us)},
          {"chunk_latency_us", summary(chunk_latency_us)},
          {"manifest_open_us", summary(manifest_open_us)},
          {"littles_law",
           {{"time_avg_in_flight", little.time_avg_in_flight},
            {"arrival_rate_per_s", little.arrival_rate_per_s},
            {"mean_latency_s", little.mean_latency_s},
            {"relative_error", little.relative_error()}}},
          {"buckets", buckets_json}};
}

std::string ecdf_csv(const std::vector<double>& samples, std::size_t max_points) {
  std::ostringstream out;
  out.precision(10);
  out << "value,cumulative_fraction\n";
  for (const auto& [value, frac] : empirical_cdf(samples, max_points)) out << value << ',' << frac << '\n';
  return out.str();
}

json DrillReport::to_json() const {
  return {{"flush_at_s", flush_at_s},
          {"baseline_l2_hit_rate", baseline_l2_hit_rate},
          {"recovery_s", optional_json(recovery_s)},
          {"max_backlog_after_flush", max_backlog_after_flush},
          {"rejected_after_flush", rejected_after_flush},
          {"limiter_enabled", limiter_enabled},
          {"max_in_flight", max_in_flight},
          {"metrics", metrics.to_json()}};
}

json ScanReport::to_json() const {
  auto policy = [](const ScanPolicyResult& p) {
    json series = json::array();
    for (const auto& v : p.hot_hit_rate) series.push_back(optional_json(v));
    return json{{"lru_k", p.k},
                {"baseline_hot_hit_rate", p.baseline},
                {"minimum_hot_hit_rate", p.minimum},
                {"dip", p.dip()},
                {"hot_evictions", p.hot_evictions},
                {"hot_hit_rate_series", series},
                {"metrics", p.metrics.to_json()}};
  };
  return {{"burst_at_s", burst_at_s}, {"lru1", policy(lru1)}, {"lru2", policy(lru2)}};
}

std::vector<std::filesystem::path> write_reports(const SimConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_file(dir / name, text);
    written.push_back(dir / name);
  };
  json doc{{"config", config_to_json(config)}};
  switch (config.mode) {
    case Mode::run: {
      MetricsReport m = run_sim(config);
      doc["report"] = m.to_json();
      emit("start_latency_ecdf.csv", ecdf_csv(m.start_latency_us));
      emit("chunk_latency_ecdf.csv", ecdf_csv(m.chunk_latency_us));
      break;
    }
    case Mode::cold_start: {
      DrillReport d = cold_start_drill(config);
      doc["report"] = d.to_json();
      emit("start_latency_ecdf.csv", ecdf_csv(d.metrics.start_latency_us));
      emit("chunk_latency_ecdf.csv", ecdf_csv(d.metrics.chunk_latency_us));
      std::ostringstream series;
      series << "start_s,l2_hit_rate,max_backlog,rejected\n";
      for (const Bucket& b : d.metrics.buckets) {
        auto r = b.l2_hit_rate();
        series << b.start_s << ',' << (r ? std::to_string(*r) : "") << ',' << b.max_backlog << ',' << b.rejected
               << '\n';
      }
      emit("recovery_series.csv", series.str());
      break;
    }
    case Mode::scan_resistance: {
      ScanReport s = scan_resistance_experiment(config);
      doc["report"] = s.to_json();
      emit("lru1_start_latency_ecdf.csv", ecdf_csv(s.lru1.metrics.start_latency_us));
      emit("lru2_start_latency_ecdf.csv", ecdf_csv(s.lru2.metrics.start_latency_us));
      std::ostringstream series;
      series << "start_s,lru1_hot_hit_rate,lru2_hot_hit_rate\n";
      for (std::size_t i = 0; i < s.lru1.hot_hit_rate.size(); ++i) {
        auto a = s.lru1.hot_hit_rate[i];
        auto b = i < s.lru2.hot_hit_rate.size() ? s.lru2.hot_hit_rate[i] : std::nullopt;
        series << s.lru1.metrics.buckets[i].start_s << ',' << (a ? std::to_string(*a) : "") << ','
               << (b ? std::to_string(*b) : "") << '\n';
      }
      emit("hot_hit_rate_series.csv", series.str());
      break;
    }
  }
  emit("report.json", doc.dump(2) + "\n");
  return written;
}

}  // namespace cvault::sim
