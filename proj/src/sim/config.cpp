#include <algorithm>
#include <fstream>
#include <sstream>

#include "cvault/errors.hpp"
#include "cvault/sim.hpp"

namespace cvault::sim {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ValidationError("config: " + path + ": " + what);
}

// Reads fields of one JSON object, tracking the dotted path for errors and
// rejecting unknown keys.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.push_back(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* v = find(key);
    if (!v) fail(field(key), "missing required field");
    return *v;
  }

  double number(const std::string& key, std::optional<double> fallback, double min = 0.0) {
    const json* v = fallback ? find(key) : &require(key);
    if (!v) return *fallback;
    if (!v->is_number()) fail(field(key), "expected a number");
    double d = v->get<double>();
    if (!(d >= min)) fail(field(key), "must be >= " + format(min));
    return d;
  }

  std::uint64_t integer(const std::string& key, std::optional<std::uint64_t> fallback, std::uint64_t min = 0) {
    const json* v = fallback ? find(key) : &require(key);
    if (!v) return *fallback;
    if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0))
      fail(field(key), "expected a non-negative integer");
    std::uint64_t n = v->get<std::uint64_t>();
    if (n < min) fail(field(key), "must be >= " + std::to_string(min));
    return n;
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(field(key), "expected true or false");
    return v->get<bool>();
  }

  Lognormal lognormal(const std::string& key, Lognormal fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    Section s(*v, field(key));
    Lognormal out;
    out.median_us = s.number("median_us", fallback.median_us);
    out.sigma = s.number("sigma", fallback.sigma);
    s.finish();
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) fail(field(key), "unknown field");
    }
  }

  static std::string format(double d) {
    std::ostringstream os;
    os << d;
    return os.str();
  }

 private:
  const json& obj_;
  std::string path_;
  std::vector<std::string> seen_;
};

template <class F>
void for_each_item(Section& parent, const std::string& key, F&& visit) {
  const json* arr = parent.find(key);
  if (!arr) return;
  std::string path = parent.field(key);
  if (!arr->is_array()) fail(path, "expected an array");
  for (std::size_t i = 0; i < arr->size(); ++i) {
    Section s((*arr)[i], path + "[" + std::to_string(i) + "]");
    visit(s);
    s.finish();
  }
}

Mode parse_mode(const json& v) {
  if (!v.is_string()) fail("mode", "expected a string");
  const std::string m = v.get<std::string>();
  if (m == "run") return Mode::run;
  if (m == "cold_start") return Mode::cold_start;
  if (m == "scan_resistance") return Mode::scan_resistance;
  fail("mode", "expected one of run, cold_start, scan_resistance");
}

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::run: return "run";
    case Mode::cold_start: return "cold_start";
    case Mode::scan_resistance: return "scan_resistance";
  }
  return "run";
}

}  // namespace

SimConfig parse_config(const json& doc) {
  SimConfig c;
  Section root(doc, "");
  c.mode = parse_mode(root.require("mode"));
  c.seed = root.integer("seed", std::nullopt);
  c.bucket_s = root.number("bucket_s", 1.0, 1e-6);

  {
    Section w(root.require("workload"), "workload");
    WorkloadSpec& s = c.workload;
    s.functions = w.integer("functions", std::nullopt, 1);
    s.shared_base_chunks = w.integer("shared_base_chunks", 0);
    s.unique_chunks_per_function = w.integer("unique_chunks_per_function", std::nullopt);
    s.touched_chunks = w.integer("touched_chunks", std::nullopt, 1);
    s.zipf_s = w.number("zipf_s", 1.0);
    s.arrival_rate_per_s = w.number("arrival_rate_per_s", std::nullopt);
    s.duration_s = w.number("duration_s", std::nullopt);
    for_each_item(w, "spikes", [&](Section& e) {
      s.spikes.push_back({e.number("at_s", std::nullopt), e.number("duration_s", std::nullopt),
                          e.number("multiplier", std::nullopt)});
    });
    if (const json* cron = w.find("cron")) {
      Section cs(*cron, "workload.cron");
      CronSpec& cr = s.cron;
      cr.first_at_s = cs.number("first_at_s", std::nullopt);
      cr.period_s = cs.number("period_s", 0.0);
      cr.bursts = cs.integer("bursts", 1);
      cr.functions_per_burst = cs.integer("functions_per_burst", std::nullopt);
      cr.spread_s = cs.number("spread_s", 1.0);
      cr.unique_chunks_per_function = cs.integer("unique_chunks_per_function", std::nullopt);
      cr.touched_chunks = cs.integer("touched_chunks", std::nullopt);
      cs.finish();
    }
    w.finish();
  }

  if (const json* lat = root.find("latency")) {
    Section l(*lat, "latency");
    LatencyModel& m = c.latency;
    m.l1 = l.lognormal("l1", m.l1);
    m.l2 = l.lognormal("l2", m.l2);
    m.origin = l.lognormal("origin", m.origin);
    m.manifest_open = l.lognormal("manifest_open", m.manifest_open);
    for_each_item(l, "slow_nodes", [&](Section& e) {
      m.slow_nodes.push_back({static_cast<NodeId>(e.integer("node", std::nullopt)), e.number("factor", std::nullopt)});
    });
    for_each_item(l, "outages", [&](Section& e) {
      m.outages.push_back({static_cast<NodeId>(e.integer("node", std::nullopt)), e.number("down_at_s", std::nullopt),
                           e.number("up_at_s", 0.0)});
    });
    m.origin_load_coeff = l.number("origin_load_coeff", m.origin_load_coeff);
    m.origin_load_knee = l.number("origin_load_knee", m.origin_load_knee, 1.0);
    l.finish();
  }

  {
    Section t(root.require("topology"), "topology");
    Topology& s = c.topology;
    s.workers = t.integer("workers", std::nullopt, 1);
    s.l1_capacity_chunks = t.integer("l1_capacity_chunks", std::nullopt);
    s.l2_nodes = t.integer("l2_nodes", std::nullopt);
    s.l2_node_capacity_stripes = t.integer("l2_node_capacity_stripes", s.l2_nodes ? std::nullopt : std::optional<std::uint64_t>(0));
    s.vnodes = static_cast<std::uint32_t>(t.integer("vnodes", 100, 1));
    s.lru_k = t.integer("lru_k", 2, 1);
    s.placement_affinity = t.boolean("placement_affinity", false);
    s.chunk_size = t.integer("chunk_size", 4096, 1);
    s.erasure_k = static_cast<std::uint32_t>(t.integer("erasure_k", 4, 2));
    s.redundant_fetch = t.boolean("redundant_fetch", true);
    s.fetch_parallelism = t.integer("fetch_parallelism", 1, 1);
    s.prewarm_l2 = t.boolean("prewarm_l2", false);
    t.finish();
  }

  if (const json* lim = root.find("limiter")) {
    Section l(*lim, "limiter");
    c.limiter.enabled = l.boolean("enabled", false);
    c.limiter.max_in_flight = l.integer("max_in_flight", 64, 1);
    l.finish();
  }
  if (const json* fb = root.find("feedback")) {
    Section f(*fb, "feedback");
    c.feedback.enabled = f.boolean("enabled", false);
    c.feedback.reference_latency_us = f.number("reference_latency_us", c.feedback.reference_latency_us, 1e-9);
    c.feedback.max_multiplier = f.number("max_multiplier", c.feedback.max_multiplier, 1.0);
    c.feedback.ewma_alpha = f.number("ewma_alpha", c.feedback.ewma_alpha, 1e-9);
    f.finish();
  }
  if (const json* dr = root.find("drill")) {
    Section d(*dr, "drill");
    c.drill.flush_at_s = d.number("flush_at_s", 0.0);
    c.drill.recovery_fraction = d.number("recovery_fraction", 0.9);
    c.drill.baseline_window_s = d.number("baseline_window_s", 10.0, 1e-9);
    d.finish();
  }
  root.finish();
  validate(c);
  return c;
}

void validate(const SimConfig& c) {
  const WorkloadSpec& w = c.workload;
  const Topology& t = c.topology;
  if (w.touched_chunks > w.shared_base_chunks + w.unique_chunks_per_function)
    fail("workload.touched_chunks", "exceeds the chunks per image");
  if (w.cron.functions_per_burst > 0 && w.cron.touched_chunks > w.shared_base_chunks + w.cron.unique_chunks_per_function)
    fail("workload.cron.touched_chunks", "exceeds the chunks per image");
  if (w.cron.functions_per_burst > 0 && w.cron.bursts > 1 && w.cron.period_s <= 0)
    fail("workload.cron.period_s", "must be positive with more than one burst");
  for (const Spike& s : w.spikes)
    if (s.multiplier < 0) fail("workload.spikes", "multiplier must be >= 0");
  if (t.chunk_size % (t.erasure_k * 16) != 0)
    fail("topology.chunk_size", "must be a multiple of 16 * erasure_k");
  if (t.erasure_k > 16) fail("topology.erasure_k", "must be at most 16");
  if (t.l2_nodes > 0 && t.l2_nodes < t.erasure_k + 1)
    fail("topology.l2_nodes", "need at least erasure_k + 1 nodes (or 0 to disable L2)");
  if (t.prewarm_l2 && t.l2_nodes == 0) fail("topology.prewarm_l2", "requires L2 nodes");
  for (const SlowNode& s : c.latency.slow_nodes) {
    if (s.node >= t.l2_nodes) fail("latency.slow_nodes", "node " + std::to_string(s.node) + " does not exist");
    if (s.factor <= 0) fail("latency.slow_nodes", "factor must be positive");
  }
  for (const NodeOutage& o : c.latency.outages)
    if (o.node >= t.l2_nodes) fail("latency.outages", "node " + std::to_string(o.node) + " does not exist");
  if (c.mode == Mode::cold_start && c.drill.flush_at_s > w.duration_s)
    fail("drill.flush_at_s", "after the end of the run");
  if (c.drill.recovery_fraction <= 0 || c.drill.recovery_fraction > 1)
    fail("drill.recovery_fraction", "must be in (0, 1]");
}

SimConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json config_to_json(const SimConfig& c) {
  auto logn = [](const Lognormal& l) { return json{{"median_us", l.median_us}, {"sigma", l.sigma}}; };
  json spikes = json::array();
  for (const Spike& s : c.workload.spikes)
    spikes.push_back({{"at_s", s.at_s}, {"duration_s", s.duration_s}, {"multiplier", s.multiplier}});
  json slow = json::array();
  for (const SlowNode& s : c.latency.slow_nodes) slow.push_back({{"node", s.node}, {"factor", s.factor}});
  json outages = json::array();
  for (const NodeOutage& o : c.latency.outages)
    outages.push_back({{"node", o.node}, {"down_at_s", o.down_at_s}, {"up_at_s", o.up_at_s}});
  const WorkloadSpec& w = c.workload;
  const Topology& t = c.topology;
  json workload{{"functions", w.functions},
                {"shared_base_chunks", w.shared_base_chunks},
                {"unique_chunks_per_function", w.unique_chunks_per_function},
                {"touched_chunks", w.touched_chunks},
                {"zipf_s", w.zipf_s},
                {"arrival_rate_per_s", w.arrival_rate_per_s},
                {"duration_s", w.duration_s},
                {"spikes", spikes}};
  if (w.cron.functions_per_burst > 0) {
    workload["cron"] = {{"first_at_s", w.cron.first_at_s},
                        {"period_s", w.cron.period_s},
                        {"bursts", w.cron.bursts},
                        {"functions_per_burst", w.cron.functions_per_burst},
                        {"spread_s", w.cron.spread_s},
                        {"unique_chunks_per_function", w.cron.unique_chunks_per_function},
                        {"touched_chunks", w.cron.touched_chunks}};
  }
  return json{{"mode", mode_name(c.mode)},
              {"seed", c.seed},
              {"bucket_s", c.bucket_s},
              {"workload", workload},
              {"latency",
               {{"l1", logn(c.latency.l1)},
                {"l2", logn(c.latency.l2)},
                {"origin", logn(c.latency.origin)},
                {"manifest_open", logn(c.latency.manifest_open)},
                {"slow_nodes", slow},
                {"outages", outages},
                {"origin_load_coeff", c.latency.origin_load_coeff},
                {"origin_load_knee", c.latency.origin_load_knee}}},
              {"topology",
               {{"workers", t.workers},
                {"l1_capacity_chunks", t.l1_capacity_chunks},
                {"l2_nodes", t.l2_nodes},
                {"l2_node_capacity_stripes", t.l2_node_capacity_stripes},
                {"vnodes", t.vnodes},
                {"lru_k", t.lru_k},
                {"placement_affinity", t.placement_affinity},
                {"chunk_size", t.chunk_size},
                {"erasure_k", t.erasure_k},
                {"redundant_fetch", t.redundant_fetch},
                {"fetch_parallelism", t.fetch_parallelism},
                {"prewarm_l2", t.prewarm_l2}}},
              {"limiter", {{"enabled", c.limiter.enabled}, {"max_in_flight", c.limiter.max_in_flight}}},
              {"feedback",
               {{"enabled", c.feedback.enabled},
                {"reference_latency_us", c.feedback.reference_latency_us},
                {"max_multiplier", c.feedback.max_multiplier},
                {"ewma_alpha", c.feedback.ewma_alpha}}},
              {"drill",
               {{"flush_at_s", c.drill.flush_at_s},
                {"recovery_fraction", c.drill.recovery_fraction},
                {"baseline_window_s", c.drill.baseline_window_s}}}};
}

}  // namespace cvault::sim
