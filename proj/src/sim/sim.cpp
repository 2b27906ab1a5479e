#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_map>
#include <unordered_set>

#include "cvault/errors.hpp"
#include "cvault/hash_ring.hpp"
#include "cvault/manifest.hpp"
#include "cvault/origin_store.hpp"
#include "cvault/sim.hpp"
#include "cvault/tiered_cache.hpp"

namespace cvault::sim {

bool ConcurrencyLimiter::try_acquire() {
  if (enabled_ && in_flight_ >= max_) {
    ++rejected_;
    return false;
  }
  ++in_flight_;
  return true;
}

void ConcurrencyLimiter::release() {
  if (in_flight_ == 0) throw Error("limiter released more often than acquired");
  --in_flight_;
}

namespace {

constexpr const char* kRoot = "sim";

double sample(std::mt19937_64& rng, const Lognormal& l) {
  if (l.median_us <= 0) return 0.0;
  if (l.sigma <= 0) return l.median_us;
  std::normal_distribution<double> n(0.0, 1.0);
  return l.median_us * std::exp(l.sigma * n(rng));
}

class SimLatency : public LatencySampler {
 public:
  SimLatency(std::mt19937_64& rng, const LatencyModel& model, std::size_t nodes)
      : rng_(rng), model_(model), factor_(nodes, 1.0) {
    for (const SlowNode& s : model.slow_nodes) factor_.at(s.node) = s.factor;
  }

  double l1_hit() override { return sample(rng_, model_.l1); }
  double l2_request(NodeId node, bool) override {
    double f = factor_.at(node);
    if (f != 1.0) touched_slow = true;
    return sample(rng_, model_.l2) * f;
  }
  double origin_fetch() override { return sample(rng_, model_.origin) * origin_multiplier; }

  double origin_multiplier = 1.0;
  bool touched_slow = false;

 private:
  std::mt19937_64& rng_;
  const LatencyModel& model_;
  std::vector<double> factor_;
};

struct FunctionImage {
  Bytes sealed;
  std::vector<std::size_t> touched;
  bool cron = false;
};

enum class EventType { arrival, cron_start, completion, flush, node_down, node_up };

struct Event {
  double t;
  std::uint64_t seq;
  EventType type;
  std::uint64_t arg;
  bool operator>(const Event& o) const { return t != o.t ? t > o.t : seq > o.seq; }
};

Bytes synthetic_chunk(std::uint64_t seed, std::uint64_t id, std::size_t size) {
  Bytes out(size);
  std::uint64_t state = mix64(seed ^ mix64(id + 1));
  for (std::size_t i = 0; i < size; i += 8) {
    state = mix64(state + 0x9e3779b97f4a7c15ULL);
    for (std::size_t b = 0; b < 8 && i + b < size; ++b) out[i + b] = static_cast<std::uint8_t>(state >> (8 * b));
  }
  return out;
}

std::vector<std::size_t> sample_indices(std::mt19937_64& rng, std::size_t n, std::size_t count) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

class Simulation {
 public:
  Simulation(const SimConfig& config, const RunHooks& hooks)
      : c_(config),
        hooks_(hooks),
        build_rng_(mix64(config.seed * 3 + 1)),
        arrival_rng_(mix64(config.seed * 3 + 2)),
        latency_rng_(mix64(config.seed * 3 + 3)),
        store_(std::make_shared<MemoryBackend>()),
        origin_(store_, kRoot),
        latency_(latency_rng_, config.latency, config.topology.l2_nodes),
        limiter_(config.limiter.enabled, config.limiter.max_in_flight),
        latency_ewma_(config.feedback.reference_latency_us) {
    validate(config);
    store_.create_root(kRoot);
    build_caches();
    build_images();
  }

  MetricsReport run();

 private:
  void build_images();
  void build_caches();
  void add_image(std::size_t function_index, const std::vector<std::uint64_t>& chunk_ids, std::size_t touched,
                 bool cron);
  void push(double t, EventType type, std::uint64_t arg = 0) { events_.push(Event{t, seq_++, type, arg}); }
  void advance(double t);
  double arrival_rate(double t) const;
  void schedule_next_arrival(double t);
  void start(double t, std::size_t function_index);
  Bucket& bucket_at(double t);

  const SimConfig& c_;
  RunHooks hooks_;
  // Independent streams so that, for example, a policy drawing more latency
  // samples does not shift the arrival process.
  std::mt19937_64 build_rng_;
  std::mt19937_64 arrival_rng_;
  std::mt19937_64 latency_rng_;
  OriginStore store_;
  StoreOrigin origin_;
  SimLatency latency_;
  ConcurrencyLimiter limiter_;
  CustomerKey customer_;
  Salt salt_;

  std::vector<FunctionImage> images_;
  std::unordered_set<Digest, DigestHash> hot_chunks_;
  std::unordered_map<std::uint64_t, Digest> stored_;  // chunk id -> ciphertext name
  std::unique_ptr<L2Cluster> l2_;
  std::vector<std::unique_ptr<L1Cache>> l1_;
  std::vector<std::unique_ptr<ChunkFetcher>> fetchers_;
  std::discrete_distribution<std::size_t> popularity_;

  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::uint64_t seq_ = 0;
  std::size_t next_worker_ = 0;
  double now_ = 0.0;
  double area_ = 0.0;  // integral of in-flight starts over [0, duration]
  bool burst_started_ = false;
  double latency_ewma_;
  std::vector<double> completion_latency_;  // by start id
  std::uint64_t window_starts_ = 0;
  double window_latency_sum_us_ = 0.0;
  MetricsReport report_;
};

void Simulation::add_image(std::size_t function_index, const std::vector<std::uint64_t>& chunk_ids,
                           std::size_t touched, bool cron) {
  const std::size_t cs = c_.topology.chunk_size;
  std::vector<ManifestChunk> chunks;
  chunks.reserve(chunk_ids.size());
  for (std::uint64_t id : chunk_ids) {
    Bytes plain = synthetic_chunk(c_.seed, id, cs);
    ManifestChunk mc;
    mc.key = derive_key(plain, salt_);
    auto it = stored_.find(id);
    if (it == stored_.end()) {
      EncryptedChunk enc = encrypt_chunk(plain, mc.key);
      store_.put_if_absent(kRoot, ObjectKind::chunk, chunk_name(enc.hash), enc.ciphertext);
      if (c_.topology.prewarm_l2) fetchers_.front()->populate_l2(enc.hash, enc.ciphertext);
      it = stored_.emplace(id, enc.hash).first;
      ++report_.unique_chunks;
    }
    mc.hash = it->second;
    chunks.push_back(mc);
  }
  report_.chunk_references += chunk_ids.size();
  RandomSource nonce_source = [this](MutableByteView out) {
    for (auto& b : out) b = static_cast<std::uint8_t>(build_rng_());
  };
  SealedManifest sealed = seal_manifest(chunks, chunk_ids.size() * cs, static_cast<std::uint32_t>(cs), salt_,
                                        customer_, nonce_source);
  FunctionImage img;
  img.sealed = sealed.serialize();
  img.touched = sample_indices(build_rng_, chunk_ids.size(), touched);
  img.cron = cron;
  if (!cron) {
    for (std::size_t i : img.touched) hot_chunks_.insert(chunks[i].hash);
  }
  if (images_.size() <= function_index) images_.resize(function_index + 1);
  images_[function_index] = std::move(img);
}

void Simulation::build_images() {
  customer_.key_id = "sim";
  for (auto& b : customer_.key) b = static_cast<std::uint8_t>(build_rng_());
  salt_ = Salt::from_string("sim-salt");

  const WorkloadSpec& w = c_.workload;
  std::uint64_t next_id = w.shared_base_chunks;
  auto image_ids = [&](std::size_t unique) {
    std::vector<std::uint64_t> ids;
    for (std::uint64_t i = 0; i < w.shared_base_chunks; ++i) ids.push_back(i);
    for (std::size_t i = 0; i < unique; ++i) ids.push_back(next_id++);
    return ids;
  };
  std::vector<double> weights;
  for (std::size_t f = 0; f < w.functions; ++f) {
    add_image(f, image_ids(w.unique_chunks_per_function), w.touched_chunks, false);
    weights.push_back(1.0 / std::pow(static_cast<double>(f + 1), w.zipf_s));
  }
  popularity_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
  const CronSpec& cr = w.cron;
  if (cr.functions_per_burst > 0) {
    for (std::size_t b = 0; b < cr.bursts; ++b) {
      for (std::size_t i = 0; i < cr.functions_per_burst; ++i) {
        std::size_t f = w.functions + b * cr.functions_per_burst + i;
        add_image(f, image_ids(cr.unique_chunks_per_function), cr.touched_chunks, true);
      }
    }
  }
}

void Simulation::build_caches() {
  const Topology& t = c_.topology;
  const std::size_t stripe = t.chunk_size / t.erasure_k;
  if (t.l2_nodes > 0) {
    l2_ = std::make_unique<L2Cluster>(t.l2_nodes, t.l2_node_capacity_stripes * stripe, t.lru_k, t.vnodes,
                                      t.l2_node_capacity_stripes * 4 + 1024);
    for (std::size_t n = 0; n < t.l2_nodes; ++n) {
      l2_->node(static_cast<NodeId>(n)).set_eviction_listener([this](const StripeKey& k) {
        if (burst_started_ && hot_chunks_.count(k.name)) ++report_.hot_evictions;
      });
    }
  }
  FetchPolicy policy;
  policy.k = t.erasure_k;
  policy.redundant = t.redundant_fetch;
  for (std::size_t w = 0; w < t.workers; ++w) {
    l1_.push_back(std::make_unique<L1Cache>(t.l1_capacity_chunks * t.chunk_size, t.lru_k,
                                            t.l1_capacity_chunks * 4 + 1024));
    l1_.back()->set_eviction_listener([this](const Digest& d) {
      if (burst_started_ && hot_chunks_.count(d)) ++report_.hot_evictions;
    });
    fetchers_.push_back(std::make_unique<ChunkFetcher>(*l1_.back(), l2_.get(), origin_, policy, &latency_));
  }
}

Bucket& Simulation::bucket_at(double t) {
  auto index = static_cast<std::size_t>(std::max(0.0, t) / c_.bucket_s);
  auto& b = report_.buckets;
  while (b.size() <= index) {
    Bucket fresh;
    fresh.start_s = static_cast<double>(b.size()) * c_.bucket_s;
    b.push_back(fresh);
  }
  return b[index];
}

void Simulation::advance(double t) {
  const double end = c_.workload.duration_s;
  const double from = std::min(now_, end);
  const double to = std::min(t, end);
  if (to > from) area_ += static_cast<double>(limiter_.in_flight()) * (to - from);
  now_ = t;
}

double Simulation::arrival_rate(double t) const {
  double rate = c_.workload.arrival_rate_per_s;
  for (const Spike& s : c_.workload.spikes) {
    if (t >= s.at_s && t < s.at_s + s.duration_s) rate *= s.multiplier;
  }
  if (c_.feedback.enabled) {
    double m = latency_ewma_ / c_.feedback.reference_latency_us;
    rate *= std::clamp(m, 1.0, c_.feedback.max_multiplier);
  }
  return rate;
}

void Simulation::schedule_next_arrival(double t) {
  double rate = arrival_rate(t);
  if (rate <= 0) return;
  std::exponential_distribution<double> gap(rate);
  double next = t + gap(arrival_rng_);
  if (next < c_.workload.duration_s) push(next, EventType::arrival);
}

void Simulation::start(double t, std::size_t function_index) {
  const FunctionImage& img = images_.at(function_index);
  Bucket& bucket = bucket_at(t);
  if (!limiter_.try_acquire()) {
    ++bucket.rejected;
    ++report_.starts_rejected;
    return;
  }
  const std::size_t in_flight = limiter_.in_flight();
  bucket.max_backlog = std::max(bucket.max_backlog, in_flight);
  report_.max_backlog = std::max(report_.max_backlog, in_flight);
  ++bucket.starts;
  ++report_.starts_admitted;
  if (img.cron) burst_started_ = true;

  const LatencyModel& lm = c_.latency;
  latency_.origin_multiplier =
      1.0 + lm.origin_load_coeff * std::max(0.0, static_cast<double>(in_flight) - lm.origin_load_knee) /
                lm.origin_load_knee;
  latency_.touched_slow = false;

  std::size_t worker = c_.topology.placement_affinity ? function_index % fetchers_.size()
                                                      : next_worker_++ % fetchers_.size();
  ChunkFetcher& fetcher = *fetchers_[worker];

  const double manifest_us = sample(latency_rng_, lm.manifest_open);
  report_.manifest_open_us.push_back(manifest_us);
  OpenedManifest manifest = open_manifest(img.sealed, customer_);

  std::priority_queue<double, std::vector<double>, std::greater<>> lanes;
  for (std::size_t i = 0; i < c_.topology.fetch_parallelism; ++i) lanes.push(0.0);
  double worst = 0.0;
  for (std::size_t index : img.touched) {
    FetchResult r = fetcher.fetch(manifest.records[index].ciphertext_hash, *manifest.keys[index],
                                  static_cast<long long>(index));
    ++bucket.requests;
    switch (r.source) {
      case Tier::l1: ++bucket.l1; break;
      case Tier::l2: ++bucket.l2; break;
      case Tier::l3: ++bucket.l3; break;
    }
    if (!img.cron) {
      ++bucket.hot_requests;
      if (r.source != Tier::l3) ++bucket.hot_hits;
    }
    report_.chunk_latency_us.push_back(r.latency_us);
    worst = std::max(worst, r.latency_us);
    double lane = lanes.top();
    lanes.pop();
    lanes.push(lane + r.latency_us);
  }
  double makespan = 0.0;
  while (!lanes.empty()) {
    makespan = std::max(makespan, lanes.top());
    lanes.pop();
  }
  const double latency_us = manifest_us + makespan;
  report_.start_latency_us.push_back(latency_us);
  report_.start_max_chunk_latency_us.push_back(worst);
  if (latency_.touched_slow) ++report_.starts_touching_slow_node;
  if (t < c_.workload.duration_s) {
    ++window_starts_;
    window_latency_sum_us_ += latency_us;
  }
  completion_latency_.push_back(latency_us);
  push(t + latency_us / 1e6, EventType::completion, completion_latency_.size() - 1);
}

MetricsReport Simulation::run() {
  const WorkloadSpec& w = c_.workload;
  bucket_at(std::max(0.0, w.duration_s - 1e-9));
  schedule_next_arrival(0.0);
  const CronSpec& cr = w.cron;
  for (std::size_t b = 0; b < cr.bursts && cr.functions_per_burst > 0; ++b) {
    for (std::size_t i = 0; i < cr.functions_per_burst; ++i) {
      double t = cr.first_at_s + static_cast<double>(b) * cr.period_s +
                 cr.spread_s * static_cast<double>(i) / static_cast<double>(cr.functions_per_burst);
      if (t < w.duration_s) push(t, EventType::cron_start, w.functions + b * cr.functions_per_burst + i);
    }
  }
  if (hooks_.flush_at_s) push(*hooks_.flush_at_s, EventType::flush);
  for (const NodeOutage& o : c_.latency.outages) {
    push(o.down_at_s, EventType::node_down, o.node);
    if (o.up_at_s > o.down_at_s) push(o.up_at_s, EventType::node_up, o.node);
  }

  while (!events_.empty()) {
    Event e = events_.top();
    events_.pop();
    advance(e.t);
    switch (e.type) {
      case EventType::arrival:
        start(e.t, popularity_(arrival_rng_));
        schedule_next_arrival(e.t);
        break;
      case EventType::cron_start:
        start(e.t, e.arg);
        break;
      case EventType::completion: {
        limiter_.release();
        double lat = completion_latency_[e.arg];
        latency_ewma_ += c_.feedback.ewma_alpha * (lat - latency_ewma_);
        break;
      }
      case EventType::flush:
        for (auto& l1 : l1_) l1->clear();
        if (l2_) l2_->flush();
        break;
      case EventType::node_down:
        if (l2_) l2_->set_node_up(static_cast<NodeId>(e.arg), false);
        break;
      case EventType::node_up:
        if (l2_) l2_->set_node_up(static_cast<NodeId>(e.arg), true);
        break;
    }
  }

  for (const auto& f : fetchers_) {
    report_.l2_requests += f->l2_requests_issued();
    report_.integrity_events += f->integrity_events().size();
  }
  if (w.duration_s > 0) {
    report_.little.time_avg_in_flight = area_ / w.duration_s;
    report_.little.arrival_rate_per_s = static_cast<double>(window_starts_) / w.duration_s;
  }
  if (window_starts_ > 0)
    report_.little.mean_latency_s = window_latency_sum_us_ / static_cast<double>(window_starts_) / 1e6;
  return std::move(report_);
}

}  // namespace

MetricsReport run_sim(const SimConfig& config, const RunHooks& hooks) {
  Simulation sim(config, hooks);
  return sim.run();
}

}  // namespace cvault::sim
