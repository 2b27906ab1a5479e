#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "../support/cow_drill.hpp"
#include "../support/gc_drill.hpp"
#include "cvault/blockdev.hpp"
#include "cvault/erasure.hpp"
#include "cvault/errors.hpp"
#include "cvault/gc.hpp"
#include "cvault/hash_ring.hpp"
#include "cvault/ingest.hpp"
#include "cvault/manifest.hpp"
#include "cvault/sim.hpp"
#include "cvault/stats.hpp"
#include "cvault/tiered_cache.hpp"

using namespace cvault;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int n, const char* name, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) ++failures;
  std::printf("%s %d %s: %s\n", v.pass ? "PASS" : "FAIL", n, name, v.detail.c_str());
  std::fflush(stdout);
}

RandomSource fixed_random() {
  return [](MutableByteView out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(i);
  };
}

CustomerKey test_customer() {
  CustomerKey c;
  c.key_id = "acceptance";
  for (std::size_t i = 0; i < c.key.size(); ++i) c.key[i] = static_cast<std::uint8_t>(0xa0 + i);
  return c;
}

// Builds the manifest one chunk at a time; only one plaintext chunk is held.
std::size_t streamed_manifest_size(std::uint64_t image_bytes, std::size_t chunk_size, std::size_t* records) {
  const std::size_t n = static_cast<std::size_t>((image_bytes + chunk_size - 1) / chunk_size);
  std::vector<ManifestChunk> chunks;
  chunks.reserve(n);
  Bytes plain(chunk_size);
  Salt salt = Salt::from_string("acceptance");
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t w = 0; w < chunk_size / 8; ++w) {
      std::uint64_t v = mix64((static_cast<std::uint64_t>(c) << 20) | w);
      std::memcpy(plain.data() + w * 8, &v, 8);
    }
    ManifestChunk mc;
    mc.key = derive_key(plain, salt);
    mc.hash = encrypt_chunk(plain, mc.key).hash;
    chunks.push_back(mc);
  }
  SealedManifest m = seal_manifest(chunks, image_bytes, static_cast<std::uint32_t>(chunk_size), salt,
                                   test_customer(), fixed_random());
  *records = m.records.size();
  return m.serialize().size();
}

Verdict manifest_overhead() {
  constexpr std::uint64_t kGiB = 1ull << 30;
  constexpr std::size_t kChunk = 512 * 1024;
  std::size_t small_records = 0;
  std::size_t small = streamed_manifest_size(kGiB, kChunk, &small_records);
  double small_pct = 100.0 * static_cast<double>(small) / static_cast<double>(kGiB);

  auto t0 = Clock::now();
  std::size_t records = 0;
  std::size_t big = streamed_manifest_size(16 * kGiB, kChunk, &records);
  double secs = seconds_since(t0);
  double pct = 100.0 * static_cast<double>(big) / static_cast<double>(16 * kGiB);
  bool ok = records == 32768 && big < 3u * 1024 * 1024 && pct <= 0.02 && small_pct <= 0.03 && secs <= 120.0;
  return {ok, fmt("16 GiB: %zu records, %zu bytes (%.4f%%) in %.1fs; 1 GiB: %zu bytes (%.4f%%)", records, big, pct,
                  secs, small, small_pct)};
}

Verdict convergence_dedup() {
  constexpr std::size_t kChunk = 512 * 1024;
  std::mt19937_64 rng(2);
  Bytes base(100 * kChunk);
  for (auto& b : base) b = static_cast<std::uint8_t>(rng());
  Bytes derived = base;
  for (std::size_t c : {3u, 17u, 42u, 64u, 99u}) {
    for (std::size_t i = 0; i < kChunk; ++i) derived[c * kChunk + i] = static_cast<std::uint8_t>(rng());
  }

  OriginStore store(std::make_shared<MemoryBackend>());
  ReleasedSet refs;
  GcConfig gcfg;
  gcfg.salt_prefix = "acc";
  Collector gc(store, refs, gcfg);
  gc.bootstrap();
  auto upload = [&](const Bytes& img) {
    UploadOptions o;
    o.root_id = gc.active_root_for("acceptance");
    o.chunk_size = kChunk;
    o.salt = gc.salt_for(o.root_id);
    o.customer = test_customer();
    return upload_image(store, img, o);
  };
  UploadReport b = upload(base);
  UploadReport d = upload(derived);
  UploadReport again = upload(derived);
  gc.rotate_root();
  UploadReport rotated = upload(derived);
  bool ok = b.unique_chunks == 100 && d.unique_chunks == 5 && again.unique_chunks == 0 &&
            rotated.unique_fraction() == 1.0 && rotated.unique_chunks == 100;
  return {ok, fmt("base %llu unique, derived %llu, re-upload %llu, after rotation %.1f%%",
                  static_cast<unsigned long long>(b.unique_chunks), static_cast<unsigned long long>(d.unique_chunks),
                  static_cast<unsigned long long>(again.unique_chunks), 100.0 * rotated.unique_fraction())};
}

Verdict erasure_roundtrip() {
  constexpr std::size_t kChunk = 512 * 1024;
  constexpr int kChunks = 100;
  std::mt19937_64 rng(3);
  std::size_t mismatches = 0;
  std::size_t patterns = 0;
  bool exact_overhead = true;
  Bytes chunk(kChunk);
  for (int c = 0; c < kChunks; ++c) {
    for (auto& b : chunk) b = static_cast<std::uint8_t>(rng());
    StripeSet set = encode(chunk);
    if (set.total_bytes() * 4 != chunk.size() * 5) exact_overhead = false;
    for (std::uint32_t lost = 0; lost <= set.k; ++lost) {
      std::vector<Stripe> rest;
      for (const Stripe& s : set.stripes)
        if (s.index != lost) rest.push_back(s);
      if (reconstruct(rest) != chunk) ++mismatches;
      ++patterns;
    }
  }
  bool ok = mismatches == 0 && exact_overhead && patterns == 500;
  return {ok, fmt("%zu chunks x 5 patterns: %zu mismatches; overhead %s", static_cast<std::size_t>(kChunks),
                  mismatches, exact_overhead ? "exactly 25%" : "not 25%")};
}

Verdict tail_latency() {
  auto t0 = Clock::now();
  sim::SimConfig c = sim::load_config(std::string(CVAULT_CONFIGS) + "/tail_latency.json");
  c.topology.redundant_fetch = true;
  sim::MetricsReport redundant = sim::run_sim(c);
  c.topology.redundant_fetch = false;
  sim::MetricsReport plain = sim::run_sim(c);
  double p_red = percentile(redundant.start_latency_us, 0.999);
  double p_plain = percentile(plain.start_latency_us, 0.999);

  const double starts = static_cast<double>(plain.starts_admitted);
  double measured = static_cast<double>(plain.starts_touching_slow_node) / starts;
  double requests_per_start = static_cast<double>(plain.l2_requests) / starts;
  double analytic = 1.0 - std::pow(19.0 / 20.0, requests_per_start);

  sim::SimConfig u = sim::load_config(std::string(CVAULT_CONFIGS) + "/tail_uniform.json");
  sim::MetricsReport uniform = sim::run_sim(u);
  double p999_chunk = percentile(uniform.chunk_latency_us, 0.999);
  std::size_t above = 0;
  for (double m : uniform.start_max_chunk_latency_us)
    if (m > p999_chunk) ++above;
  double frac = static_cast<double>(above) / static_cast<double>(uniform.start_max_chunk_latency_us.size());
  double secs = seconds_since(t0);

  bool ok = p_red < p_plain && std::abs(measured - analytic) <= 0.03 && std::abs(frac - 0.63) <= 0.03 &&
            secs <= 60.0 && redundant.starts_admitted == plain.starts_admitted;
  return {ok, fmt("p99.9 start 4-of-5 %.0fus < 4-of-4 %.0fus; slow-node starts %.4f vs analytic %.4f "
                  "(%.0f requests/start); starts with a chunk above p99.9: %.3f of %zu; %.1fs",
                  p_red, p_plain, measured, analytic, requests_per_start, frac,
                  uniform.start_max_chunk_latency_us.size(), secs)};
}

Verdict scan_resistance() {
  sim::SimConfig c = sim::load_config(std::string(CVAULT_CONFIGS) + "/scan_resistance.json");
  sim::ScanReport r = sim::scan_resistance_experiment(c);
  bool ok = r.lru2.dip() < r.lru1.dip() && r.lru2.hot_evictions == 0;
  return {ok, fmt("hot hit-rate dip LRU-1 %.3f, LRU-2 %.3f; hot evictions LRU-1 %llu, LRU-2 %llu", r.lru1.dip(),
                  r.lru2.dip(), static_cast<unsigned long long>(r.lru1.hot_evictions),
                  static_cast<unsigned long long>(r.lru2.hot_evictions))};
}

Verdict gc_safety() {
  cvault_test::GcDrillResult r = cvault_test::run_gc_drill(6, 100000);
  bool ok = r.steps == 100000 && r.closure_checks == r.steps && r.failed_live_reads == 0 && r.closure_violations == 0 &&
            r.alarm_delete_attempts > 0 && r.alarm_delete_blocked == r.alarm_delete_attempts && r.live_reads > 0 &&
            r.deletions > 0;
  std::string first = r.first_failures.empty() ? "" : "; first: " + r.first_failures.front();
  return {ok, fmt("%zu steps, %zu live reads (%zu failed), %zu closure checks (%zu violations), "
                  "%zu/%zu alarmed deletes blocked, %zu rotations, %zu deletions%s",
                  r.steps, r.live_reads, r.failed_live_reads, r.closure_checks, r.closure_violations,
                  r.alarm_delete_blocked, r.alarm_delete_attempts, r.rotations, r.deletions, first.c_str())};
}

Verdict cow_oracle() {
  std::size_t mismatched = 0, ops = 0, rmw = 0;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    cvault_test::CowDrillResult r = cvault_test::run_cow_drill(seed, 10000);
    mismatched += r.mismatched_bytes;
    ops += r.ops;
    rmw += r.observed_rmw;
    ok = ok && r.ops == 10000 && r.mismatched_bytes == 0 && r.expected_rmw == r.observed_rmw &&
         r.rmw_pages_with_wrong_base == 0 && r.overlay_consistent && r.dirty_pages_match && r.base_untouched;
  }
  return {ok, fmt("10 seeds, %zu ops, %zu mismatched bytes, %zu read-modify-write page fills checked", ops,
                  mismatched, rmw)};
}

// Random single-bit flips in origin ciphertexts, L2 stripes and sealed
// manifests. A trial is detected when the reader gets an error or an
// integrity event is logged, masked when it gets the original bytes.
Verdict integrity() {
  constexpr std::size_t kChunk = 4096;
  constexpr std::size_t kChunks = 16;
  std::mt19937_64 rng(8);
  Bytes image(kChunks * kChunk);
  for (auto& b : image) b = static_cast<std::uint8_t>(rng());

  OriginStore store(std::make_shared<MemoryBackend>());
  store.create_root("r");
  UploadOptions o;
  o.root_id = "r";
  o.chunk_size = kChunk;
  o.salt = Salt::from_string("s");
  o.customer = test_customer();
  UploadReport up = upload_image(store, image, o);
  const Bytes sealed = *store.peek("r", ObjectKind::manifest, up.manifest_id);
  const OpenedManifest opened = open_manifest(sealed, o.customer);
  std::vector<Digest> names = list_chunk_names(sealed);

  L2Cluster l2(10, 1 << 20, 2);
  StoreOrigin origin(store, "r");
  std::size_t trials = 0, corrupted_bytes = 0, detected = 0, masked = 0, unexplained = 0;
  std::size_t by_target[3] = {0, 0, 0};

  for (int t = 0; t < 1000; ++t) {
    const int target = t % 3;
    const std::size_t c = rng() % kChunks;
    const Digest& name = names[c];
    l2.flush();
    L1Cache l1(1 << 20, 2);
    ChunkFetcher fetcher(l1, &l2, origin, FetchPolicy{});
    ++trials;
    ++by_target[target];

    if (target == 2) {
      Bytes bad = sealed;
      std::size_t bit = rng() % (bad.size() * 8);
      bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      try {
        OpenedManifest m = open_manifest(bad, o.customer);
        // Opening must not succeed on tampered bytes.
        ++unexplained;
        if (m.records.size() != opened.records.size()) ++corrupted_bytes;
      } catch (const IntegrityError&) {
        ++detected;
      } catch (const ValidationError&) {
        ++detected;
      }
      continue;
    }

    const bool warm_l2 = target == 1 || (rng() & 1);
    const Bytes original_ct = *store.peek("r", ObjectKind::chunk, chunk_name(name));
    if (warm_l2) fetcher.populate_l2(name, original_ct);
    if (target == 0) {
      Bytes bad = original_ct;
      std::size_t bit = rng() % (bad.size() * 8);
      bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      store.backend().corrupt("r", ObjectKind::chunk, chunk_name(name), bad);
    } else {
      auto placement = l2.ring().locate_stripes(name, 5);
      std::uint32_t stripe = static_cast<std::uint32_t>(rng() % 5);
      l2.node(placement[stripe]).corrupt(StripeKey{name, stripe}, rng() % (kChunk / 4 * 8));
    }

    ManifestImage img(opened, fetcher);
    ByteView want(image.data() + c * kChunk, kChunk);
    try {
      ChunkPtr got = img.chunk(c);
      for (std::size_t i = 0; i < kChunk; ++i)
        if ((*got)[i] != want[i]) ++corrupted_bytes;
      if (!fetcher.integrity_events().empty()) {
        ++detected;
      } else if (std::equal(got->begin(), got->end(), want.begin())) {
        ++masked;
      } else {
        ++unexplained;
      }
    } catch (const IntegrityError&) {
      ++detected;
    }
    if (target == 0) store.backend().corrupt("r", ObjectKind::chunk, chunk_name(name), original_ct);
  }
  bool ok = trials == 1000 && corrupted_bytes == 0 && unexplained == 0 && detected + masked == trials;
  return {ok, fmt("%zu flips (origin %zu, stripe %zu, manifest %zu): %zu detected, %zu masked, %zu unexplained, "
                  "%zu corrupted bytes returned",
                  trials, by_target[0], by_target[1], by_target[2], detected, masked, unexplained, corrupted_bytes)};
}

Verdict cold_start() {
  sim::SimConfig c = sim::load_config(std::string(CVAULT_CONFIGS) + "/cold_start.json");
  c.limiter.enabled = true;
  sim::DrillReport limited = sim::cold_start_drill(c);
  c.limiter.enabled = false;
  c.feedback.enabled = true;
  sim::DrillReport open = sim::cold_start_drill(c);
  bool recovered = limited.recovery_s.has_value();
  bool ok = limited.max_backlog_after_flush <= limited.max_in_flight && recovered &&
            open.max_backlog_after_flush > limited.max_backlog_after_flush;
  return {ok, fmt("limited: peak backlog %zu (max_in_flight %zu), L2 hit rate back to %.0f%% of %.3f after %s; "
                  "limiter off: peak backlog %zu",
                  limited.max_backlog_after_flush, limited.max_in_flight, 100.0 * c.drill.recovery_fraction,
                  limited.baseline_l2_hit_rate,
                  recovered ? fmt("%.0fs", *limited.recovery_s).c_str() : "never",
                  open.max_backlog_after_flush)};
}

}  // namespace

int main() {
  report(1, "manifest overhead", manifest_overhead);
  report(2, "convergent dedup", convergence_dedup);
  report(3, "erasure reconstruction", erasure_roundtrip);
  report(4, "redundant fetch tail", tail_latency);
  report(5, "scan resistance", scan_resistance);
  report(6, "gc safety", gc_safety);
  report(7, "copy-on-write oracle", cow_oracle);
  report(8, "integrity under bit flips", integrity);
  report(9, "cold-start drill", cold_start);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
