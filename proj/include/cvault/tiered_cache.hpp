#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cvault/bytes.hpp"
#include "cvault/crypto.hpp"
#include "cvault/hash_ring.hpp"
#include "cvault/lru_k.hpp"
#include "cvault/origin_store.hpp"

namespace cvault {

using ChunkPtr = std::shared_ptr<const Bytes>;

struct StripeKey {
  Digest name{};
  std::uint32_t stripe = 0;
  bool operator==(const StripeKey&) const = default;
};

struct StripeKeyHash {
  std::size_t operator()(const StripeKey& k) const noexcept;
};

// Per-worker plaintext chunk cache, safe for concurrent use.
class L1Cache {
 public:
  L1Cache(std::size_t capacity_bytes, std::size_t k = 2, std::size_t ghost_capacity = 4096);

  ChunkPtr get(const Digest& name);
  PutOutcome put(const Digest& name, ChunkPtr chunk);
  // Returns the cached chunk or loads, inserts and returns it. Concurrent
  // callers for one name all receive identical bytes; `loaded` reports
  // whether this call ran the loader.
  ChunkPtr get_or_insert(const Digest& name, const std::function<ChunkPtr()>& load, bool* loaded = nullptr);
  bool contains(const Digest& name) const;
  void clear();

  std::size_t count() const;
  std::size_t size_bytes() const;
  std::size_t capacity() const;
  LruKCache<Digest, ChunkPtr, DigestHash>::Stats stats() const;
  void set_eviction_listener(std::function<void(const Digest&)> listener);

 private:
  mutable std::mutex mu_;
  LruKCache<Digest, ChunkPtr, DigestHash> cache_;
};

// One L2 cache server holding stripes under LRU-k.
class CacheNode {
 public:
  CacheNode(NodeId id, std::size_t capacity_bytes, std::size_t k = 2, std::size_t ghost_capacity = 4096);

  NodeId id() const { return id_; }
  // nullptr on miss or when the node is down.
  ChunkPtr get(const StripeKey& key);
  // Overwrites any existing stripe (used for write-back and repair).
  void put(const StripeKey& key, ChunkPtr stripe);
  bool contains(const StripeKey& key) const;

  bool up() const;
  void set_up(bool up);
  void flush();
  std::size_t count() const;

  void set_eviction_listener(std::function<void(const StripeKey&)> listener);

  // Test hook: flip one bit of a stored stripe.
  bool corrupt(const StripeKey& key, std::size_t bit);

  struct Counters {
    std::uint64_t gets = 0;
    std::uint64_t hits = 0;
    std::uint64_t puts = 0;
  };
  Counters counters() const;

 private:
  NodeId id_;
  mutable std::mutex mu_;
  bool up_ = true;
  LruKCache<StripeKey, ChunkPtr, StripeKeyHash> store_;
  Counters counters_;
};

// The shared L2 tier: nodes plus the ring that places stripes on them.
class L2Cluster {
 public:
  L2Cluster(std::size_t node_count, std::size_t node_capacity_bytes, std::size_t k = 2, std::uint32_t vnodes = 100,
            std::size_t ghost_capacity = 4096);

  std::size_t size() const { return nodes_.size(); }
  CacheNode& node(NodeId id);
  const HashRing& ring() const { return ring_; }
  void set_node_up(NodeId id, bool up);
  void flush();

 private:
  std::vector<std::unique_ptr<CacheNode>> nodes_;
  HashRing ring_;
};

enum class Tier { l1, l2, l3 };
std::string_view to_string(Tier t);

// Durable source of ciphertext chunks (the L3 tier).
class OriginSource {
 public:
  virtual ~OriginSource() = default;
  // Throws NotFoundError when the chunk does not exist.
  virtual Bytes fetch_chunk(const Digest& name) = 0;
};

class StoreOrigin : public OriginSource {
 public:
  StoreOrigin(OriginStore& store, std::string root_id) : store_(store), root_id_(std::move(root_id)) {}
  Bytes fetch_chunk(const Digest& name) override;
  void set_root(std::string root_id) { root_id_ = std::move(root_id); }

 private:
  OriginStore& store_;
  std::string root_id_;
};

// Virtual latencies (microseconds) for the fetch path; the simulator
// provides one, the plain in-process path runs without.
class LatencySampler {
 public:
  virtual ~LatencySampler() = default;
  virtual double l1_hit() = 0;
  virtual double l2_request(NodeId node, bool hit) = 0;
  virtual double origin_fetch() = 0;
};

struct FetchPolicy {
  std::uint32_t k = 4;
  // k+1 requests, finish on the first k good stripes. Off: request only the
  // k data stripes and need all of them.
  bool redundant = true;
  // After an origin fetch, encode and put all k+1 stripes into L2.
  bool write_back = true;
  // Re-put a stripe found corrupt once the chunk has been recovered.
  bool repair = true;
};

struct FetchResult {
  ChunkPtr plaintext;
  Tier source = Tier::l1;
  std::uint32_t l2_requests = 0;
  std::uint32_t l2_stripes_returned = 0;
  std::uint32_t corrupt_stripes = 0;
  double latency_us = 0.0;
  double l2_latency_us = 0.0;
  double l3_latency_us = 0.0;
};

struct IntegrityEvent {
  Tier tier = Tier::l2;
  Digest name{};
  std::optional<NodeId> node;
  std::optional<std::uint32_t> stripe;
};

// L1 -> L2 (erasure-coded, constant work) -> origin read path. Every
// returned plaintext comes from a ciphertext whose SHA-256 matched the
// manifest entry.
class ChunkFetcher {
 public:
  ChunkFetcher(L1Cache& l1, L2Cluster* l2, OriginSource& origin, FetchPolicy policy = {},
               LatencySampler* latency = nullptr);

  // Throws IntegrityError when the origin copy fails its hash check and
  // NotFoundError when the origin lacks the chunk.
  FetchResult fetch(const Digest& name, const ChunkKey& key, long long chunk_index = -1);

  // Encodes a ciphertext and puts all of its stripes into L2.
  void populate_l2(const Digest& name, ByteView ciphertext) { write_back(name, ciphertext); }

  const std::vector<IntegrityEvent>& integrity_events() const { return events_; }
  std::uint64_t l2_requests_issued() const { return l2_requests_; }
  const FetchPolicy& policy() const { return policy_; }
  void set_latency_sampler(LatencySampler* sampler) { latency_ = sampler; }
  void set_origin(OriginSource& origin) { origin_ = &origin; }

 private:
  struct L2Attempt {
    std::optional<Bytes> ciphertext;
    double ready_us = 0.0;
    std::uint32_t requests = 0;
    std::uint32_t returned = 0;
    std::uint32_t corrupt = 0;
  };

  L2Attempt try_l2(const Digest& name);
  void write_back(const Digest& name, ByteView ciphertext);

  L1Cache& l1_;
  L2Cluster* l2_;
  OriginSource* origin_;
  FetchPolicy policy_;
  LatencySampler* latency_;
  std::vector<IntegrityEvent> events_;
  std::uint64_t l2_requests_ = 0;
};

}  // namespace cvault
