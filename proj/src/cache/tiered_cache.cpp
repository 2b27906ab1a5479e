#include "cvault/tiered_cache.hpp"

#include <algorithm>
#include <cstring>

#include "cvault/erasure.hpp"
#include "cvault/errors.hpp"

namespace cvault {

std::size_t StripeKeyHash::operator()(const StripeKey& k) const noexcept {
  return DigestHash{}(k.name) ^ (static_cast<std::size_t>(k.stripe) * 0x9e3779b97f4a7c15ULL);
}

std::string_view to_string(Tier t) {
  switch (t) {
    case Tier::l1: return "L1";
    case Tier::l2: return "L2";
    case Tier::l3: return "L3";
  }
  return "?";
}

L1Cache::L1Cache(std::size_t capacity_bytes, std::size_t k, std::size_t ghost_capacity)
    : cache_(capacity_bytes, k, ghost_capacity) {}

ChunkPtr L1Cache::get(const Digest& name) {
  std::lock_guard lock(mu_);
  const ChunkPtr* hit = cache_.get(name);
  return hit ? *hit : nullptr;
}

PutOutcome L1Cache::put(const Digest& name, ChunkPtr chunk) {
  std::lock_guard lock(mu_);
  std::size_t size = chunk->size();
  return cache_.put(name, std::move(chunk), size);
}

ChunkPtr L1Cache::get_or_insert(const Digest& name, const std::function<ChunkPtr()>& load, bool* loaded) {
  if (loaded) *loaded = false;
  if (ChunkPtr hit = get(name)) return hit;
  ChunkPtr fresh = load();
  std::lock_guard lock(mu_);
  // Another caller may have inserted while we were loading; keep theirs.
  if (const ChunkPtr* raced = cache_.peek(name)) return *raced;
  cache_.put(name, fresh, fresh->size());
  if (loaded) *loaded = true;
  return fresh;
}

bool L1Cache::contains(const Digest& name) const {
  std::lock_guard lock(mu_);
  return cache_.contains(name);
}

void L1Cache::clear() {
  std::lock_guard lock(mu_);
  cache_.clear();
}

std::size_t L1Cache::count() const {
  std::lock_guard lock(mu_);
  return cache_.count();
}

std::size_t L1Cache::size_bytes() const {
  std::lock_guard lock(mu_);
  return cache_.size_bytes();
}

std::size_t L1Cache::capacity() const { return cache_.capacity(); }

LruKCache<Digest, ChunkPtr, DigestHash>::Stats L1Cache::stats() const {
  std::lock_guard lock(mu_);
  return cache_.stats();
}

void L1Cache::set_eviction_listener(std::function<void(const Digest&)> listener) {
  std::lock_guard lock(mu_);
  cache_.set_eviction_listener(std::move(listener));
}

CacheNode::CacheNode(NodeId id, std::size_t capacity_bytes, std::size_t k, std::size_t ghost_capacity)
    : id_(id), store_(capacity_bytes, k, ghost_capacity) {}

ChunkPtr CacheNode::get(const StripeKey& key) {
  std::lock_guard lock(mu_);
  ++counters_.gets;
  if (!up_) return nullptr;
  const ChunkPtr* hit = store_.get(key);
  if (!hit) return nullptr;
  ++counters_.hits;
  return *hit;
}

void CacheNode::put(const StripeKey& key, ChunkPtr stripe) {
  std::lock_guard lock(mu_);
  if (!up_) return;
  ++counters_.puts;
  std::size_t size = stripe->size();
  store_.put(key, std::move(stripe), size);
}

bool CacheNode::contains(const StripeKey& key) const {
  std::lock_guard lock(mu_);
  return store_.contains(key);
}

bool CacheNode::up() const {
  std::lock_guard lock(mu_);
  return up_;
}

void CacheNode::set_up(bool up) {
  std::lock_guard lock(mu_);
  up_ = up;
}

void CacheNode::flush() {
  std::lock_guard lock(mu_);
  store_.clear();
}

std::size_t CacheNode::count() const {
  std::lock_guard lock(mu_);
  return store_.count();
}

bool CacheNode::corrupt(const StripeKey& key, std::size_t bit) {
  std::lock_guard lock(mu_);
  const ChunkPtr* cur = store_.peek(key);
  if (!cur || (*cur)->empty()) return false;
  auto copy = std::make_shared<Bytes>(**cur);
  (*copy)[(bit / 8) % copy->size()] ^= static_cast<std::uint8_t>(1u << (bit % 8));
  std::size_t size = copy->size();
  store_.put(key, std::move(copy), size);
  return true;
}

void CacheNode::set_eviction_listener(std::function<void(const StripeKey&)> listener) {
  std::lock_guard lock(mu_);
  store_.set_eviction_listener(std::move(listener));
}

CacheNode::Counters CacheNode::counters() const {
  std::lock_guard lock(mu_);
  return counters_;
}

L2Cluster::L2Cluster(std::size_t node_count, std::size_t node_capacity_bytes, std::size_t k, std::uint32_t vnodes,
                     std::size_t ghost_capacity)
    : ring_(vnodes) {
  for (std::size_t i = 0; i < node_count; ++i) {
    auto id = static_cast<NodeId>(i);
    nodes_.push_back(std::make_unique<CacheNode>(id, node_capacity_bytes, k, ghost_capacity));
    ring_.add_node(id);
  }
}

CacheNode& L2Cluster::node(NodeId id) {
  if (id >= nodes_.size()) throw NotFoundError("unknown cache node " + std::to_string(id));
  return *nodes_[id];
}

// An outage keeps ring membership: stripes stay where they were placed and
// the down node just misses, so a single outage costs one stripe per chunk.
void L2Cluster::set_node_up(NodeId id, bool up) { node(id).set_up(up); }

void L2Cluster::flush() {
  for (auto& n : nodes_) n->flush();
}

Bytes StoreOrigin::fetch_chunk(const Digest& name) { return store_.get(root_id_, ObjectKind::chunk, chunk_name(name)); }

ChunkFetcher::ChunkFetcher(L1Cache& l1, L2Cluster* l2, OriginSource& origin, FetchPolicy policy,
                           LatencySampler* latency)
    : l1_(l1), l2_(l2), origin_(&origin), policy_(policy), latency_(latency) {
  validate_stripe_count(policy_.k);
}

ChunkFetcher::L2Attempt ChunkFetcher::try_l2(const Digest& name) {
  L2Attempt attempt;
  if (!l2_ || l2_->ring().up_count() == 0) return attempt;

  const std::uint32_t k = policy_.k;
  const std::uint32_t wanted = policy_.redundant ? k + 1 : k;
  std::vector<NodeId> placement = l2_->ring().locate_stripes(name, k + 1);

  struct Reply {
    std::uint32_t stripe;
    NodeId node;
    ChunkPtr bytes;
    double at;
  };
  std::vector<Reply> replies;
  for (std::uint32_t s = 0; s < wanted; ++s) {
    NodeId node = placement[s];
    ChunkPtr bytes = l2_->node(node).get(StripeKey{name, s});
    double at = latency_ ? latency_->l2_request(node, bytes != nullptr) : 0.0;
    replies.push_back(Reply{s, node, std::move(bytes), at});
  }
  attempt.requests = wanted;
  l2_requests_ += wanted;
  std::stable_sort(replies.begin(), replies.end(), [](const Reply& a, const Reply& b) { return a.at < b.at; });

  std::vector<const Reply*> good;
  std::uint32_t misses = 0;
  double fail_at = 0.0;
  for (const Reply& r : replies) {
    if (r.bytes) {
      good.push_back(&r);
    } else if (++misses > wanted - k && fail_at == 0.0) {
      fail_at = r.at;
    }
  }
  attempt.returned = static_cast<std::uint32_t>(good.size());
  if (good.size() < k) {
    attempt.ready_us = fail_at;
    return attempt;
  }

  auto try_subset = [&](const std::vector<const Reply*>& subset) -> std::optional<Bytes> {
    std::vector<Stripe> stripes;
    for (const Reply* r : subset) stripes.push_back(Stripe{r->stripe, *r->bytes});
    Bytes chunk;
    try {
      chunk = reconstruct(stripes, k);
    } catch (const ValidationError&) {
      return std::nullopt;
    }
    if (sha256(chunk) != name) return std::nullopt;
    return chunk;
  };

  // First k arrivals, then every other k-subset of the returned stripes.
  std::vector<const Reply*> first(good.begin(), good.begin() + k);
  if (auto chunk = try_subset(first)) {
    attempt.ciphertext = std::move(chunk);
    attempt.ready_us = first.back()->at;
    return attempt;
  }
  if (good.size() > k) {
    for (std::size_t skip = 0; skip < good.size(); ++skip) {
      std::vector<const Reply*> subset;
      for (std::size_t i = 0; i < good.size(); ++i)
        if (i != skip) subset.push_back(good[i]);
      if (subset.size() != k) continue;
      if (auto chunk = try_subset(subset)) {
        const Reply* bad = good[skip];
        ++attempt.corrupt;
        events_.push_back(IntegrityEvent{Tier::l2, name, bad->node, bad->stripe});
        if (policy_.repair) {
          StripeSet set = encode(*chunk, k);
          l2_->node(bad->node).put(StripeKey{name, bad->stripe},
                                   std::make_shared<const Bytes>(std::move(set.stripes[bad->stripe].bytes)));
        }
        attempt.ciphertext = std::move(chunk);
        attempt.ready_us = good.back()->at;
        return attempt;
      }
    }
  }
  // Returned stripes are inconsistent and no subset recovers the chunk; the
  // culprit cannot be identified.
  ++attempt.corrupt;
  events_.push_back(IntegrityEvent{Tier::l2, name, std::nullopt, std::nullopt});
  attempt.ready_us = replies.back().at;
  return attempt;
}

void ChunkFetcher::write_back(const Digest& name, ByteView ciphertext) {
  if (!l2_ || l2_->ring().up_count() == 0 || ciphertext.size() % policy_.k != 0) return;
  StripeSet set = encode(ciphertext, policy_.k);
  std::vector<NodeId> placement = l2_->ring().locate_stripes(name, policy_.k + 1);
  for (Stripe& s : set.stripes) {
    l2_->node(placement[s.index]).put(StripeKey{name, s.index}, std::make_shared<const Bytes>(std::move(s.bytes)));
  }
}

FetchResult ChunkFetcher::fetch(const Digest& name, const ChunkKey& key, long long chunk_index) {
  FetchResult result;
  if (ChunkPtr hit = l1_.get(name)) {
    result.plaintext = std::move(hit);
    result.source = Tier::l1;
    result.latency_us = latency_ ? latency_->l1_hit() : 0.0;
    return result;
  }

  L2Attempt l2 = try_l2(name);
  result.l2_requests = l2.requests;
  result.l2_stripes_returned = l2.returned;
  result.corrupt_stripes = l2.corrupt;
  result.l2_latency_us = l2.ready_us;

  Bytes ciphertext;
  if (l2.ciphertext) {
    // try_l2 only returns reconstructions whose hash matched the name.
    result.source = Tier::l2;
    ciphertext = std::move(*l2.ciphertext);
  } else {
    result.source = Tier::l3;
    ciphertext = origin_->fetch_chunk(name);
    result.l3_latency_us = latency_ ? latency_->origin_fetch() : 0.0;
    if (sha256(ciphertext) != name) {
      events_.push_back(IntegrityEvent{Tier::l3, name, std::nullopt, std::nullopt});
      std::string where = chunk_index >= 0 ? " for chunk " + std::to_string(chunk_index) : std::string();
      throw IntegrityError("origin ciphertext hash mismatch" + where, chunk_index);
    }
  }
  auto plain = std::make_shared<const Bytes>(decrypt_verified_chunk(ciphertext, key));
  if (result.source == Tier::l3 && policy_.write_back) write_back(name, ciphertext);
  l1_.put(name, plain);
  result.plaintext = std::move(plain);
  result.latency_us = result.l2_latency_us + result.l3_latency_us;
  return result;
}

}  // namespace cvault
