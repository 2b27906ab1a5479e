#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <list>
#include <optional>
#include <set>
#include <tuple>
#include <unordered_map>

namespace cvault {

enum class PutOutcome { inserted, updated, rejected_oversized, rejected_admission };

// Byte-bounded LRU-k cache.
//
// The victim is the entry whose k-th most recent access is oldest. Entries
// with fewer than k recorded accesses have infinite backward k-distance and
// go first, oldest last access first. An incoming entry takes part in the
// ranking: if it would itself be the victim it is not admitted. Access
// history of evicted or rejected keys is retained in a bounded ghost table
// so a key touched again soon keeps its earlier accesses.
template <class Key, class Value, class Hash = std::hash<Key>>
class LruKCache {
 public:
  struct Stats {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t inserts = 0;
    std::uint64_t evictions = 0;
    std::uint64_t rejections = 0;
  };

  using EvictionListener = std::function<void(const Key&)>;

  LruKCache(std::size_t capacity_bytes, std::size_t k, std::size_t ghost_capacity = 4096)
      : capacity_(capacity_bytes), k_(k == 0 ? 1 : k), ghost_capacity_(ghost_capacity) {}

  // Records an access on hit. Misses record nothing; the following put is
  // the access.
  const Value* get(const Key& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      ++stats_.misses;
      return nullptr;
    }
    ++stats_.hits;
    touch(it->second);
    return &it->second.value;
  }

  // Lookup without recording an access.
  const Value* peek(const Key& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second.value;
  }

  bool contains(const Key& key) const { return entries_.count(key) != 0; }

  PutOutcome put(const Key& key, Value value, std::size_t size) {
    if (size > capacity_) {
      ++stats_.rejections;
      return PutOutcome::rejected_oversized;
    }
    const std::uint64_t now = ++clock_;
    if (auto it = entries_.find(key); it != entries_.end()) {
      Entry& e = it->second;
      ranking_.erase(rank_of(e));
      record(e.history, now);
      used_ -= e.size;
      e.value = std::move(value);
      e.size = size;
      used_ += size;
      ranking_.insert(rank_of(e));
      evict_until_fits(0, nullptr);
      return PutOutcome::updated;
    }

    std::deque<std::uint64_t> history = take_ghost(key);
    record(history, now);
    const RankKey incoming{tier(history), rank_time(history), 0};
    if (!evict_until_fits(size, &incoming)) {
      ++stats_.rejections;
      remember_ghost(key, std::move(history));
      return PutOutcome::rejected_admission;
    }
    Entry e{std::move(value), size, std::move(history), ++seq_};
    ranking_.insert(rank_of(e));
    by_seq_.emplace(e.seq, key);
    used_ += size;
    entries_.emplace(key, std::move(e));
    ++stats_.inserts;
    return PutOutcome::inserted;
  }

  bool erase(const Key& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return false;
    drop(it);
    return true;
  }

  // Empties the cache and forgets all history.
  void clear() {
    entries_.clear();
    ranking_.clear();
    by_seq_.clear();
    ghosts_.clear();
    ghost_order_.clear();
    used_ = 0;
  }

  // The key that would be evicted next, if any.
  std::optional<Key> victim() const {
    if (ranking_.empty()) return std::nullopt;
    return by_seq_.at(std::get<2>(*ranking_.begin()));
  }

  std::size_t history_length(const Key& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.history.size();
  }

  void set_eviction_listener(EvictionListener listener) { on_evict_ = std::move(listener); }

  std::size_t size_bytes() const { return used_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t count() const { return entries_.size(); }
  std::size_t k() const { return k_; }
  const Stats& stats() const { return stats_; }

 private:
  // (tier, time, seq): tier 0 = fewer than k accesses, ranked by last
  // access; tier 1 ranked by k-th most recent access. Smallest goes first.
  using RankKey = std::tuple<int, std::uint64_t, std::uint64_t>;

  struct Entry {
    Value value;
    std::size_t size;
    std::deque<std::uint64_t> history;  // most recent first, at most k
    std::uint64_t seq;
  };

  int tier(const std::deque<std::uint64_t>& h) const { return h.size() >= k_ ? 1 : 0; }
  std::uint64_t rank_time(const std::deque<std::uint64_t>& h) const {
    return h.size() >= k_ ? h[k_ - 1] : h.front();
  }
  RankKey rank_of(const Entry& e) const { return {tier(e.history), rank_time(e.history), e.seq}; }

  void record(std::deque<std::uint64_t>& h, std::uint64_t now) {
    h.push_front(now);
    if (h.size() > k_) h.pop_back();
  }

  void touch(Entry& e) {
    ranking_.erase(rank_of(e));
    record(e.history, ++clock_);
    ranking_.insert(rank_of(e));
  }

  // Frees room for `size` more bytes. With `incoming` set, refuses (and
  // evicts nothing) when the incoming entry ranks older than the newest
  // victim that would be needed.
  bool evict_until_fits(std::size_t size, const RankKey* incoming) {
    if (used_ + size <= capacity_) return true;
    if (incoming) {
      std::size_t freed = 0;
      const RankKey* last = nullptr;
      for (const RankKey& r : ranking_) {
        freed += entries_.at(by_seq_.at(std::get<2>(r))).size;
        last = &r;
        if (used_ - freed + size <= capacity_) break;
      }
      if (last && std::make_pair(std::get<0>(*incoming), std::get<1>(*incoming)) <
                      std::make_pair(std::get<0>(*last), std::get<1>(*last))) {
        return false;
      }
    }
    while (used_ + size > capacity_ && !ranking_.empty()) {
      auto it = entries_.find(by_seq_.at(std::get<2>(*ranking_.begin())));
      Key key = it->first;
      remember_ghost(key, it->second.history);
      drop(it);
      ++stats_.evictions;
      if (on_evict_) on_evict_(key);
    }
    return true;
  }

  void drop(typename std::unordered_map<Key, Entry, Hash>::iterator it) {
    ranking_.erase(rank_of(it->second));
    by_seq_.erase(it->second.seq);
    used_ -= it->second.size;
    entries_.erase(it);
  }

  std::deque<std::uint64_t> take_ghost(const Key& key) {
    auto it = ghosts_.find(key);
    if (it == ghosts_.end()) return {};
    std::deque<std::uint64_t> h = std::move(it->second.first);
    ghost_order_.erase(it->second.second);
    ghosts_.erase(it);
    return h;
  }

  void remember_ghost(const Key& key, std::deque<std::uint64_t> history) {
    if (ghost_capacity_ == 0) return;
    if (auto it = ghosts_.find(key); it != ghosts_.end()) {
      ghost_order_.erase(it->second.second);
      ghosts_.erase(it);
    }
    ghost_order_.push_back(key);
    ghosts_.emplace(key, std::make_pair(std::move(history), std::prev(ghost_order_.end())));
    while (ghosts_.size() > ghost_capacity_) {
      ghosts_.erase(ghost_order_.front());
      ghost_order_.pop_front();
    }
  }

  std::size_t capacity_;
  std::size_t k_;
  std::size_t ghost_capacity_;
  std::size_t used_ = 0;
  std::uint64_t clock_ = 0;
  std::uint64_t seq_ = 0;
  std::unordered_map<Key, Entry, Hash> entries_;
  std::set<RankKey> ranking_;
  std::unordered_map<std::uint64_t, Key> by_seq_;
  std::list<Key> ghost_order_;
  std::unordered_map<Key, std::pair<std::deque<std::uint64_t>, typename std::list<Key>::iterator>, Hash> ghosts_;
  EvictionListener on_evict_;
  Stats stats_;
};

}  // namespace cvault
