#include <gtest/gtest.h>

#include <algorithm>
#include <deque>
#include <map>
#include <random>
#include <string>

#include "cvault/lru_k.hpp"

using namespace cvault;

namespace {

// Brute-force restatement of the policy: every decision is made by sorting
// all entries by (tier, rank time, insertion order).
class OracleLruK {
 public:
  OracleLruK(std::size_t capacity, std::size_t k) : cap_(capacity), k_(k) {}

  bool get(int key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return false;
    record(it->second.history);
    return true;
  }

  PutOutcome put(int key, std::size_t size) {
    if (size > cap_) return PutOutcome::rejected_oversized;
    if (auto it = entries_.find(key); it != entries_.end()) {
      record(it->second.history);
      used_ += size - it->second.size;
      it->second.size = size;
      evict(0);
      return PutOutcome::updated;
    }
    std::deque<std::uint64_t> h = ghosts_[key];
    ghosts_.erase(key);
    record(h);
    if (used_ + size > cap_) {
      auto order = victims();
      std::size_t freed = 0;
      std::pair<int, std::uint64_t> last{};
      for (int v : order) {
        freed += entries_[v].size;
        last = rank(entries_[v].history);
        if (used_ - freed + size <= cap_) break;
      }
      if (rank(h) < last) {
        ghosts_[key] = h;
        return PutOutcome::rejected_admission;
      }
    }
    evict(size);
    entries_[key] = Entry{size, h, ++seq_};
    used_ += size;
    return PutOutcome::inserted;
  }

  std::vector<int> keys() const {
    std::vector<int> out;
    for (const auto& [k, e] : entries_) out.push_back(k);
    return out;
  }
  std::size_t used() const { return used_; }

 private:
  struct Entry {
    std::size_t size;
    std::deque<std::uint64_t> history;
    std::uint64_t seq;
  };

  void record(std::deque<std::uint64_t>& h) {
    h.push_front(++clock_);
    if (h.size() > k_) h.pop_back();
  }
  std::pair<int, std::uint64_t> rank(const std::deque<std::uint64_t>& h) const {
    return h.size() >= k_ ? std::make_pair(1, h[k_ - 1]) : std::make_pair(0, h.front());
  }
  std::vector<int> victims() const {
    std::vector<int> v = keys();
    std::sort(v.begin(), v.end(), [&](int a, int b) {
      const Entry& ea = entries_.at(a);
      const Entry& eb = entries_.at(b);
      return std::make_tuple(rank(ea.history), ea.seq) < std::make_tuple(rank(eb.history), eb.seq);
    });
    return v;
  }
  void evict(std::size_t size) {
    while (used_ + size > cap_ && !entries_.empty()) {
      int v = victims().front();
      ghosts_[v] = entries_[v].history;
      used_ -= entries_[v].size;
      entries_.erase(v);
    }
  }

  std::size_t cap_, k_;
  std::size_t used_ = 0;
  std::uint64_t clock_ = 0, seq_ = 0;
  std::map<int, Entry> entries_;
  std::map<int, std::deque<std::uint64_t>> ghosts_;
};

std::vector<int> sorted_keys(LruKCache<int, int>& c, int universe) {
  std::vector<int> out;
  for (int i = 0; i < universe; ++i)
    if (c.contains(i)) out.push_back(i);
  return out;
}

}  // namespace

TEST(LruK, MatchesBruteForceOracle) {
  for (std::size_t k : {1, 2, 3}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      std::mt19937_64 rng(seed * 31 + k);
      LruKCache<int, int> cache(100, k, 1 << 20);
      OracleLruK oracle(100, k);
      for (int step = 0; step < 4000; ++step) {
        int key = static_cast<int>(rng() % 40);
        if (rng() % 2) {
          ASSERT_EQ(cache.get(key) != nullptr, oracle.get(key)) << "step " << step;
        } else {
          std::size_t size = 1 + rng() % 15;
          ASSERT_EQ(cache.put(key, key, size), oracle.put(key, size)) << "step " << step;
        }
        ASSERT_EQ(sorted_keys(cache, 40), oracle.keys()) << "k " << k << " seed " << seed << " step " << step;
        ASSERT_EQ(cache.size_bytes(), oracle.used());
        ASSERT_LE(cache.size_bytes(), cache.capacity());
      }
    }
  }
}

TEST(LruK, KOneIsPlainLru) {
  LruKCache<int, int> c(3, 1);
  c.put(1, 1, 1);
  c.put(2, 2, 1);
  c.put(3, 3, 1);
  c.get(1);
  c.put(4, 4, 1);
  EXPECT_FALSE(c.contains(2));
  EXPECT_TRUE(c.contains(1));
  EXPECT_EQ(c.victim(), 3);
}

TEST(LruK, SingleAccessScanCannotDisplaceRepeatedEntries) {
  LruKCache<int, int> c(10, 2);
  for (int i = 0; i < 8; ++i) {
    c.put(i, i, 1);
    c.get(i);
  }
  std::uint64_t evicted_hot = 0;
  c.set_eviction_listener([&](const int& key) {
    if (key < 8) ++evicted_hot;
  });
  for (int s = 100; s < 1100; ++s) c.put(s, s, 1);
  EXPECT_EQ(evicted_hot, 0u);
  for (int i = 0; i < 8; ++i) EXPECT_TRUE(c.contains(i));
}

TEST(LruK, ScanFlushesLruOne) {
  LruKCache<int, int> c(10, 1);
  for (int i = 0; i < 8; ++i) {
    c.put(i, i, 1);
    c.get(i);
  }
  for (int s = 100; s < 120; ++s) c.put(s, s, 1);
  for (int i = 0; i < 8; ++i) EXPECT_FALSE(c.contains(i));
}

TEST(LruK, GhostHistoryLetsReturningKeyQualify) {
  LruKCache<int, int> c(2, 2);
  c.put(1, 1, 1);
  c.put(2, 2, 1);
  c.put(3, 3, 1);  // evicts 1, remembers its access
  EXPECT_FALSE(c.contains(1));
  c.put(1, 1, 1);
  EXPECT_EQ(c.history_length(1), 2u);
}

TEST(LruK, OversizedRejected) {
  LruKCache<int, int> c(10, 2);
  EXPECT_EQ(c.put(1, 1, 11), PutOutcome::rejected_oversized);
  EXPECT_EQ(c.stats().rejections, 1u);
}

TEST(LruK, ClearForgetsEverything) {
  LruKCache<int, int> c(10, 2);
  c.put(1, 1, 5);
  c.get(1);
  c.clear();
  EXPECT_EQ(c.count(), 0u);
  EXPECT_EQ(c.size_bytes(), 0u);
  c.put(1, 1, 1);
  EXPECT_EQ(c.history_length(1), 1u);
}
