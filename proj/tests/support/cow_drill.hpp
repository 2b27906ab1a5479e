#pragma once

#include <random>
#include <string>

#include "cvault/blockdev.hpp"

namespace cvault_test {

struct CowDrillResult {
  std::size_t ops = 0;
  std::size_t reads = 0;
  std::size_t writes = 0;
  std::size_t mismatched_bytes = 0;
  std::size_t expected_rmw = 0;
  std::size_t observed_rmw = 0;
  std::size_t rmw_pages_with_wrong_base = 0;
  bool overlay_consistent = true;
  bool dirty_pages_match = true;
  bool base_untouched = true;
};

// Random reads and writes against a device view and a flat byte buffer
// holding what the device must contain.
inline CowDrillResult run_cow_drill(std::uint64_t seed, std::size_t ops) {
  using namespace cvault;
  constexpr std::size_t kPage = 4096;
  constexpr std::uint32_t kChunk = 4 * kPage;
  std::mt19937_64 rng(seed);

  const std::size_t chunks = 24;
  const std::uint64_t length = chunks * kChunk - (seed % 2 ? 1000 : 0);
  Bytes base(length, 0);
  for (std::size_t c = 0; c < chunks; ++c) {
    if (c % 5 == 2) continue;  // zero chunks
    for (std::size_t i = c * kChunk; i < std::min<std::uint64_t>((c + 1) * kChunk, length); ++i)
      base[i] = static_cast<std::uint8_t>(rng());
  }
  BufferImage image(base, kChunk);
  DeviceView dev(image, kPage);
  Bytes oracle = base;
  std::vector<bool> dirty((length + kPage - 1) / kPage, false);

  CowDrillResult res;
  auto span_len = [&]() -> std::uint64_t {
    switch (rng() % 4) {
      case 0: return 1 + rng() % 16;
      case 1: return kPage;
      case 2: return 1 + rng() % (3 * kPage);
      default: return 1 + rng() % 200;
    }
  };
  for (std::size_t op = 0; op < ops; ++op) {
    ++res.ops;
    std::uint64_t len = std::min<std::uint64_t>(span_len(), length);
    std::uint64_t off = (rng() % 3 == 0) ? (rng() % (length / kPage)) * kPage : rng() % length;
    if (off + len > length) off = length - len;
    if (rng() % 2) {
      ++res.reads;
      Bytes got = dev.read(off, len);
      for (std::uint64_t i = 0; i < len; ++i)
        if (got[i] != oracle[off + i]) ++res.mismatched_bytes;
    } else {
      ++res.writes;
      Bytes data(len);
      for (auto& b : data) b = static_cast<std::uint8_t>(rng());
      // Pages this write covers only partly and that are still clean need a
      // read-modify-write.
      std::vector<std::uint64_t> rmw_pages;
      for (std::uint64_t p = off / kPage; p <= (off + len - 1) / kPage; ++p) {
        std::uint64_t lo = std::max(off, p * kPage), hi = std::min(off + len, (p + 1) * kPage);
        if (!dirty[p] && hi - lo < kPage) rmw_pages.push_back(p);
      }
      std::size_t before = dev.rmw_count();
      dev.write(off, data);
      res.expected_rmw += rmw_pages.size();
      res.observed_rmw += dev.rmw_count() - before;
      std::copy(data.begin(), data.end(), oracle.begin() + static_cast<std::ptrdiff_t>(off));
      // The bytes of an RMW page outside the write come from the base image.
      for (std::uint64_t p : rmw_pages) {
        const Bytes* page = dev.overlay().page(p);
        if (!page) {
          ++res.rmw_pages_with_wrong_base;
          continue;
        }
        for (std::uint64_t i = 0; i < kPage; ++i) {
          std::uint64_t at = p * kPage + i;
          bool written = at >= off && at < off + len;
          std::uint8_t want = at >= length ? 0 : (written ? oracle[at] : base[at]);
          if ((*page)[i] != want) {
            ++res.rmw_pages_with_wrong_base;
            break;
          }
        }
      }
      for (std::uint64_t p = off / kPage; p <= (off + len - 1) / kPage; ++p) dirty[p] = true;
    }
  }
  Bytes all = dev.read(0, length);
  for (std::uint64_t i = 0; i < length; ++i)
    if (all[i] != oracle[i]) ++res.mismatched_bytes;
  res.overlay_consistent = dev.overlay().consistent();
  for (std::uint64_t p = 0; p < dirty.size(); ++p)
    if (dev.overlay().dirty(p) != dirty[p]) res.dirty_pages_match = false;
  for (std::size_t c = 0; c < image.chunk_count(); ++c) {
    if (image.is_zero_chunk(c)) continue;
    ChunkPtr pt = image.chunk(c);
    std::size_t n = std::min<std::uint64_t>(kChunk, length - c * kChunk);
    if (!std::equal(pt->begin(), pt->begin() + static_cast<std::ptrdiff_t>(n), base.begin() + c * kChunk))
      res.base_untouched = false;
  }
  return res;
}

}  // namespace cvault_test
