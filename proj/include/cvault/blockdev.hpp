#pragma once

#include <cstdint>
#include <set>
#include <unordered_map>
#include <vector>

#include "cvault/bytes.hpp"
#include "cvault/manifest.hpp"
#include "cvault/tiered_cache.hpp"

namespace cvault {

// Immutable, chunked source of image bytes under a device view.
class BaseImage {
 public:
  virtual ~BaseImage() = default;
  virtual std::uint64_t length() const = 0;
  virtual std::uint32_t chunk_size() const = 0;
  virtual std::size_t chunk_count() const = 0;
  virtual bool is_zero_chunk(std::size_t index) const = 0;
  // Plaintext of a non-zero chunk, exactly chunk_size() bytes.
  virtual ChunkPtr chunk(std::size_t index) = 0;
};

// Base image backed by an opened manifest and the tiered fetch path.
class ManifestImage : public BaseImage {
 public:
  ManifestImage(OpenedManifest manifest, ChunkFetcher& fetcher);

  std::uint64_t length() const override { return manifest_.header.image_length; }
  std::uint32_t chunk_size() const override { return manifest_.header.chunk_size; }
  std::size_t chunk_count() const override { return manifest_.chunk_count(); }
  bool is_zero_chunk(std::size_t index) const override;
  ChunkPtr chunk(std::size_t index) override;

  const FetchResult& last_fetch() const { return last_; }
  const OpenedManifest& manifest() const { return manifest_; }

 private:
  OpenedManifest manifest_;
  ChunkFetcher& fetcher_;
  FetchResult last_;
};

// Base image over an in-memory flattened image.
class BufferImage : public BaseImage {
 public:
  BufferImage(Bytes image, std::uint32_t chunk_size);

  std::uint64_t length() const override { return length_; }
  std::uint32_t chunk_size() const override { return chunk_size_; }
  std::size_t chunk_count() const override { return chunks_.size(); }
  bool is_zero_chunk(std::size_t index) const override { return chunks_.at(index) == nullptr; }
  ChunkPtr chunk(std::size_t index) override;

 private:
  std::uint64_t length_;
  std::uint32_t chunk_size_;
  std::vector<ChunkPtr> chunks_;  // nullptr for zero chunks
};

// Page-granular writable layer: bit set exactly when an overlay page exists.
class OverlayState {
 public:
  OverlayState(std::uint64_t page_count, std::size_t page_size = kPageSize);

  std::size_t page_size() const { return page_size_; }
  std::uint64_t page_count() const { return page_count_; }
  bool dirty(std::uint64_t page) const;
  // nullptr when clean.
  const Bytes* page(std::uint64_t page) const;
  Bytes* mutable_page(std::uint64_t page);
  // `bytes` must be exactly page_size.
  void set_page(std::uint64_t page, Bytes bytes);
  std::size_t dirty_count() const { return pages_.size(); }
  // Checks bitmap/page agreement and page sizes.
  bool consistent() const;

 private:
  std::size_t page_size_;
  std::uint64_t page_count_;
  std::vector<std::uint64_t> bitmap_;
  std::unordered_map<std::uint64_t, Bytes> pages_;
};

// Copy-on-write block device over an immutable base image.
class DeviceView {
 public:
  explicit DeviceView(BaseImage& base, std::size_t page_size = kPageSize);

  std::uint64_t length() const { return base_.length(); }
  // Throws ValidationError when the range exceeds the device.
  Bytes read(std::uint64_t offset, std::uint64_t length);
  void read_into(std::uint64_t offset, MutableByteView out);
  void write(std::uint64_t offset, ByteView data);

  const OverlayState& overlay() const { return overlay_; }
  std::uint64_t base_fetches() const { return base_fetches_; }
  const std::set<std::size_t>& fetched_chunks() const { return fetched_chunks_; }
  const std::set<std::size_t>& touched_chunks() const { return touched_chunks_; }
  std::uint64_t rmw_count() const { return rmw_count_; }

 private:
  void check_range(std::uint64_t offset, std::uint64_t length) const;
  // Copies the base bytes of one page into `out` (page_size bytes, zero
  // padded past the device end).
  void base_page(std::uint64_t page, MutableByteView out, ChunkPtr& cached, std::size_t& cached_index);

  BaseImage& base_;
  OverlayState overlay_;
  std::uint64_t base_fetches_ = 0;
  std::uint64_t rmw_count_ = 0;
  std::set<std::size_t> fetched_chunks_;
  std::set<std::size_t> touched_chunks_;
};

}  // namespace cvault
