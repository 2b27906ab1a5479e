#include "cvault/blockdev.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#include "cvault/errors.hpp"
#include "cvault/flattener.hpp"

namespace cvault {

ManifestImage::ManifestImage(OpenedManifest manifest, ChunkFetcher& fetcher)
    : manifest_(std::move(manifest)), fetcher_(fetcher) {}

bool ManifestImage::is_zero_chunk(std::size_t index) const { return manifest_.records.at(index).is_zero; }

ChunkPtr ManifestImage::chunk(std::size_t index) {
  const ChunkRecord& rec = manifest_.records.at(index);
  if (rec.is_zero) throw ValidationError("chunk " + std::to_string(index) + " is a zero chunk");
  last_ = fetcher_.fetch(rec.ciphertext_hash, *manifest_.keys.at(index), static_cast<long long>(index));
  return last_.plaintext;
}

BufferImage::BufferImage(Bytes image, std::uint32_t chunk_size) : length_(image.size()), chunk_size_(chunk_size) {
  validate_chunk_size(chunk_size);
  for (std::uint64_t off = 0; off < length_; off += chunk_size) {
    std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(chunk_size, length_ - off));
    ByteView slice(image.data() + off, n);
    if (all_zero(slice)) {
      chunks_.push_back(nullptr);
      continue;
    }
    auto chunk = std::make_shared<Bytes>(chunk_size, 0);
    std::copy(slice.begin(), slice.end(), chunk->begin());
    chunks_.push_back(std::move(chunk));
  }
}

ChunkPtr BufferImage::chunk(std::size_t index) {
  ChunkPtr c = chunks_.at(index);
  if (!c) throw ValidationError("chunk " + std::to_string(index) + " is a zero chunk");
  return c;
}

OverlayState::OverlayState(std::uint64_t page_count, std::size_t page_size)
    : page_size_(page_size), page_count_(page_count), bitmap_((page_count + 63) / 64, 0) {
  if (page_size == 0) throw ValidationError("page size must be positive");
}

bool OverlayState::dirty(std::uint64_t page) const {
  return page < page_count_ && (bitmap_[page / 64] >> (page % 64) & 1u);
}

const Bytes* OverlayState::page(std::uint64_t page) const {
  if (!dirty(page)) return nullptr;
  return &pages_.at(page);
}

Bytes* OverlayState::mutable_page(std::uint64_t page) {
  if (!dirty(page)) return nullptr;
  return &pages_.at(page);
}

void OverlayState::set_page(std::uint64_t page, Bytes bytes) {
  if (page >= page_count_) throw ValidationError("overlay page " + std::to_string(page) + " out of range");
  if (bytes.size() != page_size_) throw ValidationError("overlay page must be exactly one page");
  pages_[page] = std::move(bytes);
  bitmap_[page / 64] |= std::uint64_t{1} << (page % 64);
}

bool OverlayState::consistent() const {
  std::size_t bits = 0;
  for (std::uint64_t w : bitmap_) bits += static_cast<std::size_t>(__builtin_popcountll(w));
  if (bits != pages_.size()) return false;
  for (const auto& [index, bytes] : pages_) {
    if (!dirty(index) || bytes.size() != page_size_) return false;
  }
  return true;
}

namespace {

std::uint64_t page_count_for(const BaseImage& base, std::size_t page_size) {
  if (page_size == 0 || base.chunk_size() % page_size != 0)
    throw ValidationError("chunk size must be a multiple of the page size");
  return (base.length() + page_size - 1) / page_size;
}

}  // namespace

DeviceView::DeviceView(BaseImage& base, std::size_t page_size)
    : base_(base), overlay_(page_count_for(base, page_size), page_size) {}

void DeviceView::check_range(std::uint64_t offset, std::uint64_t length) const {
  if (offset > base_.length() || length > base_.length() - offset)
    throw ValidationError("range [" + std::to_string(offset) + ", +" + std::to_string(length) +
                          ") exceeds device length " + std::to_string(base_.length()));
}

void DeviceView::base_page(std::uint64_t page, MutableByteView out, ChunkPtr& cached, std::size_t& cached_index) {
  const std::size_t ps = overlay_.page_size();
  const std::uint64_t start = page * ps;
  const std::size_t index = static_cast<std::size_t>(start / base_.chunk_size());
  touched_chunks_.insert(index);
  if (base_.is_zero_chunk(index)) {
    std::fill(out.begin(), out.end(), 0);
    return;
  }
  if (!cached || cached_index != index) {
    cached = base_.chunk(index);
    cached_index = index;
    ++base_fetches_;
    fetched_chunks_.insert(index);
  }
  const std::size_t within = static_cast<std::size_t>(start % base_.chunk_size());
  std::copy_n(cached->data() + within, ps, out.data());
}

void DeviceView::read_into(std::uint64_t offset, MutableByteView out) {
  check_range(offset, out.size());
  const std::size_t ps = overlay_.page_size();
  ChunkPtr cached;
  std::size_t cached_index = std::numeric_limits<std::size_t>::max();
  Bytes scratch(ps);
  std::size_t done = 0;
  while (done < out.size()) {
    const std::uint64_t pos = offset + done;
    const std::uint64_t page = pos / ps;
    const std::size_t within = static_cast<std::size_t>(pos % ps);
    const std::size_t n = std::min(ps - within, out.size() - done);
    const std::uint8_t* src;
    if (const Bytes* p = overlay_.page(page)) {
      touched_chunks_.insert(static_cast<std::size_t>(page * ps / base_.chunk_size()));
      src = p->data();
    } else {
      base_page(page, scratch, cached, cached_index);
      src = scratch.data();
    }
    std::memcpy(out.data() + done, src + within, n);
    done += n;
  }
}

Bytes DeviceView::read(std::uint64_t offset, std::uint64_t length) {
  check_range(offset, length);
  Bytes out(static_cast<std::size_t>(length));
  read_into(offset, out);
  return out;
}

void DeviceView::write(std::uint64_t offset, ByteView data) {
  check_range(offset, data.size());
  const std::size_t ps = overlay_.page_size();
  ChunkPtr cached;
  std::size_t cached_index = std::numeric_limits<std::size_t>::max();
  std::size_t done = 0;
  while (done < data.size()) {
    const std::uint64_t pos = offset + done;
    const std::uint64_t page = pos / ps;
    const std::size_t within = static_cast<std::size_t>(pos % ps);
    const std::size_t n = std::min(ps - within, data.size() - done);
    touched_chunks_.insert(static_cast<std::size_t>(page * ps / base_.chunk_size()));
    if (Bytes* p = overlay_.mutable_page(page)) {
      std::memcpy(p->data() + within, data.data() + done, n);
    } else if (n == ps) {
      overlay_.set_page(page, Bytes(data.begin() + done, data.begin() + done + n));
    } else {
      Bytes fresh(ps);
      base_page(page, fresh, cached, cached_index);
      ++rmw_count_;
      std::memcpy(fresh.data() + within, data.data() + done, n);
      overlay_.set_page(page, std::move(fresh));
    }
    done += n;
  }
}

}  // namespace cvault
