#include "cvault/erasure.hpp"

#include <algorithm>
#include <cstring>

#include "cvault/errors.hpp"

namespace cvault {

void parity(MutableByteView target, ByteView source) {
  if (target.size() != source.size()) {
    throw ValidationError("parity: length mismatch (" + std::to_string(target.size()) + " vs " +
                          std::to_string(source.size()) + ")");
  }
  const std::size_t len = target.size();
  std::uint8_t* t = target.data();
  const std::uint8_t* s = source.data();
  std::size_t i = 0;
  // 64 bytes per iteration; the compiler vectorizes the inner word loop.
  for (; i + 64 <= len; i += 64) {
    std::uint64_t tw[8], sw[8];
    std::memcpy(tw, t + i, 64);
    std::memcpy(sw, s + i, 64);
    for (int w = 0; w < 8; ++w) tw[w] ^= sw[w];
    std::memcpy(t + i, tw, 64);
  }
  for (; i < len; ++i) t[i] ^= s[i];
}

std::size_t StripeSet::total_bytes() const {
  std::size_t n = 0;
  for (const Stripe& s : stripes) n += s.bytes.size();
  return n;
}

void validate_stripe_count(std::uint32_t k) {
  if (k < 2 || k > 16) throw ValidationError("data stripe count must be in 2..16, got " + std::to_string(k));
}

StripeSet encode(ByteView chunk, std::uint32_t k) {
  validate_stripe_count(k);
  if (chunk.empty() || chunk.size() % k != 0) {
    throw ValidationError("chunk of " + std::to_string(chunk.size()) + " bytes does not split into " +
                          std::to_string(k) + " stripes");
  }
  const std::size_t size = chunk.size() / k;
  StripeSet set;
  set.k = k;
  set.stripes.reserve(k + 1);
  Stripe par{k, Bytes(size, 0)};
  for (std::uint32_t i = 0; i < k; ++i) {
    ByteView piece = chunk.subspan(i * size, size);
    set.stripes.push_back(Stripe{i, Bytes(piece.begin(), piece.end())});
    parity(par.bytes, piece);
  }
  set.stripes.push_back(std::move(par));
  return set;
}

Bytes reconstruct(std::span<const Stripe> stripes, std::uint32_t k) {
  validate_stripe_count(k);
  std::vector<const Stripe*> by_index(k + 1, nullptr);
  std::size_t size = 0;
  std::uint32_t distinct = 0;
  for (const Stripe& s : stripes) {
    if (s.index > k) throw ValidationError("stripe index " + std::to_string(s.index) + " out of range");
    if (distinct == 0 && size == 0) size = s.bytes.size();
    if (s.bytes.size() != size || size == 0) throw ValidationError("inconsistent stripe lengths");
    if (!by_index[s.index]) {
      by_index[s.index] = &s;
      ++distinct;
    }
  }
  if (distinct < k) {
    throw UnavailableError("insufficient stripes: have " + std::to_string(distinct) + ", need " + std::to_string(k));
  }

  Bytes out(size * k);
  std::int64_t missing = -1;
  for (std::uint32_t i = 0; i < k; ++i) {
    if (by_index[i]) {
      std::copy(by_index[i]->bytes.begin(), by_index[i]->bytes.end(), out.begin() + static_cast<std::ptrdiff_t>(i * size));
    } else {
      missing = i;
    }
  }
  if (missing >= 0) {
    MutableByteView hole(out.data() + static_cast<std::size_t>(missing) * size, size);
    std::copy(by_index[k]->bytes.begin(), by_index[k]->bytes.end(), hole.begin());
    for (std::uint32_t i = 0; i < k; ++i)
      if (static_cast<std::int64_t>(i) != missing) parity(hole, by_index[i]->bytes);
  }
  return out;
}

bool verify_parity(std::span<const Stripe> stripes, std::uint32_t k) {
  std::vector<const Stripe*> by_index(k + 1, nullptr);
  for (const Stripe& s : stripes)
    if (s.index <= k) by_index[s.index] = &s;
  if (std::any_of(by_index.begin(), by_index.end(), [](const Stripe* s) { return s == nullptr; })) return false;
  Bytes acc = by_index[k]->bytes;
  for (std::uint32_t i = 0; i < k; ++i) {
    if (by_index[i]->bytes.size() != acc.size()) return false;
    parity(acc, by_index[i]->bytes);
  }
  return all_zero(acc);
}

}  // namespace cvault
