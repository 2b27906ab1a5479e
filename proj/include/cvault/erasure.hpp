#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cvault/bytes.hpp"

namespace cvault {

constexpr std::uint32_t kDefaultDataStripes = 4;

// target[i] ^= source[i] for every i. Throws ValidationError on length
// mismatch.
void parity(MutableByteView target, ByteView source);

struct Stripe {
  std::uint32_t index = 0;  // 0..k-1 data, k parity
  Bytes bytes;
};

struct StripeSet {
  std::uint32_t k = kDefaultDataStripes;
  std::vector<Stripe> stripes;  // k data stripes then the parity stripe

  std::size_t stripe_size() const { return stripes.empty() ? 0 : stripes.front().bytes.size(); }
  std::size_t total_bytes() const;
};

void validate_stripe_count(std::uint32_t k);

// Splits `chunk` into k contiguous data stripes plus one XOR parity stripe.
StripeSet encode(ByteView chunk, std::uint32_t k = kDefaultDataStripes);

// Rebuilds the chunk from any k distinct stripes. Extra stripes beyond the
// first k data-or-parity stripes are ignored except by verify_parity.
// Throws UnavailableError with fewer than k distinct indices and
// ValidationError on inconsistent lengths or bad indices.
Bytes reconstruct(std::span<const Stripe> stripes, std::uint32_t k = kDefaultDataStripes);

// True when all k+1 stripes are present and parity matches the data.
bool verify_parity(std::span<const Stripe> stripes, std::uint32_t k = kDefaultDataStripes);

}  // namespace cvault
