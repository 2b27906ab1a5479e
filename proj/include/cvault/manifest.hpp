#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cvault/bytes.hpp"
#include "cvault/crypto.hpp"

namespace cvault {

constexpr std::uint32_t kManifestVersion = 1;

struct ManifestHeader {
  std::uint64_t image_length = 0;
  std::uint32_t chunk_size = 0;
  Salt salt;
  std::array<std::uint8_t, 12> nonce{};
};

struct ChunkRecord {
  Digest ciphertext_hash{};
  bool is_zero = false;
};

// Per-chunk input to seal_manifest, in image offset order. `hash` and `key`
// are ignored for zero chunks.
struct ManifestChunk {
  Digest hash{};
  bool is_zero = false;
  ChunkKey key;
};

// Wire layout (little-endian):
//   "CMFT" u32 version u64 image_length u32 chunk_size
//   u16 salt_len salt[salt_len] nonce[12]
//   u32 record_count { hash[32] flags:u8 (bit0 = zero) } * record_count
//   u32 key_table_len key_table[key_table_len] tag[16]
// Everything up to the last record is GCM associated data.
struct SealedManifest {
  ManifestHeader header;
  std::vector<ChunkRecord> records;
  Bytes key_table_ciphertext;
  std::array<std::uint8_t, 16> tag{};

  Bytes serialize() const;
  static SealedManifest parse(ByteView data);

  // Serialized header plus chunk table: the authenticated-only region.
  Bytes associated_data() const;
  std::size_t serialized_size() const;
};

SealedManifest seal_manifest(std::span<const ManifestChunk> chunks, std::uint64_t image_length,
                             std::uint32_t chunk_size, const Salt& salt, const CustomerKey& customer,
                             const RandomSource& random = system_random());

struct OpenedManifest {
  ManifestHeader header;
  std::vector<ChunkRecord> records;
  std::vector<std::optional<ChunkKey>> keys;  // empty for zero chunks

  std::size_t chunk_count() const { return records.size(); }
};

// Throws IntegrityError when the tag does not verify (wrong key or any
// tampering).
OpenedManifest open_manifest(const SealedManifest& sealed, const CustomerKey& customer);
OpenedManifest open_manifest(ByteView serialized, const CustomerKey& customer);

// Names of the non-zero chunks in offset order. No key needed and no
// authentication performed.
std::vector<Digest> list_chunk_names(ByteView serialized);
std::vector<Digest> list_chunk_names(const SealedManifest& sealed);

}  // namespace cvault
