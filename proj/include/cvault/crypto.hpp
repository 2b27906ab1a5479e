#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cvault/bytes.hpp"

namespace cvault {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(ByteView data);

// Digests are uniformly distributed, so their leading bytes hash well.
struct DigestHash {
  std::size_t operator()(const Digest& d) const noexcept {
    std::size_t h;
    std::memcpy(&h, d.data(), sizeof h);
    return h;
  }
};

// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(ByteView data);
  Digest finish();

 private:
  void* ctx_;
};

// Lowercase hex of the digest; this is the chunk's storage name.
std::string chunk_name(const Digest& ciphertext_hash);
Digest digest_from_name(std::string_view name);

// Non-secret key-derivation input that partitions deduplication. Recorded
// verbatim in manifests.
class Salt {
 public:
  static constexpr std::size_t kMaxLength = 64;

  Salt() = default;
  explicit Salt(Bytes bytes);
  static Salt from_string(std::string_view s) { return Salt(to_bytes(s)); }

  const Bytes& bytes() const { return bytes_; }
  std::size_t size() const { return bytes_.size(); }
  bool operator==(const Salt&) const = default;

 private:
  Bytes bytes_;
};

struct ChunkKey {
  std::array<std::uint8_t, 32> bytes{};
  bool operator==(const ChunkKey&) const = default;
};

// SHA-256("cekv1" || u16le(len(salt)) || salt || plaintext).
ChunkKey derive_key(ByteView plaintext, const Salt& salt);

struct EncryptedChunk {
  Bytes ciphertext;
  Digest hash{};  // SHA-256 of ciphertext
};

// AES-256-CTR with an all-zero IV. When `expected_size` is nonzero the
// plaintext must have exactly that length.
EncryptedChunk encrypt_chunk(ByteView plaintext, const ChunkKey& key, std::size_t expected_size = 0);

// Checks SHA-256(ciphertext) against `expected_hash` before decrypting.
// Throws IntegrityError carrying `chunk_index` on mismatch.
Bytes decrypt_chunk(ByteView ciphertext, const ChunkKey& key, const Digest& expected_hash,
                    long long chunk_index = -1);

// For callers that have already compared SHA-256(ciphertext) with the
// expected name.
Bytes decrypt_verified_chunk(ByteView ciphertext, const ChunkKey& key);

// Raw AES-256-CTR keystream application (zero IV), shared by encrypt and
// decrypt.
void aes256_ctr(ByteView input, const ChunkKey& key, MutableByteView output);

struct CustomerKey {
  std::string key_id;
  std::array<std::uint8_t, 32> key{};
};

class KeyProvider {
 public:
  virtual ~KeyProvider() = default;
  // Throws NotFoundError for unknown ids.
  virtual CustomerKey get(const std::string& key_id) const = 0;
};

// Test-fixture key store: one "<key_id> <64 hex chars>" per line, '#'
// comments allowed.
class KeyFile : public KeyProvider {
 public:
  static KeyFile load(const std::filesystem::path& path);
  static KeyFile parse(std::string_view text);

  void add(CustomerKey key);
  void save(const std::filesystem::path& path) const;
  CustomerKey get(const std::string& key_id) const override;
  bool contains(const std::string& key_id) const { return keys_.count(key_id) != 0; }

 private:
  std::map<std::string, CustomerKey> keys_;
};

// Fills the buffer with randomness; injectable so tests can pin nonces.
using RandomSource = std::function<void(MutableByteView)>;
RandomSource system_random();

}  // namespace cvault
