#include "cvault/manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <memory>

#include "cvault/errors.hpp"

namespace cvault {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'F', 'T'};
constexpr std::size_t kRecordSize = 33;
constexpr std::uint8_t kZeroFlag = 0x01;

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

void write_prefix(ByteWriter& w, const ManifestHeader& h, const std::vector<ChunkRecord>& records) {
  w.raw(as_bytes(std::string_view(kMagic, 4)));
  w.u32(kManifestVersion);
  w.u64(h.image_length);
  w.u32(h.chunk_size);
  w.u16(static_cast<std::uint16_t>(h.salt.size()));
  w.raw(h.salt.bytes());
  w.raw(h.nonce);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const ChunkRecord& r : records) {
    w.raw(r.ciphertext_hash);
    w.u8(r.is_zero ? kZeroFlag : 0);
  }
}

std::uint64_t expected_records(std::uint64_t image_length, std::uint32_t chunk_size) {
  return (image_length + chunk_size - 1) / chunk_size;
}

// Parses the authenticated region; leaves the reader positioned at the key
// table length.
void read_prefix(ByteReader& r, ManifestHeader& h, std::vector<ChunkRecord>& records) {
  ByteView magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw ValidationError("manifest: bad magic");
  if (r.u32() != kManifestVersion) throw ValidationError("manifest: unsupported version");
  h.image_length = r.u64();
  h.chunk_size = r.u32();
  std::uint16_t salt_len = r.u16();
  ByteView salt = r.raw(salt_len);
  h.salt = Salt(Bytes(salt.begin(), salt.end()));
  ByteView nonce = r.raw(12);
  std::copy(nonce.begin(), nonce.end(), h.nonce.begin());
  std::uint32_t count = r.u32();
  if (h.chunk_size == 0 || count != expected_records(h.image_length, h.chunk_size)) {
    throw ValidationError("manifest: record count does not match image length");
  }
  if (static_cast<std::uint64_t>(count) * kRecordSize > r.remaining()) {
    throw ValidationError("manifest: record table truncated");
  }
  records.resize(count);
  for (ChunkRecord& rec : records) {
    ByteView hash = r.raw(32);
    std::copy(hash.begin(), hash.end(), rec.ciphertext_hash.begin());
    std::uint8_t flags = r.u8();
    if (flags & ~kZeroFlag) throw ValidationError("manifest: unknown record flags");
    rec.is_zero = (flags & kZeroFlag) != 0;
  }
}

}  // namespace

Bytes SealedManifest::associated_data() const {
  ByteWriter w;
  write_prefix(w, header, records);
  return w.take();
}

Bytes SealedManifest::serialize() const {
  ByteWriter w;
  write_prefix(w, header, records);
  w.u32(static_cast<std::uint32_t>(key_table_ciphertext.size()));
  w.raw(key_table_ciphertext);
  w.raw(tag);
  return w.take();
}

std::size_t SealedManifest::serialized_size() const {
  return 4 + 4 + 8 + 4 + 2 + header.salt.size() + 12 + 4 + records.size() * kRecordSize + 4 +
         key_table_ciphertext.size() + 16;
}

SealedManifest SealedManifest::parse(ByteView data) {
  SealedManifest m;
  ByteReader r(data, "manifest");
  read_prefix(r, m.header, m.records);
  std::uint32_t kt_len = r.u32();
  ByteView kt = r.raw(kt_len);
  m.key_table_ciphertext.assign(kt.begin(), kt.end());
  ByteView tag = r.raw(16);
  std::copy(tag.begin(), tag.end(), m.tag.begin());
  if (!r.done()) throw ValidationError("manifest: trailing bytes");
  return m;
}

SealedManifest seal_manifest(std::span<const ManifestChunk> chunks, std::uint64_t image_length,
                             std::uint32_t chunk_size, const Salt& salt, const CustomerKey& customer,
                             const RandomSource& random) {
  if (chunk_size == 0 || chunks.size() != expected_records(image_length, chunk_size)) {
    throw ValidationError("manifest: " + std::to_string(chunks.size()) + " chunks for an image of " +
                          std::to_string(image_length) + " bytes");
  }
  SealedManifest m;
  m.header.image_length = image_length;
  m.header.chunk_size = chunk_size;
  m.header.salt = salt;
  random(m.header.nonce);

  Bytes key_table;
  m.records.reserve(chunks.size());
  for (const ManifestChunk& c : chunks) {
    m.records.push_back(ChunkRecord{c.is_zero ? Digest{} : c.hash, c.is_zero});
    if (!c.is_zero) key_table.insert(key_table.end(), c.key.bytes.begin(), c.key.bytes.end());
  }

  Bytes aad = m.associated_data();
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  int n = 0;
  m.key_table_ciphertext.resize(key_table.size());
  bool ok = ctx && EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, 12, nullptr) == 1 &&
            EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, customer.key.data(), m.header.nonce.data()) == 1 &&
            EVP_EncryptUpdate(ctx.get(), nullptr, &n, aad.data(), static_cast<int>(aad.size())) == 1 &&
            (key_table.empty() || EVP_EncryptUpdate(ctx.get(), m.key_table_ciphertext.data(), &n, key_table.data(),
                                                    static_cast<int>(key_table.size())) == 1) &&
            EVP_EncryptFinal_ex(ctx.get(), nullptr, &n) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, 16, m.tag.data()) == 1;
  if (!ok) throw Error("AES-GCM seal failed");
  return m;
}

OpenedManifest open_manifest(const SealedManifest& sealed, const CustomerKey& customer) {
  std::size_t nonzero = static_cast<std::size_t>(
      std::count_if(sealed.records.begin(), sealed.records.end(), [](const ChunkRecord& r) { return !r.is_zero; }));
  Bytes aad = sealed.associated_data();
  Bytes key_table(sealed.key_table_ciphertext.size());
  std::array<std::uint8_t, 16> tag = sealed.tag;

  CipherCtx ctx(EVP_CIPHER_CTX_new());
  int n = 0;
  bool ok = ctx && EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, 12, nullptr) == 1 &&
            EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, customer.key.data(), sealed.header.nonce.data()) == 1 &&
            EVP_DecryptUpdate(ctx.get(), nullptr, &n, aad.data(), static_cast<int>(aad.size())) == 1 &&
            (key_table.empty() ||
             EVP_DecryptUpdate(ctx.get(), key_table.data(), &n, sealed.key_table_ciphertext.data(),
                               static_cast<int>(key_table.size())) == 1) &&
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, 16, tag.data()) == 1 &&
            EVP_DecryptFinal_ex(ctx.get(), nullptr, &n) == 1;
  if (!ok) throw IntegrityError("manifest authentication failed");
  if (key_table.size() != nonzero * 32) throw IntegrityError("manifest key table size mismatch");

  OpenedManifest out;
  out.header = sealed.header;
  out.records = sealed.records;
  out.keys.resize(out.records.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    if (out.records[i].is_zero) continue;
    ChunkKey key;
    std::copy_n(key_table.begin() + static_cast<std::ptrdiff_t>(32 * k), 32, key.bytes.begin());
    out.keys[i] = key;
    ++k;
  }
  return out;
}

OpenedManifest open_manifest(ByteView serialized, const CustomerKey& customer) {
  return open_manifest(SealedManifest::parse(serialized), customer);
}

std::vector<Digest> list_chunk_names(const SealedManifest& sealed) {
  std::vector<Digest> names;
  for (const ChunkRecord& r : sealed.records)
    if (!r.is_zero) names.push_back(r.ciphertext_hash);
  return names;
}

std::vector<Digest> list_chunk_names(ByteView serialized) {
  // Only the plaintext region is parsed; the key table is never touched.
  ManifestHeader header;
  std::vector<ChunkRecord> records;
  ByteReader r(serialized, "manifest");
  read_prefix(r, header, records);
  std::vector<Digest> names;
  for (const ChunkRecord& rec : records)
    if (!rec.is_zero) names.push_back(rec.ciphertext_hash);
  return names;
}

}  // namespace cvault
