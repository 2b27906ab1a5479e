#include "cvault/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <fstream>
#include <memory>
#include <sstream>

#include "cvault/errors.hpp"

namespace cvault {

namespace {

constexpr std::string_view kKeyDomain = "cekv1";

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

// Explicitly fetched algorithms skip the per-call provider lookup that the
// EVP_sha256() / EVP_aes_256_ctr() shorthands incur.
const EVP_MD* sha256_md() {
  static EVP_MD* md = EVP_MD_fetch(nullptr, "SHA256", nullptr);
  if (!md) throw Error("SHA-256 unavailable");
  return md;
}

const EVP_CIPHER* aes256_ctr_cipher() {
  static EVP_CIPHER* cipher = EVP_CIPHER_fetch(nullptr, "AES-256-CTR", nullptr);
  if (!cipher) throw Error("AES-256-CTR unavailable");
  return cipher;
}

}  // namespace

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (!ctx_ || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), sha256_md(), nullptr) != 1) {
    throw Error("SHA-256 init failed");
  }
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

Sha256& Sha256::update(ByteView data) {
  if (!data.empty()) EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data.data(), data.size());
  return *this;
}

Digest Sha256::finish() {
  Digest out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), out.data(), &len);
  return out;
}

Digest sha256(ByteView data) {
  thread_local MdCtx ctx(EVP_MD_CTX_new());
  Digest out{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), sha256_md(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1) {
    throw Error("SHA-256 failed");
  }
  return out;
}

std::string chunk_name(const Digest& ciphertext_hash) { return to_hex(ciphertext_hash); }

Digest digest_from_name(std::string_view name) { return array_from_hex<32>(name); }

Salt::Salt(Bytes bytes) : bytes_(std::move(bytes)) {
  if (bytes_.size() > kMaxLength) {
    throw ValidationError("salt is " + std::to_string(bytes_.size()) + " bytes; at most 64 allowed");
  }
}

ChunkKey derive_key(ByteView plaintext, const Salt& salt) {
  std::uint8_t len[2] = {static_cast<std::uint8_t>(salt.size() & 0xff),
                         static_cast<std::uint8_t>(salt.size() >> 8)};
  Sha256 h;
  h.update(as_bytes(kKeyDomain)).update(len).update(salt.bytes()).update(plaintext);
  return ChunkKey{h.finish()};
}

void aes256_ctr(ByteView input, const ChunkKey& key, MutableByteView output) {
  if (output.size() != input.size()) throw ValidationError("AES-CTR output size mismatch");
  static const std::uint8_t kZeroIv[16] = {};
  thread_local CipherCtx ctx(EVP_CIPHER_CTX_new());
  int n = 0;
  if (!ctx || EVP_EncryptInit_ex(ctx.get(), aes256_ctr_cipher(), nullptr, key.bytes.data(), kZeroIv) != 1) {
    throw Error("AES-CTR init failed");
  }
  // EVP takes int lengths; chunks are far below 2 GiB but loop anyway.
  std::size_t done = 0;
  while (done < input.size()) {
    int step = static_cast<int>(std::min<std::size_t>(input.size() - done, 1u << 30));
    if (EVP_EncryptUpdate(ctx.get(), output.data() + done, &n, input.data() + done, step) != 1) {
      throw Error("AES-CTR failed");
    }
    done += static_cast<std::size_t>(step);
  }
}

EncryptedChunk encrypt_chunk(ByteView plaintext, const ChunkKey& key, std::size_t expected_size) {
  if (expected_size != 0 && plaintext.size() != expected_size) {
    throw ValidationError("chunk plaintext is " + std::to_string(plaintext.size()) + " bytes, expected " +
                          std::to_string(expected_size));
  }
  if (plaintext.empty()) throw ValidationError("empty chunk plaintext");
  EncryptedChunk out;
  out.ciphertext.resize(plaintext.size());
  aes256_ctr(plaintext, key, out.ciphertext);
  out.hash = sha256(out.ciphertext);
  return out;
}

Bytes decrypt_chunk(ByteView ciphertext, const ChunkKey& key, const Digest& expected_hash, long long chunk_index) {
  if (sha256(ciphertext) != expected_hash) {
    std::string where = chunk_index >= 0 ? " for chunk " + std::to_string(chunk_index) : std::string();
    throw IntegrityError("ciphertext hash mismatch" + where, chunk_index);
  }
  return decrypt_verified_chunk(ciphertext, key);
}

Bytes decrypt_verified_chunk(ByteView ciphertext, const ChunkKey& key) {
  Bytes plain(ciphertext.size());
  aes256_ctr(ciphertext, key, plain);
  return plain;
}

KeyFile KeyFile::parse(std::string_view text) {
  KeyFile file;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string id, hex;
    if (!(fields >> id)) continue;
    if (!(fields >> hex) || hex.size() != 64) {
      throw ValidationError("key file line " + std::to_string(lineno) + ": expected '<key_id> <64 hex chars>'");
    }
    file.add(CustomerKey{id, array_from_hex<32>(hex)});
  }
  return file;
}

KeyFile KeyFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open key file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void KeyFile::add(CustomerKey key) { keys_[key.key_id] = std::move(key); }

void KeyFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  out << "# customer keys: <key_id> <hex>\n";
  for (const auto& [id, key] : keys_) out << id << ' ' << to_hex(key.key) << '\n';
  if (!out) throw Error("cannot write key file " + path.string());
}

CustomerKey KeyFile::get(const std::string& key_id) const {
  auto it = keys_.find(key_id);
  if (it == keys_.end()) throw NotFoundError("unknown customer key id '" + key_id + "'");
  return it->second;
}

RandomSource system_random() {
  return [](MutableByteView out) {
    if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) throw Error("RAND_bytes failed");
  };
}

}  // namespace cvault
