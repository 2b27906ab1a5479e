#include "cvault/ingest.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_set>

#include "cvault/flattener.hpp"
#include "cvault/stats.hpp"

namespace cvault {

std::string manifest_id(const SealedManifest& sealed, const std::string& key_id) {
  SealedManifest copy;
  copy.header = sealed.header;
  copy.header.nonce = {};
  copy.records = sealed.records;
  ByteWriter w;
  w.raw(as_bytes("cmid1"));
  w.u16(static_cast<std::uint16_t>(key_id.size()));
  w.raw(as_bytes(key_id));
  w.raw(copy.associated_data());
  return to_hex(sha256(w.buffer()));
}

double UploadReport::unique_fraction() const {
  return distinct_chunks == 0 ? 0.0 : static_cast<double>(unique_chunks) / static_cast<double>(distinct_chunks);
}

UploadReport upload_image(OriginStore& store, ByteView image, const UploadOptions& options) {
  validate_chunk_size(options.chunk_size);
  UploadReport report;
  report.root_id = options.root_id;
  report.image_length = image.size();

  std::vector<ManifestChunk> chunks;
  std::unordered_set<Digest, DigestHash> seen;
  for_each_chunk(image, options.chunk_size, [&](std::uint64_t, bool is_zero, ByteView plain) {
    ManifestChunk mc;
    mc.is_zero = is_zero;
    ++report.total_chunks;
    if (is_zero) {
      ++report.zero_chunks;
      chunks.push_back(mc);
      return;
    }
    mc.key = derive_key(plain, options.salt);
    EncryptedChunk enc = encrypt_chunk(plain, mc.key, options.chunk_size);
    mc.hash = enc.hash;
    PutResult put = store.put_if_absent(options.root_id, ObjectKind::chunk, chunk_name(enc.hash), enc.ciphertext);
    if (seen.insert(enc.hash).second) {
      ++report.distinct_chunks;
      if (put == PutResult::stored) ++report.unique_chunks;
    }
    chunks.push_back(mc);
  });

  SealedManifest sealed = seal_manifest(chunks, image.size(), static_cast<std::uint32_t>(options.chunk_size),
                                        options.salt, options.customer, options.random);
  report.manifest_id = manifest_id(sealed, options.customer.key_id);
  Bytes bytes = sealed.serialize();
  report.manifest_bytes = bytes.size();
  // A re-upload keeps the first sealed copy; both open to the same keys.
  report.manifest_already_present = store.contains(options.root_id, ObjectKind::manifest, report.manifest_id);
  if (!report.manifest_already_present) {
    store.put_if_absent(options.root_id, ObjectKind::manifest, report.manifest_id, bytes);
  }
  return report;
}

namespace {

DedupStats summarize(std::vector<double> fractions, std::size_t zero_unique) {
  DedupStats stats;
  stats.uploads = fractions.size();
  stats.unique_fractions = fractions;
  if (!fractions.empty()) {
    stats.fraction_zero_unique_uploads = static_cast<double>(zero_unique) / static_cast<double>(fractions.size());
  }
  std::vector<double> nontrivial;
  for (double f : fractions)
    if (f > 0.0) nontrivial.push_back(f);
  stats.mean_nontrivial_fraction = mean(nontrivial);
  stats.median_nontrivial_fraction = percentile(nontrivial, 0.5);
  stats.ecdf = empirical_cdf(nontrivial);
  return stats;
}

}  // namespace

DedupStats dedup_stats(std::span<const std::vector<Digest>> uploads_in_order) {
  std::unordered_set<Digest, DigestHash> present;
  std::vector<double> fractions;
  std::size_t zero_unique = 0;
  for (const auto& names : uploads_in_order) {
    std::unordered_set<Digest, DigestHash> distinct(names.begin(), names.end());
    std::size_t unique = 0;
    for (const Digest& d : distinct)
      if (!present.count(d)) ++unique;
    present.insert(distinct.begin(), distinct.end());
    if (unique == 0) ++zero_unique;
    fractions.push_back(distinct.empty() ? 0.0 : static_cast<double>(unique) / static_cast<double>(distinct.size()));
  }
  return summarize(std::move(fractions), zero_unique);
}

DedupStats dedup_stats(std::span<const UploadReport> reports) {
  std::vector<double> fractions;
  std::size_t zero_unique = 0;
  for (const UploadReport& r : reports) {
    if (r.unique_chunks == 0) ++zero_unique;
    fractions.push_back(r.unique_fraction());
  }
  return summarize(std::move(fractions), zero_unique);
}

}  // namespace cvault
