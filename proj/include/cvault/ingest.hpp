#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cvault/bytes.hpp"
#include "cvault/crypto.hpp"
#include "cvault/manifest.hpp"
#include "cvault/origin_store.hpp"

namespace cvault {

// Identity of a manifest in the store: SHA-256 over the customer key id and
// the manifest's authenticated region with the nonce zeroed, so re-uploading
// the same image under the same customer and salt is idempotent.
std::string manifest_id(const SealedManifest& sealed, const std::string& key_id);

struct UploadOptions {
  std::string root_id;
  std::size_t chunk_size = 524288;
  Salt salt;
  CustomerKey customer;
  RandomSource random = system_random();
};

struct UploadReport {
  std::string manifest_id;
  std::string root_id;
  std::uint64_t image_length = 0;
  std::uint64_t total_chunks = 0;
  std::uint64_t zero_chunks = 0;
  std::uint64_t distinct_chunks = 0;  // distinct non-zero chunk names
  std::uint64_t unique_chunks = 0;    // distinct names not present before this upload
  std::uint64_t manifest_bytes = 0;
  bool manifest_already_present = false;

  // unique / distinct; 0 for images with no non-zero chunks.
  double unique_fraction() const;
};

// Chunks, encrypts and stores `image` plus its sealed manifest in the given
// root.
UploadReport upload_image(OriginStore& store, ByteView image, const UploadOptions& options);

struct DedupStats {
  std::size_t uploads = 0;
  double fraction_zero_unique_uploads = 0.0;
  std::vector<double> unique_fractions;  // one per upload, in order
  // Among uploads with at least one unique chunk.
  double mean_nontrivial_fraction = 0.0;
  double median_nontrivial_fraction = 0.0;
  // (value, cumulative_fraction) over the non-trivial uploads.
  std::vector<std::pair<double, double>> ecdf;
};

// Replays uploads in order. Each element is the list of non-zero chunk
// names of one manifest.
DedupStats dedup_stats(std::span<const std::vector<Digest>> uploads_in_order);
DedupStats dedup_stats(std::span<const UploadReport> reports);

}  // namespace cvault
