#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cvault/bytes.hpp"

namespace cvault {

enum class EntryKind : std::uint8_t { file = 0, dir = 1, symlink = 2, whiteout = 3 };

std::string_view to_string(EntryKind kind);

// One entry of a container layer. For symlinks `content` holds the target.
// A whiteout with `opaque` set clears the children of `path` but keeps the
// directory itself (OCI ".wh..wh..opq").
struct LayerEntry {
  std::string path;
  EntryKind kind = EntryKind::file;
  std::uint16_t mode = 0644;
  Bytes content;
  bool opaque = false;
};

struct LayerArchive {
  std::vector<LayerEntry> entries;
};

struct TreeNode {
  EntryKind kind = EntryKind::file;
  std::uint16_t mode = 0644;
  Bytes content;

  bool operator==(const TreeNode&) const = default;
};

// Merged file tree. Paths are stored normalized and relative ("usr/bin/sh"),
// and iteration is lexicographic by path.
class FileTree {
 public:
  using Map = std::map<std::string, TreeNode>;

  void insert(const std::string& path, TreeNode node);
  // Removes `path` and everything below it.
  void erase_subtree(const std::string& path);
  // Removes everything strictly below `path`.
  void erase_children(const std::string& path);

  const TreeNode* find(const std::string& path) const;
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const Map& nodes() const { return nodes_; }

  bool operator==(const FileTree&) const = default;

 private:
  Map nodes_;
};

// Returns the normalized relative form of `path`, or an error description.
// Leading "/", "./" and repeated separators are dropped; ".." and invalid
// UTF-8 are rejected.
std::optional<std::string> normalize_path(std::string_view path, std::string* reason = nullptr);

// Applies layers in order with OCI overlay semantics. Throws ValidationError
// naming the layer index and offending path.
FileTree apply_layers(const std::vector<LayerArchive>& layers);

constexpr std::uint32_t kImageFormatVersion = 1;
constexpr std::size_t kImageHeaderSize = 16;

struct FlatImage {
  Bytes bytes;
  std::uint32_t version = kImageFormatVersion;
  std::uint64_t entry_count = 0;

  std::uint64_t length() const { return bytes.size(); }
};

// Layout: "FIMG", u32 version, u64 entry count, directory table in path
// order, zero padding to a page, then file contents in path order with each
// file starting on a page boundary. Timestamps are always written as 0.
FlatImage serialize_image(const FileTree& tree);

// Inverse of serialize_image; validates the layout.
FileTree parse_image(ByteView image);

void write_image_file(const std::filesystem::path& path, const FlatImage& image);
FlatImage read_image_file(const std::filesystem::path& path);

constexpr std::size_t kDefaultChunkSize = 524288;

struct PlainChunk {
  std::uint64_t index = 0;
  bool is_zero = false;
  std::optional<Bytes> plaintext;  // absent iff is_zero
};

struct PlainChunkList {
  std::size_t chunk_size = kDefaultChunkSize;
  std::uint64_t image_length = 0;
  std::vector<PlainChunk> chunks;

  std::size_t stored_plaintexts() const;
};

// Throws ValidationError unless chunk_size is a positive multiple of 4096.
void validate_chunk_size(std::size_t chunk_size);

PlainChunkList chunk_image(const FlatImage& image, std::size_t chunk_size = kDefaultChunkSize);

// Streams chunks of `image` without retaining them. The view handed to
// `visit` is only valid during the call; it is empty for zero chunks.
void for_each_chunk(ByteView image, std::size_t chunk_size,
                    const std::function<void(std::uint64_t index, bool is_zero, ByteView plaintext)>& visit);

// Concatenates chunks (zero chunks expanded) and trims the padding.
Bytes reassemble(const PlainChunkList& list);

// POSIX/ustar reader with GNU long-name and PAX path support. OCI whiteout
// names become whiteout entries. Hard links copy the target's content.
LayerArchive read_tar(ByteView tar);
LayerArchive read_tar_file(const std::filesystem::path& path);

// ustar writer; whiteouts are emitted as ".wh." marker files.
Bytes write_tar(const LayerArchive& archive);

}  // namespace cvault
