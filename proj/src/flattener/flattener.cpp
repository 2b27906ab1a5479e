#include "cvault/flattener.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "cvault/errors.hpp"

namespace cvault {

namespace {

constexpr char kImageMagic[4] = {'F', 'I', 'M', 'G'};

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    int extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      extra = 1;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      extra = 2;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (int k = 1; k <= extra; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xc0) != 0x80) return false;
      cp = cp << 6 | (cc & 0x3f);
    }
    // Reject overlong forms, surrogates and out-of-range code points.
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    i += extra + 1;
  }
  return true;
}

bool is_below(const std::string& path, const std::string& ancestor) {
  return path.size() > ancestor.size() && path.compare(0, ancestor.size(), ancestor) == 0 &&
         path[ancestor.size()] == '/';
}

}  // namespace

std::string_view to_string(EntryKind kind) {
  switch (kind) {
    case EntryKind::file: return "file";
    case EntryKind::dir: return "dir";
    case EntryKind::symlink: return "symlink";
    case EntryKind::whiteout: return "whiteout";
  }
  return "unknown";
}

std::optional<std::string> normalize_path(std::string_view path, std::string* reason) {
  auto fail = [&](const char* why) -> std::optional<std::string> {
    if (reason) *reason = why;
    return std::nullopt;
  };
  if (!valid_utf8(path)) return fail("invalid UTF-8");
  if (path.find('\0') != std::string_view::npos) return fail("embedded NUL");
  std::string out;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    std::size_t next = path.find('/', pos);
    if (next == std::string_view::npos) next = path.size();
    std::string_view part = path.substr(pos, next - pos);
    pos = next + 1;
    if (part.empty() || part == ".") continue;
    if (part == "..") return fail("'..' component escapes the tree");
    if (!out.empty()) out.push_back('/');
    out.append(part);
  }
  if (out.empty()) return fail("empty path");
  return out;
}

void FileTree::insert(const std::string& path, TreeNode node) {
  // A non-directory ancestor is replaced by the implied directory.
  for (std::size_t slash = path.find('/'); slash != std::string::npos; slash = path.find('/', slash + 1)) {
    auto it = nodes_.find(path.substr(0, slash));
    if (it != nodes_.end() && it->second.kind != EntryKind::dir) nodes_.erase(it);
  }
  auto it = nodes_.find(path);
  if (it != nodes_.end() && it->second.kind == EntryKind::dir && node.kind == EntryKind::dir) {
    it->second.mode = node.mode;
    return;
  }
  erase_subtree(path);
  nodes_.emplace(path, std::move(node));
}

void FileTree::erase_subtree(const std::string& path) {
  nodes_.erase(path);
  erase_children(path);
}

void FileTree::erase_children(const std::string& path) {
  // Children sort directly after "path/" since '/' precedes nothing we keep.
  auto it = nodes_.lower_bound(path + "/");
  while (it != nodes_.end() && is_below(it->first, path)) it = nodes_.erase(it);
}

const TreeNode* FileTree::find(const std::string& path) const {
  auto it = nodes_.find(path);
  return it == nodes_.end() ? nullptr : &it->second;
}

FileTree apply_layers(const std::vector<LayerArchive>& layers) {
  FileTree tree;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    for (const LayerEntry& entry : layers[li].entries) {
      if (entry.kind == EntryKind::whiteout && entry.opaque && (entry.path.empty() || entry.path == "/" || entry.path == "." || entry.path == "./")) {
        tree = FileTree{};
        continue;
      }
      std::string reason;
      auto path = normalize_path(entry.path, &reason);
      if (!path) {
        throw ValidationError("layer " + std::to_string(li) + ": malformed path '" + entry.path + "': " + reason);
      }
      if (entry.kind == EntryKind::whiteout) {
        if (entry.opaque) {
          tree.erase_children(*path);
        } else {
          tree.erase_subtree(*path);
        }
        continue;
      }
      tree.insert(*path, TreeNode{entry.kind, entry.mode,
                                  entry.kind == EntryKind::dir ? Bytes{} : entry.content});
    }
  }
  return tree;
}

FlatImage serialize_image(const FileTree& tree) {
  ByteWriter w;
  w.raw(as_bytes(std::string_view(kImageMagic, 4)));
  w.u32(kImageFormatVersion);
  w.u64(tree.size());

  std::size_t table_size = 0;
  for (const auto& [path, node] : tree.nodes()) table_size += 2 + path.size() + 1 + 2 + 8 + 8 + 8;
  std::uint64_t cursor = align_up(kImageHeaderSize + table_size, kPageSize);

  std::vector<std::pair<std::uint64_t, const Bytes*>> contents;
  for (const auto& [path, node] : tree.nodes()) {
    std::uint64_t offset = 0;
    std::uint64_t length = node.content.size();
    if (length > 0) {
      offset = cursor;
      contents.emplace_back(offset, &node.content);
      cursor = align_up(cursor + length, kPageSize);
    }
    w.u16(static_cast<std::uint16_t>(path.size()));
    w.raw(as_bytes(path));
    w.u8(static_cast<std::uint8_t>(node.kind));
    w.u16(node.mode);
    w.u64(0);  // mtime
    w.u64(offset);
    w.u64(length);
  }

  Bytes& out = w.buffer();
  out.resize(align_up(out.size(), kPageSize), 0);
  out.reserve(cursor);
  for (const auto& [offset, content] : contents) {
    out.resize(offset, 0);
    out.insert(out.end(), content->begin(), content->end());
  }
  out.resize(cursor, 0);

  FlatImage image;
  image.entry_count = tree.size();
  image.bytes = w.take();
  return image;
}

FileTree parse_image(ByteView image) {
  ByteReader r(image, "flat image");
  ByteView magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kImageMagic)) throw ValidationError("flat image: bad magic");
  if (r.u32() != kImageFormatVersion) throw ValidationError("flat image: unsupported version");
  if (image.size() % kPageSize != 0) throw ValidationError("flat image: length not page aligned");
  std::uint64_t count = r.u64();
  FileTree tree;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint16_t len = r.u16();
    ByteView p = r.raw(len);
    std::string path(p.begin(), p.end());
    auto kind = r.u8();
    if (kind > static_cast<std::uint8_t>(EntryKind::symlink)) throw ValidationError("flat image: bad entry kind");
    std::uint16_t mode = r.u16();
    r.u64();  // mtime
    std::uint64_t offset = r.u64();
    std::uint64_t length = r.u64();
    if (offset > image.size() || length > image.size() - offset) {
      throw ValidationError("flat image: content out of range for '" + path + "'");
    }
    ByteView content = image.subspan(offset, length);
    tree.insert(path, TreeNode{static_cast<EntryKind>(kind), mode, Bytes(content.begin(), content.end())});
  }
  return tree;
}

void write_image_file(const std::filesystem::path& path, const FlatImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(image.bytes.data()), static_cast<std::streamsize>(image.bytes.size()));
  if (!out) throw ValidationError("short write to " + path.string());
}

FlatImage read_image_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  FlatImage image;
  image.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  ByteReader r(image.bytes, "flat image " + path.string());
  ByteView magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kImageMagic)) throw ValidationError(path.string() + ": not a flat image");
  image.version = r.u32();
  image.entry_count = r.u64();
  return image;
}

std::size_t PlainChunkList::stored_plaintexts() const {
  return static_cast<std::size_t>(
      std::count_if(chunks.begin(), chunks.end(), [](const PlainChunk& c) { return c.plaintext.has_value(); }));
}

void validate_chunk_size(std::size_t chunk_size) {
  if (chunk_size == 0 || chunk_size % kPageSize != 0) {
    throw ValidationError("chunk size " + std::to_string(chunk_size) + " is not a positive multiple of 4096");
  }
}

void for_each_chunk(ByteView image, std::size_t chunk_size,
                    const std::function<void(std::uint64_t, bool, ByteView)>& visit) {
  validate_chunk_size(chunk_size);
  Bytes padded;
  std::uint64_t count = (image.size() + chunk_size - 1) / chunk_size;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::size_t begin = i * chunk_size;
    std::size_t n = std::min(chunk_size, image.size() - begin);
    ByteView piece = image.subspan(begin, n);
    if (n < chunk_size) {
      padded.assign(chunk_size, 0);
      std::copy(piece.begin(), piece.end(), padded.begin());
      piece = padded;
    }
    bool zero = all_zero(piece);
    visit(i, zero, zero ? ByteView{} : piece);
  }
}

PlainChunkList chunk_image(const FlatImage& image, std::size_t chunk_size) {
  PlainChunkList list;
  list.chunk_size = chunk_size;
  list.image_length = image.length();
  for_each_chunk(image.bytes, chunk_size, [&](std::uint64_t index, bool zero, ByteView plain) {
    PlainChunk c;
    c.index = index;
    c.is_zero = zero;
    if (!zero) c.plaintext = Bytes(plain.begin(), plain.end());
    list.chunks.push_back(std::move(c));
  });
  return list;
}

Bytes reassemble(const PlainChunkList& list) {
  Bytes out;
  out.reserve(list.chunks.size() * list.chunk_size);
  for (const PlainChunk& c : list.chunks) {
    if (c.plaintext) {
      out.insert(out.end(), c.plaintext->begin(), c.plaintext->end());
    } else {
      out.resize(out.size() + list.chunk_size, 0);
    }
  }
  out.resize(list.image_length);
  return out;
}

}  // namespace cvault
