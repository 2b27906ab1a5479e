#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>

#include "cvault/errors.hpp"
#include "cvault/flattener.hpp"

namespace cvault {

namespace {

constexpr std::size_t kBlock = 512;
constexpr std::string_view kWhiteoutPrefix = ".wh.";
constexpr std::string_view kOpaqueMarker = ".wh..wh..opq";

std::string field(ByteView header, std::size_t off, std::size_t len) {
  auto begin = header.begin() + static_cast<std::ptrdiff_t>(off);
  auto end = begin + static_cast<std::ptrdiff_t>(len);
  return std::string(begin, std::find(begin, end, std::uint8_t{0}));
}

std::uint64_t parse_number(ByteView header, std::size_t off, std::size_t len, const char* what) {
  // GNU base-256 encoding for large values.
  if (header[off] & 0x80) {
    std::uint64_t v = header[off] & 0x7f;
    for (std::size_t i = 1; i < len; ++i) v = v << 8 | header[off + i];
    return v;
  }
  std::uint64_t v = 0;
  bool seen = false;
  for (std::size_t i = 0; i < len; ++i) {
    char c = static_cast<char>(header[off + i]);
    if (c == '\0' || (c == ' ' && seen)) break;
    if (c == ' ') continue;
    if (c < '0' || c > '7') throw ValidationError(std::string("tar: bad octal in ") + what);
    v = v * 8 + static_cast<std::uint64_t>(c - '0');
    seen = true;
  }
  return v;
}

void check_checksum(ByteView header) {
  std::uint64_t stored = parse_number(header, 148, 8, "checksum");
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < kBlock; ++i) sum += (i >= 148 && i < 156) ? ' ' : header[i];
  if (sum != stored) throw ValidationError("tar: header checksum mismatch");
}

std::map<std::string, std::string> parse_pax(ByteView body) {
  std::map<std::string, std::string> out;
  std::string text(body.begin(), body.end());
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t space = text.find(' ', pos);
    if (space == std::string::npos) break;
    std::size_t len = std::stoul(text.substr(pos, space - pos));
    if (len == 0 || pos + len > text.size()) throw ValidationError("tar: malformed PAX record");
    std::string record = text.substr(space + 1, pos + len - space - 2);  // drop trailing '\n'
    std::size_t eq = record.find('=');
    if (eq != std::string::npos) out[record.substr(0, eq)] = record.substr(eq + 1);
    pos += len;
  }
  return out;
}

std::pair<std::string, std::string> split_dir(const std::string& path) {
  std::size_t slash = path.rfind('/');
  if (slash == std::string::npos) return {"", path};
  return {path.substr(0, slash + 1), path.substr(slash + 1)};
}

void put_octal(Bytes& header, std::size_t off, std::size_t len, std::uint64_t v) {
  // len-1 digits plus NUL.
  for (std::size_t i = len - 1; i-- > 0;) {
    header[off + i] = static_cast<std::uint8_t>('0' + (v & 7));
    v >>= 3;
  }
  header[off + len - 1] = 0;
}

void put_string(Bytes& header, std::size_t off, std::size_t len, std::string_view s) {
  std::copy_n(s.begin(), std::min(len, s.size()), header.begin() + static_cast<std::ptrdiff_t>(off));
}

void emit_header(Bytes& out, const std::string& name, char type, std::uint16_t mode, std::uint64_t size,
                 const std::string& linkname) {
  Bytes header(kBlock, 0);
  put_string(header, 0, 100, name);
  put_octal(header, 100, 8, mode);
  put_octal(header, 108, 8, 0);
  put_octal(header, 116, 8, 0);
  put_octal(header, 124, 12, size);
  put_octal(header, 136, 12, 0);
  header[156] = static_cast<std::uint8_t>(type);
  put_string(header, 157, 100, linkname);
  put_string(header, 257, 6, "ustar");
  put_string(header, 263, 2, "00");
  std::fill(header.begin() + 148, header.begin() + 156, ' ');
  std::uint64_t sum = 0;
  for (auto b : header) sum += b;
  put_octal(header, 148, 7, sum);
  header[155] = ' ';
  out.insert(out.end(), header.begin(), header.end());
}

void emit_body(Bytes& out, ByteView body) {
  out.insert(out.end(), body.begin(), body.end());
  out.resize(align_up(out.size(), kBlock), 0);
}

std::string pax_record(const std::string& key, const std::string& value) {
  std::string payload = " " + key + "=" + value + "\n";
  std::size_t len = payload.size() + 1;
  while (std::to_string(len).size() + payload.size() != len) len = std::to_string(len).size() + payload.size();
  return std::to_string(len) + payload;
}

}  // namespace

LayerArchive read_tar(ByteView tar) {
  LayerArchive archive;
  std::map<std::string, Bytes> seen_content;
  std::string long_name, long_link;
  std::map<std::string, std::string> pax;
  std::size_t pos = 0;

  bool ended = false;
  while (pos + kBlock <= tar.size()) {
    ByteView header = tar.subspan(pos, kBlock);
    if (all_zero(header)) {
      ended = true;
      break;
    }
    check_checksum(header);
    pos += kBlock;

    std::uint64_t size = parse_number(header, 124, 12, "size");
    if (auto it = pax.find("size"); it != pax.end()) size = std::stoull(it->second);
    if (size > tar.size() - pos) throw ValidationError("tar: entry body truncated");
    ByteView body = tar.subspan(pos, size);
    pos += align_up(size, kBlock);

    char type = static_cast<char>(header[156]);
    if (type == 'L') {
      long_name = std::string(body.begin(), std::find(body.begin(), body.end(), std::uint8_t{0}));
      continue;
    }
    if (type == 'K') {
      long_link = std::string(body.begin(), std::find(body.begin(), body.end(), std::uint8_t{0}));
      continue;
    }
    if (type == 'x') {
      pax = parse_pax(body);
      continue;
    }
    if (type == 'g') continue;

    std::string name = field(header, 0, 100);
    std::string prefix = field(header, 345, 155);
    if (field(header, 257, 5) == "ustar" && !prefix.empty()) name = prefix + "/" + name;
    if (!long_name.empty()) name = long_name;
    if (auto it = pax.find("path"); it != pax.end()) name = it->second;
    std::string link = field(header, 157, 100);
    if (!long_link.empty()) link = long_link;
    if (auto it = pax.find("linkpath"); it != pax.end()) link = it->second;
    long_name.clear();
    long_link.clear();
    pax.clear();

    auto mode = static_cast<std::uint16_t>(parse_number(header, 100, 8, "mode") & 07777);

    // "./" and similar root entries carry nothing.
    std::string reason;
    if (!normalize_path(name, &reason) && reason == "empty path") continue;

    auto [dir, base] = split_dir(name);
    LayerEntry entry;
    entry.mode = mode;
    if (base == kOpaqueMarker) {
      entry.kind = EntryKind::whiteout;
      entry.opaque = true;
      entry.path = dir.empty() ? "/" : dir;
      archive.entries.push_back(std::move(entry));
      continue;
    }
    if (base.starts_with(kWhiteoutPrefix)) {
      entry.kind = EntryKind::whiteout;
      entry.path = dir + base.substr(kWhiteoutPrefix.size());
      archive.entries.push_back(std::move(entry));
      continue;
    }

    entry.path = name;
    switch (type) {
      case '0':
      case '\0':
      case '7':
        entry.kind = EntryKind::file;
        entry.content.assign(body.begin(), body.end());
        break;
      case '5':
        entry.kind = EntryKind::dir;
        break;
      case '2':
        entry.kind = EntryKind::symlink;
        entry.content = to_bytes(link);
        break;
      case '1': {
        auto target = normalize_path(link);
        auto it = target ? seen_content.find(*target) : seen_content.end();
        if (it == seen_content.end()) throw ValidationError("tar: hard link '" + name + "' to unknown target '" + link + "'");
        entry.kind = EntryKind::file;
        entry.content = it->second;
        break;
      }
      default:
        // Devices, FIFOs and sockets have no place in a function image.
        continue;
    }
    if (entry.kind == EntryKind::file) {
      if (auto norm = normalize_path(entry.path)) seen_content[*norm] = entry.content;
    }
    archive.entries.push_back(std::move(entry));
  }
  if (!ended && pos < tar.size()) throw ValidationError("tar: truncated header block at offset " + std::to_string(pos));
  return archive;
}

LayerArchive read_tar_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open layer " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return read_tar(data);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

Bytes write_tar(const LayerArchive& archive) {
  Bytes out;
  for (const LayerEntry& entry : archive.entries) {
    std::string name = entry.path;
    char type = '0';
    std::string link;
    ByteView body;
    switch (entry.kind) {
      case EntryKind::file:
        body = entry.content;
        break;
      case EntryKind::dir:
        type = '5';
        if (!name.ends_with('/')) name.push_back('/');
        break;
      case EntryKind::symlink:
        type = '2';
        link.assign(entry.content.begin(), entry.content.end());
        break;
      case EntryKind::whiteout: {
        auto [dir, base] = split_dir(name);
        if (entry.opaque) {
          std::string d = name;
          if (!d.ends_with('/')) d.push_back('/');
          name = d + std::string(kOpaqueMarker);
        } else {
          name = dir + std::string(kWhiteoutPrefix) + base;
        }
        break;
      }
    }
    if (name.size() > 100 || link.size() > 100) {
      std::string records;
      if (name.size() > 100) records += pax_record("path", name);
      if (link.size() > 100) records += pax_record("linkpath", link);
      emit_header(out, "PaxHeader", 'x', 0644, records.size(), "");
      emit_body(out, as_bytes(records));
    }
    emit_header(out, name.substr(0, 100), type, entry.mode, body.size(), link.substr(0, 100));
    emit_body(out, body);
  }
  out.resize(out.size() + 2 * kBlock, 0);
  return out;
}

}  // namespace cvault
