#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <atomic>
#include <fstream>
#include <iterator>
#include <random>

#include "cvault/errors.hpp"
#include "cvault/origin_store.hpp"

namespace cvault {

PutResult MemoryBackend::put_if_absent(const std::string& root, ObjectKind kind, const std::string& name,
                                       ByteView bytes, Bytes* existing) {
  std::lock_guard lock(mu_);
  auto [it, inserted] = objects_.try_emplace(Key{root, kind, name}, bytes.begin(), bytes.end());
  if (!inserted && existing) *existing = it->second;
  return inserted ? PutResult::stored : PutResult::already_present;
}

std::optional<Bytes> MemoryBackend::get(const std::string& root, ObjectKind kind, const std::string& name) const {
  std::lock_guard lock(mu_);
  auto it = objects_.find(Key{root, kind, name});
  if (it == objects_.end()) return std::nullopt;
  return it->second;
}

bool MemoryBackend::contains(const std::string& root, ObjectKind kind, const std::string& name) const {
  std::lock_guard lock(mu_);
  return objects_.count(Key{root, kind, name}) != 0;
}

std::vector<std::string> MemoryBackend::list(const std::string& root, ObjectKind kind) const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (auto it = objects_.lower_bound(Key{root, kind, ""});
       it != objects_.end() && std::get<0>(it->first) == root && std::get<1>(it->first) == kind; ++it) {
    out.push_back(std::get<2>(it->first));
  }
  return out;
}

void MemoryBackend::remove_root(const std::string& root) {
  std::lock_guard lock(mu_);
  auto it = objects_.lower_bound(Key{root, ObjectKind::chunk, ""});
  while (it != objects_.end() && std::get<0>(it->first) == root) it = objects_.erase(it);
}

void MemoryBackend::corrupt(const std::string& root, ObjectKind kind, const std::string& name, Bytes bytes) {
  std::lock_guard lock(mu_);
  objects_[Key{root, kind, name}] = std::move(bytes);
}

namespace {

std::string_view kind_dir(ObjectKind kind) { return kind == ObjectKind::chunk ? "chunks" : "manifests"; }

void check_component(const std::string& s, const char* what) {
  if (s.empty() || s.find('/') != std::string::npos || s == "." || s == "..") {
    throw ValidationError(std::string("invalid ") + what + " '" + s + "'");
  }
}

std::optional<Bytes> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

DirectoryBackend::DirectoryBackend(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path DirectoryBackend::object_path(const std::string& root, ObjectKind kind,
                                                    const std::string& name) const {
  check_component(root, "root id");
  check_component(name, "object name");
  return dir_ / root / kind_dir(kind) / name;
}

PutResult DirectoryBackend::put_if_absent(const std::string& root, ObjectKind kind, const std::string& name,
                                          ByteView bytes, Bytes* existing) {
  auto target = object_path(root, kind, name);
  if (std::filesystem::exists(target)) {
    if (existing) *existing = read_file(target).value_or(Bytes{});
    return PutResult::already_present;
  }
  std::filesystem::create_directories(target.parent_path());

  static std::atomic<std::uint64_t> counter{0};
  auto tmp = target.parent_path() /
             (".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1)));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw Error("write failed for " + target.string());
    }
  }
  // link(2) fails with EEXIST if another writer won the race.
  int rc = ::link(tmp.c_str(), target.c_str());
  int err = errno;
  std::filesystem::remove(tmp);
  if (rc == 0) return PutResult::stored;
  if (err == EEXIST) {
    if (existing) *existing = read_file(target).value_or(Bytes{});
    return PutResult::already_present;
  }
  throw Error("link failed for " + target.string() + ": " + std::strerror(err));
}

std::optional<Bytes> DirectoryBackend::get(const std::string& root, ObjectKind kind, const std::string& name) const {
  return read_file(object_path(root, kind, name));
}

bool DirectoryBackend::contains(const std::string& root, ObjectKind kind, const std::string& name) const {
  return std::filesystem::exists(object_path(root, kind, name));
}

std::vector<std::string> DirectoryBackend::list(const std::string& root, ObjectKind kind) const {
  check_component(root, "root id");
  std::vector<std::string> out;
  auto dir = dir_ / root / kind_dir(kind);
  if (!std::filesystem::exists(dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::string name = entry.path().filename().string();
    if (!name.starts_with(".tmp.")) out.push_back(std::move(name));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void DirectoryBackend::remove_root(const std::string& root) {
  check_component(root, "root id");
  std::filesystem::remove_all(dir_ / root);
}

void DirectoryBackend::corrupt(const std::string& root, ObjectKind kind, const std::string& name, Bytes bytes) {
  std::ofstream out(object_path(root, kind, name), std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace cvault
