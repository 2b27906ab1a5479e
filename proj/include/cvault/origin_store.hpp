#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "cvault/bytes.hpp"

namespace cvault {

enum class RootState { active, retired, expired, deleted };
enum class ObjectKind { chunk, manifest };

std::string_view to_string(RootState s);
RootState root_state_from_string(std::string_view s);
std::string_view to_string(ObjectKind k);

struct Root {
  std::string root_id;
  RootState state = RootState::active;
  std::uint64_t created_at = 0;
  bool migration_complete = false;
  std::uint64_t expired_at = 0;
};

struct AlarmEvent {
  std::string root_id;
  std::string name;
  std::uint64_t time = 0;
};

// Reads from expired roots land here. Deletion stays blocked while any
// event is unacknowledged.
struct AlarmLog {
  std::vector<AlarmEvent> events;
  std::vector<AlarmEvent> acknowledged;

  bool deletions_blocked() const { return !events.empty(); }
};

enum class PutResult { stored, already_present };

// Raw object storage keyed by (root, kind, name). Implementations must make
// put_if_absent atomic per key.
class ObjectBackend {
 public:
  virtual ~ObjectBackend() = default;

  // Returns already_present without touching existing bytes. `existing`
  // receives the stored bytes in that case when non-null.
  virtual PutResult put_if_absent(const std::string& root, ObjectKind kind, const std::string& name,
                                  ByteView bytes, Bytes* existing) = 0;
  virtual std::optional<Bytes> get(const std::string& root, ObjectKind kind, const std::string& name) const = 0;
  virtual bool contains(const std::string& root, ObjectKind kind, const std::string& name) const = 0;
  virtual std::vector<std::string> list(const std::string& root, ObjectKind kind) const = 0;
  virtual void remove_root(const std::string& root) = 0;
  // Test hook: overwrite an object in place, bypassing immutability.
  virtual void corrupt(const std::string& root, ObjectKind kind, const std::string& name, Bytes bytes) = 0;
};

class MemoryBackend : public ObjectBackend {
 public:
  PutResult put_if_absent(const std::string& root, ObjectKind kind, const std::string& name, ByteView bytes,
                          Bytes* existing) override;
  std::optional<Bytes> get(const std::string& root, ObjectKind kind, const std::string& name) const override;
  bool contains(const std::string& root, ObjectKind kind, const std::string& name) const override;
  std::vector<std::string> list(const std::string& root, ObjectKind kind) const override;
  void remove_root(const std::string& root) override;
  void corrupt(const std::string& root, ObjectKind kind, const std::string& name, Bytes bytes) override;

 private:
  using Key = std::tuple<std::string, ObjectKind, std::string>;
  mutable std::mutex mu_;
  std::map<Key, Bytes> objects_;
};

// <dir>/<root_id>/{chunks,manifests}/<hex-name>. Objects are written to a
// temporary file and linked into place, so a racing writer sees EEXIST.
class DirectoryBackend : public ObjectBackend {
 public:
  explicit DirectoryBackend(std::filesystem::path dir);

  PutResult put_if_absent(const std::string& root, ObjectKind kind, const std::string& name, ByteView bytes,
                          Bytes* existing) override;
  std::optional<Bytes> get(const std::string& root, ObjectKind kind, const std::string& name) const override;
  bool contains(const std::string& root, ObjectKind kind, const std::string& name) const override;
  std::vector<std::string> list(const std::string& root, ObjectKind kind) const override;
  void remove_root(const std::string& root) override;
  void corrupt(const std::string& root, ObjectKind kind, const std::string& name, Bytes bytes) override;

 private:
  std::filesystem::path object_path(const std::string& root, ObjectKind kind, const std::string& name) const;

  std::filesystem::path dir_;
};

enum class WriteMode { upload, migration };

// Root-namespaced content-addressed store with lifecycle rules and expired-
// read alarms on top of an ObjectBackend.
class OriginStore {
 public:
  explicit OriginStore(std::shared_ptr<ObjectBackend> backend);

  Root create_root(const std::string& root_id);
  Root root(const std::string& root_id) const;
  std::vector<Root> roots() const;
  bool has_root(const std::string& root_id) const;

  // Legal moves: active->retired->expired->deleted. Expiry requires
  // migration_complete. Throws LifecycleError otherwise.
  void transition(const std::string& root_id, RootState to);
  void set_migration_complete(const std::string& root_id);

  // Uploads need an active root; retired roots accept migration writes only.
  // Same name with different bytes raises IntegrityError.
  PutResult put_if_absent(const std::string& root_id, ObjectKind kind, const std::string& name, ByteView bytes,
                          WriteMode mode = WriteMode::upload);

  // Throws NotFoundError for unknown names or deleted roots. Reads from an
  // expired root succeed but raise an alarm.
  Bytes get(const std::string& root_id, ObjectKind kind, const std::string& name);
  bool contains(const std::string& root_id, ObjectKind kind, const std::string& name) const;
  // Internal read for the collector and checkers: no lifecycle checks and
  // no alarms.
  std::optional<Bytes> peek(const std::string& root_id, ObjectKind kind, const std::string& name) const;
  std::vector<std::string> list(const std::string& root_id, ObjectKind kind) const;

  // Removes every object of an expired root and marks it deleted. Callers
  // are responsible for the quiet-period and alarm checks (see gc).
  void purge_root(const std::string& root_id);

  AlarmLog alarms() const;
  // Clears pending alarms (moved to the acknowledged list); returns count.
  std::size_t acknowledge_alarms();

  std::uint64_t now() const;
  std::uint64_t tick(std::uint64_t by = 1);

  // Recompute SHA-256 of chunk bytes on read and compare against the name.
  void set_verify_reads(bool on) { verify_reads_ = on; }

  ObjectBackend& backend() { return *backend_; }

  nlohmann::json metadata() const;
  void load_metadata(const nlohmann::json& doc);

 private:
  Root& mutable_root(const std::string& root_id);

  std::shared_ptr<ObjectBackend> backend_;
  std::vector<Root> roots_;
  AlarmLog alarms_;
  std::uint64_t clock_ = 0;
  bool verify_reads_ = false;
  mutable std::mutex mu_;
};

}  // namespace cvault
