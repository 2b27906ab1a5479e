#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvault/crypto.hpp"
#include "cvault/origin_store.hpp"

namespace cvault {

// Which manifests are still referenced by a live function. Supplied from
// outside; function lifecycle is not tracked here.
class ReferenceView {
 public:
  virtual ~ReferenceView() = default;
  virtual bool is_live(const std::string& manifest_id) const = 0;
};

class AllLive : public ReferenceView {
 public:
  bool is_live(const std::string&) const override { return true; }
};

// Everything is live unless explicitly released.
class ReleasedSet : public ReferenceView {
 public:
  bool is_live(const std::string& manifest_id) const override { return released_.count(manifest_id) == 0; }
  void release(const std::string& manifest_id) { released_.insert(manifest_id); }
  const std::set<std::string>& released() const { return released_; }

 private:
  std::set<std::string> released_;
};

struct GcConfig {
  // Logical time an expired root must stay quiet before deletion.
  std::uint64_t quiet_period = 1;
  // Number of simultaneously active roots; new manifests are placed by
  // hash(placement key) mod count.
  std::size_t active_root_count = 1;
  // Static part of the dedup salt; the active root id is appended.
  std::string salt_prefix;
  std::string root_prefix = "root-";
};

enum class MigrationStep { chunks_copied, manifest_copied };

// Called after each migration step; throwing from it simulates a crash at
// that point.
using FaultHook = std::function<void(MigrationStep step, const std::string& manifest_id)>;

struct ManifestLocation {
  std::string manifest_id;
  std::string root_id;
  bool migrated = false;  // moved into an active root by this read
};

// Generational collector over the store's roots. All GC operations are
// expected to run on one executor; reads may run concurrently with
// migration since migration only adds objects.
class Collector {
 public:
  Collector(OriginStore& store, const ReferenceView& refs, GcConfig config = {});

  // Creates the initial active root(s) when the store has none.
  void bootstrap();

  std::vector<std::string> active_roots() const;
  std::string active_root_for(const std::string& placement_key) const;
  Salt salt_for(const std::string& root_id) const;

  // Retires every active root and creates fresh active ones; returns the new
  // active root ids. Retired roots holding no manifests are immediately
  // migration-complete.
  std::vector<std::string> rotate_root();

  // Copies every chunk the manifest names into `to`, then the manifest.
  // Idempotent, so an interrupted migration can simply be retried. A chunk
  // missing from `from` aborts with IntegrityError before the manifest is
  // copied.
  void migrate_manifest(const std::string& manifest_id, const std::string& from, const std::string& to,
                        const FaultHook& hook = {});

  // Migrates every live manifest out of retired roots and marks roots with
  // nothing left to move as migration-complete. Returns manifests moved.
  std::size_t sweep(const FaultHook& hook = {});

  // Resolves a manifest to the newest non-deleted root holding it; a live
  // manifest found only in a retired root is migrated on access.
  ManifestLocation locate_manifest(const std::string& manifest_id, const FaultHook& hook = {});
  Bytes read_manifest(const std::string& manifest_id);

  // Throws LifecycleError listing live manifests not yet present in an
  // active root.
  void mark_migration_complete(const std::string& root_id);
  // Retired -> expired; marks migration complete first if possible.
  void expire_root(const std::string& root_id);
  // Requires expired, no pending alarms and the quiet period elapsed.
  void delete_root(const std::string& root_id);

  // Live manifests of `root_id` with no copy in any active root.
  std::vector<std::string> unmigrated_live_manifests(const std::string& root_id) const;

  const GcConfig& config() const { return config_; }

 private:
  std::string next_root_id();

  OriginStore& store_;
  const ReferenceView& refs_;
  GcConfig config_;
};

// Every manifest in every non-deleted root has all its chunks in that root.
// Returns a description of each violation.
std::vector<std::string> check_closure(const OriginStore& store);

}  // namespace cvault
