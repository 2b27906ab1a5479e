#include "cvault/gc.hpp"

#include <algorithm>
#include <cstring>

#include "cvault/errors.hpp"
#include "cvault/manifest.hpp"

namespace cvault {

Collector::Collector(OriginStore& store, const ReferenceView& refs, GcConfig config)
    : store_(store), refs_(refs), config_(std::move(config)) {
  if (config_.active_root_count == 0) throw ValidationError("active_root_count must be at least 1");
}

std::string Collector::next_root_id() {
  std::size_t n = store_.roots().size() + 1;
  std::string id;
  do {
    std::string digits = std::to_string(n++);
    id = config_.root_prefix + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
  } while (store_.has_root(id));
  return id;
}

void Collector::bootstrap() {
  if (!active_roots().empty()) return;
  for (std::size_t i = 0; i < config_.active_root_count; ++i) store_.create_root(next_root_id());
}

std::vector<std::string> Collector::active_roots() const {
  std::vector<std::string> out;
  for (const Root& r : store_.roots())
    if (r.state == RootState::active) out.push_back(r.root_id);
  return out;
}

std::string Collector::active_root_for(const std::string& placement_key) const {
  auto active = active_roots();
  if (active.empty()) throw LifecycleError("no active root");
  if (active.size() == 1) return active.front();
  Digest d = sha256(as_bytes(placement_key));
  std::uint64_t h;
  std::memcpy(&h, d.data(), sizeof h);
  return active[h % active.size()];
}

Salt Collector::salt_for(const std::string& root_id) const {
  return Salt(to_bytes(config_.salt_prefix + root_id));
}

std::vector<std::string> Collector::rotate_root() {
  auto old = active_roots();
  if (old.empty()) throw LifecycleError("rotate requires an active root");
  std::vector<std::string> fresh;
  for (std::size_t i = 0; i < config_.active_root_count; ++i) fresh.push_back(store_.create_root(next_root_id()).root_id);
  for (const std::string& id : old) {
    store_.transition(id, RootState::retired);
    if (store_.list(id, ObjectKind::manifest).empty()) store_.set_migration_complete(id);
  }
  store_.tick();
  return fresh;
}

void Collector::migrate_manifest(const std::string& manifest_id, const std::string& from, const std::string& to,
                                 const FaultHook& hook) {
  Root src = store_.root(from);
  Root dst = store_.root(to);
  if (src.state != RootState::retired) throw LifecycleError("migration source '" + from + "' is not retired");
  if (dst.state != RootState::active) throw LifecycleError("migration target '" + to + "' is not active");
  if (!refs_.is_live(manifest_id)) throw LifecycleError("manifest '" + manifest_id + "' is not live");

  auto manifest = store_.peek(from, ObjectKind::manifest, manifest_id);
  if (!manifest) throw NotFoundError("manifest '" + manifest_id + "' not in root '" + from + "'");

  for (const Digest& d : list_chunk_names(*manifest)) {
    std::string name = chunk_name(d);
    if (store_.contains(to, ObjectKind::chunk, name)) continue;
    auto bytes = store_.peek(from, ObjectKind::chunk, name);
    if (!bytes) {
      throw IntegrityError("migration of '" + manifest_id + "' aborted: chunk " + name + " missing from root '" +
                           from + "'");
    }
    store_.put_if_absent(to, ObjectKind::chunk, name, *bytes, WriteMode::migration);
  }
  if (hook) hook(MigrationStep::chunks_copied, manifest_id);
  store_.put_if_absent(to, ObjectKind::manifest, manifest_id, *manifest, WriteMode::migration);
  if (hook) hook(MigrationStep::manifest_copied, manifest_id);
}

std::vector<std::string> Collector::unmigrated_live_manifests(const std::string& root_id) const {
  auto active = active_roots();
  std::vector<std::string> out;
  for (const std::string& id : store_.list(root_id, ObjectKind::manifest)) {
    if (!refs_.is_live(id)) continue;
    bool copied = std::any_of(active.begin(), active.end(), [&](const std::string& a) {
      return a != root_id && store_.contains(a, ObjectKind::manifest, id);
    });
    if (!copied) out.push_back(id);
  }
  return out;
}

std::size_t Collector::sweep(const FaultHook& hook) {
  std::size_t moved = 0;
  for (const Root& r : store_.roots()) {
    if (r.state != RootState::retired || r.migration_complete) continue;
    for (const std::string& id : unmigrated_live_manifests(r.root_id)) {
      migrate_manifest(id, r.root_id, active_root_for(id), hook);
      ++moved;
    }
    store_.set_migration_complete(r.root_id);
  }
  store_.tick();
  return moved;
}

ManifestLocation Collector::locate_manifest(const std::string& manifest_id, const FaultHook& hook) {
  auto roots = store_.roots();
  for (auto it = roots.rbegin(); it != roots.rend(); ++it) {
    const Root& r = *it;
    if (r.state == RootState::deleted || !store_.contains(r.root_id, ObjectKind::manifest, manifest_id)) continue;
    if (r.state == RootState::retired && refs_.is_live(manifest_id)) {
      std::string to = active_root_for(manifest_id);
      migrate_manifest(manifest_id, r.root_id, to, hook);
      return ManifestLocation{manifest_id, to, true};
    }
    return ManifestLocation{manifest_id, r.root_id, false};
  }
  throw NotFoundError("manifest '" + manifest_id + "' not found in any root");
}

Bytes Collector::read_manifest(const std::string& manifest_id) {
  ManifestLocation loc = locate_manifest(manifest_id);
  return store_.get(loc.root_id, ObjectKind::manifest, manifest_id);
}

void Collector::mark_migration_complete(const std::string& root_id) {
  auto offenders = unmigrated_live_manifests(root_id);
  if (!offenders.empty()) {
    std::string list;
    for (const auto& id : offenders) list += (list.empty() ? "" : ", ") + id;
    throw LifecycleError("root '" + root_id + "' still holds live unmigrated manifests: " + list);
  }
  store_.set_migration_complete(root_id);
}

void Collector::expire_root(const std::string& root_id) {
  Root r = store_.root(root_id);
  if (r.state != RootState::retired) {
    throw LifecycleError("only retired roots can expire; '" + root_id + "' is " + std::string(to_string(r.state)));
  }
  if (!r.migration_complete) mark_migration_complete(root_id);
  store_.transition(root_id, RootState::expired);
  store_.tick();
}

void Collector::delete_root(const std::string& root_id) {
  Root r = store_.root(root_id);
  if (r.state != RootState::expired) {
    throw LifecycleError("refusing to delete root '" + root_id + "': it is " + std::string(to_string(r.state)) +
                         ", not expired");
  }
  AlarmLog alarms = store_.alarms();
  if (alarms.deletions_blocked()) {
    throw LifecycleError("refusing to delete root '" + root_id + "': " + std::to_string(alarms.events.size()) +
                         " unacknowledged expired-root read alarm(s)");
  }
  std::uint64_t quiet = store_.now() - r.expired_at;
  if (quiet < config_.quiet_period) {
    throw LifecycleError("refusing to delete root '" + root_id + "': quiet for " + std::to_string(quiet) +
                         " of " + std::to_string(config_.quiet_period) + " required ticks");
  }
  store_.purge_root(root_id);
  store_.tick();
}

std::vector<std::string> check_closure(const OriginStore& store) {
  std::vector<std::string> violations;
  for (const Root& r : store.roots()) {
    if (r.state == RootState::deleted) continue;
    for (const std::string& id : store.list(r.root_id, ObjectKind::manifest)) {
      auto bytes = store.peek(r.root_id, ObjectKind::manifest, id);
      if (!bytes) continue;
      for (const Digest& d : list_chunk_names(*bytes)) {
        std::string name = chunk_name(d);
        if (!store.contains(r.root_id, ObjectKind::chunk, name)) {
          violations.push_back("root " + r.root_id + ": manifest " + id + " references missing chunk " + name);
        }
      }
    }
  }
  return violations;
}

}  // namespace cvault
