#include <gtest/gtest.h>

#include "cvault/errors.hpp"
#include "cvault/gc.hpp"
#include "cvault/ingest.hpp"
#include "support/gc_drill.hpp"

using namespace cvault;

namespace {

struct Fixture {
  OriginStore store{std::make_shared<MemoryBackend>()};
  ReleasedSet refs;
  Collector gc;
  CustomerKey customer;

  explicit Fixture(GcConfig cfg = {}) : gc(store, refs, cfg) {
    customer.key_id = "k";
    customer.key.fill(1);
    gc.bootstrap();
  }

  std::string upload(std::uint8_t fill, std::size_t chunks = 2) {
    UploadOptions o;
    o.root_id = gc.active_roots().front();
    o.chunk_size = 4096;
    o.salt = gc.salt_for(o.root_id);
    o.customer = customer;
    Bytes img(chunks * 4096, fill);
    img[0] = static_cast<std::uint8_t>(fill + 1);
    return upload_image(store, img, o).manifest_id;
  }
};

}  // namespace

TEST(Collector, BootstrapCreatesOneActiveRoot) {
  Fixture f;
  ASSERT_EQ(f.gc.active_roots().size(), 1u);
  EXPECT_EQ(f.gc.active_roots().front(), "root-0001");
  f.gc.bootstrap();
  EXPECT_EQ(f.store.roots().size(), 1u);
}

TEST(Collector, RotateRetiresOldRoot) {
  Fixture f;
  std::string old = f.gc.active_roots().front();
  f.upload(1);
  auto fresh = f.gc.rotate_root();
  ASSERT_EQ(fresh.size(), 1u);
  EXPECT_NE(fresh.front(), old);
  EXPECT_EQ(f.store.root(old).state, RootState::retired);
  EXPECT_FALSE(f.store.root(old).migration_complete);
}

TEST(Collector, EmptyRetiredRootIsImmediatelyMigrated) {
  Fixture f;
  std::string old = f.gc.active_roots().front();
  f.gc.rotate_root();
  EXPECT_TRUE(f.store.root(old).migration_complete);
}

TEST(Collector, ExpireWithLiveManifestRefusesAndNamesIt) {
  Fixture f;
  std::string old = f.gc.active_roots().front();
  std::string id = f.upload(1);
  f.gc.rotate_root();
  try {
    f.gc.expire_root(old);
    FAIL();
  } catch (const LifecycleError& e) {
    EXPECT_NE(std::string(e.what()).find(id), std::string::npos);
  }
}

TEST(Collector, FullLifecycleKeepsLiveDataReadable) {
  Fixture f;
  std::string old = f.gc.active_roots().front();
  std::string keep = f.upload(1);
  std::string drop = f.upload(2);
  f.refs.release(drop);
  f.gc.rotate_root();
  EXPECT_EQ(f.gc.sweep(), 1u);
  f.gc.expire_root(old);
  f.store.tick(5);
  f.gc.delete_root(old);
  EXPECT_EQ(f.store.root(old).state, RootState::deleted);
  EXPECT_NO_THROW(f.gc.read_manifest(keep));
  EXPECT_THROW(f.gc.read_manifest(drop), NotFoundError);
  EXPECT_TRUE(check_closure(f.store).empty());
}

TEST(Collector, ReadOfRetiredManifestMigratesOnAccess) {
  Fixture f;
  std::string old = f.gc.active_roots().front();
  std::string id = f.upload(3);
  auto fresh = f.gc.rotate_root();
  ManifestLocation loc = f.gc.locate_manifest(id);
  EXPECT_TRUE(loc.migrated);
  EXPECT_EQ(loc.root_id, fresh.front());
  EXPECT_TRUE(f.store.contains(fresh.front(), ObjectKind::manifest, id));
  EXPECT_NO_THROW(f.gc.mark_migration_complete(old));
}

TEST(Collector, InterruptedMigrationIsRetriedSafely) {
  Fixture f;
  std::string old = f.gc.active_roots().front();
  std::string id = f.upload(4, 3);
  auto fresh = f.gc.rotate_root();
  FaultHook crash = [](MigrationStep s, const std::string&) {
    if (s == MigrationStep::chunks_copied) throw std::runtime_error("crash");
  };
  EXPECT_THROW(f.gc.migrate_manifest(id, old, fresh.front(), crash), std::runtime_error);
  EXPECT_FALSE(f.store.contains(fresh.front(), ObjectKind::manifest, id));
  EXPECT_TRUE(check_closure(f.store).empty());
  EXPECT_THROW(f.gc.expire_root(old), LifecycleError);
  f.gc.migrate_manifest(id, old, fresh.front());
  f.gc.migrate_manifest(id, old, fresh.front());
  EXPECT_NO_THROW(f.gc.expire_root(old));
}

TEST(Collector, MissingChunkAbortsMigrationBeforeManifest) {
  Fixture f;
  std::string old = f.gc.active_roots().front();
  std::string id = f.upload(5);
  auto fresh = f.gc.rotate_root();
  MemoryBackend& backend = static_cast<MemoryBackend&>(f.store.backend());
  // Simulate loss by moving the whole root's chunks away.
  auto names = f.store.list(old, ObjectKind::chunk);
  auto manifest = *f.store.peek(old, ObjectKind::manifest, id);
  backend.remove_root(old);
  backend.put_if_absent(old, ObjectKind::manifest, id, manifest, nullptr);
  EXPECT_THROW(f.gc.migrate_manifest(id, old, fresh.front()), IntegrityError);
  EXPECT_FALSE(f.store.contains(fresh.front(), ObjectKind::manifest, id));
}

TEST(Collector, DeleteRefusedWhileAlarmPendingOrTooSoon) {
  GcConfig cfg;
  cfg.quiet_period = 3;
  Fixture f(cfg);
  std::string old = f.gc.active_roots().front();
  std::string id = f.upload(6);
  f.refs.release(id);
  f.gc.rotate_root();
  f.gc.expire_root(old);
  EXPECT_THROW(f.gc.delete_root(old), LifecycleError);  // quiet period
  f.store.tick(3);
  f.store.get(old, ObjectKind::manifest, id);
  EXPECT_THROW(f.gc.delete_root(old), LifecycleError);  // alarm
  EXPECT_EQ(f.store.acknowledge_alarms(), 1u);
  EXPECT_NO_THROW(f.gc.delete_root(old));
}

TEST(Collector, PlacementAcrossSeveralActiveRoots) {
  GcConfig cfg;
  cfg.active_root_count = 3;
  Fixture f(cfg);
  EXPECT_EQ(f.gc.active_roots().size(), 3u);
  std::set<std::string> used;
  for (int i = 0; i < 100; ++i) used.insert(f.gc.active_root_for("key" + std::to_string(i)));
  EXPECT_EQ(used.size(), 3u);
  EXPECT_EQ(f.gc.active_root_for("same"), f.gc.active_root_for("same"));
}

TEST(Collector, SaltPerRoot) {
  Fixture f;
  EXPECT_EQ(f.gc.salt_for("root-0001"), Salt::from_string("root-0001"));
}

TEST(GcDrill, RandomizedInterleavingAgainstOracle) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto r = cvault_test::run_gc_drill(seed, 3000, seed == 3 ? 2 : 1);
    EXPECT_EQ(r.failed_live_reads, 0u) << (r.first_failures.empty() ? "" : r.first_failures.front());
    EXPECT_EQ(r.closure_violations, 0u);
    EXPECT_EQ(r.alarm_delete_blocked, r.alarm_delete_attempts);
    EXPECT_GT(r.live_reads, 500u);
    EXPECT_GT(r.deletions, 0u);
    EXPECT_GT(r.crashed_migrations, 0u);
  }
}
