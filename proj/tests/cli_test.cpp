#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "cvault/crypto.hpp"

using namespace cvault;
using namespace cvault::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = CVAULT_FIXTURES;
const std::string kConfigs = CVAULT_CONFIGS;

struct CliRun {
  int code;
  std::string out;
  std::string err;
  json result() const { return json::parse(out); }
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("cvault-cli-" + std::to_string(::getpid()) + "-" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(path("small.json")) << R"({"chunk_size": 4096})";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string store() const { return path("store"); }

  CliRun run(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
  }
  CliRun store_cmd(std::vector<std::string> args) {
    args.insert(args.begin(), {"--store", store(), "--json"});
    return run(args);
  }
  void init_store() {
    CliRun r = store_cmd({"--config", path("small.json"), "init"});
    ASSERT_EQ(r.code, kOk) << r.err;
  }

  std::string write_image(const std::string& name, const Bytes& bytes) {
    std::ofstream f(path(name), std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return path(name);
  }

  static Bytes random_image(std::size_t chunks, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Bytes b(chunks * 4096);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    return b;
  }

  fs::path dir_;
};

std::string file_digest(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  std::string s((std::istreambuf_iterator<char>(f)), {});
  return to_hex(sha256(as_bytes(s)));
}

}  // namespace

TEST_F(CliTest, FlattenFixtureIsDeterministic) {
  CliRun a = run({"--json", "flatten", path("a.img"), kFixtures + "/layer1.tar", kFixtures + "/layer2.tar"});
  ASSERT_EQ(a.code, kOk) << a.err;
  CliRun b = run({"--json", "flatten", path("b.img"), kFixtures + "/layer1.tar", kFixtures + "/layer2.tar"});
  EXPECT_EQ(file_digest(path("a.img")), file_digest(path("b.img")));
  EXPECT_EQ(a.result()["sha256"], "961ebd7a88429e7a3a6af75e86ec907dc60b3cf6ed1fa324c70d1d2ad88684c8");
  EXPECT_EQ(a.result()["chunks"], 1);
}

TEST_F(CliTest, FlattenNoLayersGivesHeaderOnlyImage) {
  CliRun r = run({"--json", "flatten", path("e.img")});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(fs::file_size(path("e.img")), 4096u);
  EXPECT_EQ(r.result()["entries"], 0);
}

TEST_F(CliTest, FlattenBadLayerIsValidationError) {
  std::ofstream(path("junk.tar")) << "not a tar file at all";
  EXPECT_EQ(run({"flatten", path("x.img"), path("junk.tar")}).code, kValidation);
}

TEST_F(CliTest, UploadTwiceSecondHasNoUniqueChunks) {
  init_store();
  std::string img = write_image("img", random_image(10, 1));
  CliRun a = store_cmd({"upload", img});
  ASSERT_EQ(a.code, kOk) << a.err;
  EXPECT_EQ(a.result()["unique_chunks"], 10);
  EXPECT_TRUE(a.result().contains("config_hash"));
  CliRun b = store_cmd({"upload", img});
  EXPECT_EQ(b.result()["unique_chunks"], 0);
  EXPECT_EQ(b.result()["manifest_id"], a.result()["manifest_id"]);
}

TEST_F(CliTest, DerivedImageUniqueFractionAndSaltRotation) {
  init_store();
  Bytes base = random_image(100, 2);
  Bytes derived = base;
  for (int c : {1, 20, 50, 70, 90}) derived[c * 4096] ^= 1;
  store_cmd({"upload", write_image("base", base)});
  CliRun d = store_cmd({"upload", write_image("derived", derived)});
  EXPECT_EQ(d.result()["unique_chunks"], 5);
  EXPECT_DOUBLE_EQ(d.result()["unique_fraction"].get<double>(), 0.05);
  ASSERT_EQ(store_cmd({"gc", "rotate"}).code, kOk);
  CliRun r = store_cmd({"upload", path("derived")});
  EXPECT_DOUBLE_EQ(r.result()["unique_fraction"].get<double>(), 1.0);

  CliRun stats = store_cmd({"stats"});
  ASSERT_EQ(stats.code, kOk);
  EXPECT_EQ(stats.result()["uploads"], 3);
}

TEST_F(CliTest, ReadBenchDefaultTraceAndSecondPassFromL1) {
  init_store();
  Bytes img = random_image(64, 3);
  std::fill(img.begin() + 10 * 4096, img.begin() + 20 * 4096, 0);
  CliRun up = store_cmd({"upload", write_image("img", img)});
  std::string id = up.result()["manifest_id"];
  CliRun r = store_cmd({"read-bench", id, "--passes", "2"});
  ASSERT_EQ(r.code, kOk) << r.err;
  json p1 = r.result()["passes"][0], p2 = r.result()["passes"][1];
  EXPECT_TRUE(p1["fetched_subset_of_touched"].get<bool>());
  EXPECT_EQ(p1["reads"], 5);  // ceil(0.064 * 64)
  EXPECT_LE(p1["fetched_chunks"].get<int>(), p1["touched_chunks"].get<int>());
  EXPECT_DOUBLE_EQ(p2["l1_fraction"].get<double>(), 1.0);
}

TEST_F(CliTest, ReadBenchEmptyTraceFetchesNothing) {
  init_store();
  std::string id = store_cmd({"upload", write_image("img", random_image(4, 4))}).result()["manifest_id"];
  std::ofstream(path("empty.trace")) << "# nothing\n";
  CliRun r = store_cmd({"read-bench", id, path("empty.trace")});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(r.result()["passes"][0]["chunk_fetches"], 0);
}

TEST_F(CliTest, ReadBenchTraceWithWrites) {
  init_store();
  std::string id = store_cmd({"upload", write_image("img", random_image(4, 4))}).result()["manifest_id"];
  std::ofstream(path("t.trace")) << "R 0 10\nW 5 abcd\nR 4096 4096\n";
  CliRun r = store_cmd({"read-bench", id, path("t.trace"), "--per-read"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(r.result()["passes"][0]["per_read"].size(), 3u);
  EXPECT_EQ(r.result()["passes"][0]["writes"], 1);
}

TEST_F(CliTest, CorruptChunkAbortsWithChunkIndex) {
  init_store();
  Bytes img = random_image(6, 5);
  CliRun up = store_cmd({"upload", write_image("img", img)});
  std::string id = up.result()["manifest_id"], root = up.result()["root_id"];
  // Corrupt the ciphertext of chunk 3.
  Bytes c3(img.begin() + 3 * 4096, img.begin() + 4 * 4096);
  ChunkKey k = derive_key(c3, Salt::from_string("cvault" + root));
  std::string name = chunk_name(encrypt_chunk(c3, k).hash);
  fs::path obj = fs::path(store()) / "objects" / root / "chunks" / name;
  ASSERT_TRUE(fs::exists(obj)) << obj;
  fs::permissions(obj, fs::perms::owner_write, fs::perm_options::add);
  {
    std::fstream f(obj, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x55');
  }
  CliRun r = store_cmd({"cat", id, path("out.img")});
  EXPECT_EQ(r.code, kIntegrity);
  EXPECT_NE(r.err.find("chunk 3"), std::string::npos) << r.err;
}

TEST_F(CliTest, CatReassemblesImage) {
  init_store();
  Bytes img = random_image(5, 6);
  std::string id = store_cmd({"upload", write_image("img", img)}).result()["manifest_id"];
  ASSERT_EQ(store_cmd({"cat", id, path("back.img")}).code, kOk);
  EXPECT_EQ(file_digest(path("back.img")), file_digest(path("img")));
}

TEST_F(CliTest, GcLifecycleDrill) {
  init_store();
  std::string id = store_cmd({"upload", write_image("img", random_image(3, 7))}).result()["manifest_id"];
  std::string old = store_cmd({"gc", "status"}).result()["roots"][0]["root_id"];
  ASSERT_EQ(store_cmd({"gc", "rotate"}).code, kOk);

  CliRun refused = store_cmd({"gc", "expire", old});
  EXPECT_EQ(refused.code, kLifecycle);
  EXPECT_NE(refused.err.find(id), std::string::npos);

  EXPECT_EQ(store_cmd({"gc", "migrate"}).result()["migrated"], 1);
  ASSERT_EQ(store_cmd({"gc", "expire", old}).code, kOk);

  ASSERT_TRUE(fs::exists(fs::path(store()) / "objects" / old / "manifests" / id));
  store_cmd({"gc", "tick", "5"});
  ASSERT_EQ(store_cmd({"gc", "release", id}).code, kOk);
  // The newest copy lives in the new root, so this read raises no alarm.
  EXPECT_EQ(store_cmd({"cat", id, path("o.img")}).code, kOk);
  CliRun st = store_cmd({"gc", "status"});
  EXPECT_EQ(st.result()["alarms"].size(), 0u);

  ASSERT_EQ(store_cmd({"gc", "delete", old}).code, kOk);
  CliRun status = store_cmd({"gc", "status"});
  EXPECT_EQ(status.result()["roots"][0]["state"], "deleted");
  EXPECT_EQ(store_cmd({"gc", "check"}).code, kOk);
  EXPECT_EQ(store_cmd({"cat", id, path("after.img")}).code, kOk);
}

TEST_F(CliTest, DeleteWithPendingAlarmRefused) {
  init_store();
  std::string id = store_cmd({"upload", write_image("img", random_image(2, 8))}).result()["manifest_id"];
  std::string old = store_cmd({"gc", "status"}).result()["roots"][0]["root_id"];
  store_cmd({"gc", "release", id});
  store_cmd({"gc", "rotate"});
  ASSERT_EQ(store_cmd({"gc", "expire", old}).code, kOk);
  store_cmd({"gc", "tick", "5"});
  // The released manifest is only in the expired root: reading it alarms.
  EXPECT_EQ(store_cmd({"cat", id, path("x.img")}).code, kOk);
  CliRun st = store_cmd({"gc", "status"});
  EXPECT_GE(st.result()["alarms"].size(), 1u);
  CliRun del = store_cmd({"gc", "delete", old});
  EXPECT_EQ(del.code, kLifecycle);
  EXPECT_NE(del.err.find("alarm"), std::string::npos);
  store_cmd({"gc", "ack-alarms"});
  EXPECT_EQ(store_cmd({"gc", "delete", old}).code, kOk);
}

TEST_F(CliTest, UploadWithoutStoreIsValidationError) {
  CliRun r = run({"--store", path("nostore"), "upload", path("img")});
  EXPECT_EQ(r.code, kValidation);
  EXPECT_NE(r.err.find("init"), std::string::npos);
}

TEST_F(CliTest, UnknownConfigFieldRejected) {
  std::ofstream(path("bad.json")) << R"({"chunk_sise": 4096})";
  CliRun r = run({"--store", store(), "--config", path("bad.json"), "init"});
  EXPECT_EQ(r.code, kValidation);
  EXPECT_NE(r.err.find("chunk_sise"), std::string::npos);
}

TEST_F(CliTest, SimulateBundledConfigs) {
  for (const char* name : {"scan_resistance.json", "cold_start.json", "tail_latency.json"}) {
    std::string cfg = kConfigs + "/" + name;
    CliRun a = run({"--json", "--config", cfg, "simulate", "--out", path(std::string("a-") + name)});
    ASSERT_EQ(a.code, kOk) << name << a.err;
    CliRun b = run({"--json", "--config", cfg, "simulate", "--out", path(std::string("b-") + name)});
    ASSERT_EQ(a.result()["files"].size(), b.result()["files"].size());
    for (std::size_t i = 0; i < a.result()["files"].size(); ++i)
      EXPECT_EQ(file_digest(a.result()["files"][i]), file_digest(b.result()["files"][i])) << name;

    std::ifstream f(path(std::string("a-") + name) + "/report.json");
    json report = json::parse(f)["report"];
    std::vector<json> metrics;
    if (report.contains("buckets")) metrics.push_back(report);
    if (report.contains("metrics")) metrics.push_back(report["metrics"]);
    if (report.contains("lru1")) {
      metrics.push_back(report["lru1"]["metrics"]);
      metrics.push_back(report["lru2"]["metrics"]);
    }
    ASSERT_FALSE(metrics.empty()) << name;
    for (const json& m : metrics) {
      for (const json& b : m["buckets"]) {
        if (b["l1_fraction"].is_null()) continue;
        double sum = b["l1_fraction"].get<double>() + b["l2_fraction"].get<double>() + b["l3_fraction"].get<double>();
        EXPECT_NEAR(sum, 1.0, 1e-9) << name;
      }
    }
  }
}

TEST_F(CliTest, SimulateMissingFieldNamed) {
  std::ofstream(path("sim.json")) << R"({"mode": "run", "seed": 1, "workload": {}, "topology": {}})";
  CliRun r = run({"--config", path("sim.json"), "simulate", "--out", path("o")});
  EXPECT_EQ(r.code, kValidation);
  EXPECT_NE(r.err.find("workload."), std::string::npos) << r.err;
}

TEST_F(CliTest, SizeCache) {
  std::ofstream(path("iv.txt")) << "10\n50\n100\n200\n1000\n";
  CliRun r = run({"--json", "size-cache", path("iv.txt"), "--byte-cost", "0.001", "--fetch-cost", "1", "--item-bytes",
               "10"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_DOUBLE_EQ(r.result()["recommended_bytes"].get<double>(), 30.0);
}

TEST_F(CliTest, KeygenRefusesOverwrite) {
  EXPECT_EQ(run({"--store", store(), "keygen", "k1"}).code, kOk);
  EXPECT_EQ(run({"--store", store(), "keygen", "k1"}).code, kValidation);
  EXPECT_EQ(run({"--store", store(), "keygen", "k1", "--force"}).code, kOk);
}
