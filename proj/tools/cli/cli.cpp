#include "cli.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "cvault/blockdev.hpp"
#include "cvault/errors.hpp"
#include "cvault/flattener.hpp"
#include "cvault/gc.hpp"
#include "cvault/ingest.hpp"
#include "cvault/sim.hpp"
#include "cvault/sizing.hpp"
#include "cvault/stats.hpp"
#include "store_config.hpp"
#include "trace.hpp"

namespace cvault::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string store = "store";
  std::string config;
  std::optional<std::uint64_t> seed;
  bool json = false;
};

class Output {
 public:
  Output(std::ostream& out, std::ostream& err, bool json) : out_(out), err_(err), json_(json) {}
  std::ostream& text() { return json_ ? err_ : out_; }
  void finish(const json& result) {
    if (json_) out_ << result.dump(2) << '\n';
  }

 private:
  std::ostream& out_;
  std::ostream& err_;
  bool json_;
};

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const fs::path& path, std::string_view text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Advisory exclusive lock held for the lifetime of the object.
class FileLock {
 public:
  explicit FileLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw Error("cannot lock " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

GcConfig gc_config(const StoreConfig& cfg) {
  GcConfig g;
  g.quiet_period = cfg.quiet_period;
  g.active_root_count = cfg.active_root_count;
  g.salt_prefix = cfg.salt;
  return g;
}

// Store directory layout:
//   config.json   resolved StoreConfig written by init
//   keys          customer keyfile
//   state.json    root lifecycle, alarms, logical clock, released manifests
//   uploads.jsonl one UploadReport per line, in upload order
//   gc.lock       advisory lock for state-changing commands
//   objects/      chunk and manifest objects per root
class StoreSession {
 public:
  StoreSession(fs::path dir, const StoreConfig& cfg)
      : dir_(std::move(dir)),
        store_(std::make_shared<DirectoryBackend>(dir_ / "objects")),
        collector_(store_, released_, gc_config(cfg)) {
    if (fs::exists(state_path())) {
      json doc;
      try {
        std::ifstream in(state_path());
        doc = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ValidationError("corrupt " + state_path().string() + ": " + e.what());
      }
      store_.load_metadata(doc.at("store"));
      for (const auto& id : doc.value("released", json::array())) released_.release(id.get<std::string>());
    }
  }

  fs::path state_path() const { return dir_ / "state.json"; }

  void save() {
    json released = json::array();
    for (const auto& id : released_.released()) released.push_back(id);
    json doc{{"store", store_.metadata()}, {"released", released}};
    write_file_atomic(state_path(), doc.dump(2) + "\n");
  }

  OriginStore& store() { return store_; }
  Collector& collector() { return collector_; }
  ReleasedSet& released() { return released_; }

 private:
  fs::path dir_;
  OriginStore store_;
  ReleasedSet released_;
  Collector collector_;
};

void require_store(const fs::path& dir) {
  if (!fs::exists(dir / "state.json"))
    throw ValidationError("no store at " + dir.string() + " (run `cvault init` first)");
}

fs::path keyfile_path(const fs::path& dir) { return dir / "keys"; }

CustomerKey customer_key(const fs::path& dir, const std::string& key_id) {
  fs::path p = keyfile_path(dir);
  if (!fs::exists(p)) throw ValidationError("no keyfile at " + p.string());
  return KeyFile::load(p).get(key_id);
}

CustomerKey random_key(const std::string& id) {
  CustomerKey key;
  key.key_id = id;
  system_random()(key.key);
  return key;
}

Salt upload_salt(const StoreConfig& cfg, const Collector& collector, const std::string& root) {
  return cfg.salt_policy == SaltPolicy::fixed ? Salt::from_string(cfg.salt) : collector.salt_for(root);
}

json root_json(const OriginStore& store, const Root& r) {
  json j{{"root_id", r.root_id},
         {"state", std::string(to_string(r.state))},
         {"created_at", r.created_at},
         {"migration_complete", r.migration_complete}};
  if (r.state == RootState::expired || r.state == RootState::deleted) j["expired_at"] = r.expired_at;
  if (r.state != RootState::deleted) {
    j["manifests"] = store.list(r.root_id, ObjectKind::manifest).size();
    j["chunks"] = store.list(r.root_id, ObjectKind::chunk).size();
  }
  return j;
}

// ---- init / keygen -------------------------------------------------------

int cmd_init(const Globals& g, Output& out) {
  fs::path dir = g.store;
  fs::create_directories(dir / "objects");
  FileLock lock(dir / "gc.lock");
  StoreConfig cfg = load_store_config(dir, g.config);
  if (!fs::exists(dir / "config.json") || !g.config.empty())
    write_file_atomic(dir / "config.json", cfg.to_json().dump(2) + "\n");
  KeyFile keys = fs::exists(keyfile_path(dir)) ? KeyFile::load(keyfile_path(dir)) : KeyFile{};
  bool created_key = false;
  if (!keys.contains(cfg.customer_key_id)) {
    keys.add(random_key(cfg.customer_key_id));
    keys.save(keyfile_path(dir));
    created_key = true;
  }
  StoreSession s(dir, cfg);
  s.collector().bootstrap();
  s.save();
  auto active = s.collector().active_roots();
  out.text() << "store " << dir.string() << " ready\n"
             << "config hash " << cfg.hash() << '\n'
             << "active roots:";
  for (const auto& r : active) out.text() << ' ' << r;
  out.text() << '\n';
  if (created_key) out.text() << "created key '" << cfg.customer_key_id << "'\n";
  out.finish({{"store", dir.string()}, {"config_hash", cfg.hash()}, {"active_roots", active},
              {"created_key", created_key}});
  return kOk;
}

int cmd_keygen(const Globals& g, Output& out, const std::string& id, bool force) {
  fs::path dir = g.store;
  fs::create_directories(dir);
  FileLock lock(dir / "gc.lock");
  KeyFile keys = fs::exists(keyfile_path(dir)) ? KeyFile::load(keyfile_path(dir)) : KeyFile{};
  if (keys.contains(id) && !force) throw ValidationError("key '" + id + "' already exists (use --force)");
  keys.add(random_key(id));
  keys.save(keyfile_path(dir));
  out.text() << "key '" << id << "' written to " << keyfile_path(dir).string() << '\n';
  out.finish({{"key_id", id}, {"keyfile", keyfile_path(dir).string()}});
  return kOk;
}

// ---- flatten -------------------------------------------------------------

int cmd_flatten(const Globals& g, Output& out, const std::string& output, const std::vector<std::string>& layers) {
  StoreConfig cfg = load_store_config(g.store, g.config);
  std::vector<LayerArchive> archives;
  for (const auto& path : layers) archives.push_back(read_tar_file(path));
  FlatImage image = serialize_image(apply_layers(archives));
  write_image_file(output, image);
  std::uint64_t chunks = 0;
  std::uint64_t zero = 0;
  for_each_chunk(image.bytes, cfg.chunk_size, [&](std::uint64_t, bool is_zero, ByteView) {
    ++chunks;
    if (is_zero) ++zero;
  });
  std::string digest = to_hex(sha256(image.bytes));
  out.text() << "wrote " << output << '\n'
             << "image length " << image.length() << " bytes, " << image.entry_count << " entries\n"
             << "chunks " << chunks << " (" << zero << " zero) at chunk size " << cfg.chunk_size << '\n'
             << "sha256 " << digest << '\n';
  out.finish({{"image", output},
              {"image_length", image.length()},
              {"entries", image.entry_count},
              {"chunk_size", cfg.chunk_size},
              {"chunks", chunks},
              {"zero_chunks", zero},
              {"sha256", digest},
              {"config_hash", cfg.hash()}});
  return kOk;
}

// ---- upload --------------------------------------------------------------

json report_json(const UploadReport& r) {
  return {{"manifest_id", r.manifest_id},
          {"root_id", r.root_id},
          {"image_length", r.image_length},
          {"total_chunks", r.total_chunks},
          {"zero_chunks", r.zero_chunks},
          {"distinct_chunks", r.distinct_chunks},
          {"unique_chunks", r.unique_chunks},
          {"unique_fraction", r.unique_fraction()},
          {"manifest_bytes", r.manifest_bytes},
          {"manifest_already_present", r.manifest_already_present}};
}

UploadReport report_from_json(const json& j) {
  UploadReport r;
  r.manifest_id = j.at("manifest_id").get<std::string>();
  r.root_id = j.at("root_id").get<std::string>();
  r.image_length = j.at("image_length").get<std::uint64_t>();
  r.total_chunks = j.at("total_chunks").get<std::uint64_t>();
  r.zero_chunks = j.at("zero_chunks").get<std::uint64_t>();
  r.distinct_chunks = j.at("distinct_chunks").get<std::uint64_t>();
  r.unique_chunks = j.at("unique_chunks").get<std::uint64_t>();
  r.manifest_bytes = j.at("manifest_bytes").get<std::uint64_t>();
  r.manifest_already_present = j.at("manifest_already_present").get<bool>();
  return r;
}

int cmd_upload(const Globals& g, Output& out, const std::string& image_path, std::string key_id) {
  fs::path dir = g.store;
  require_store(dir);
  StoreConfig cfg = load_store_config(dir, g.config);
  if (key_id.empty()) key_id = cfg.customer_key_id;
  StoreSession s(dir, cfg);
  if (s.collector().active_roots().empty()) throw LifecycleError("no active root (run `cvault gc rotate`)");
  UploadOptions opt;
  opt.root_id = s.collector().active_root_for(key_id);
  opt.chunk_size = cfg.chunk_size;
  opt.salt = upload_salt(cfg, s.collector(), opt.root_id);
  opt.customer = customer_key(dir, key_id);
  Bytes image = read_file(image_path);
  UploadReport r = upload_image(s.store(), image, opt);
  {
    std::ofstream log(dir / "uploads.jsonl", std::ios::app);
    log << report_json(r).dump() << '\n';
  }
  out.text() << "manifest " << r.manifest_id << " in " << r.root_id << '\n'
             << "chunks " << r.total_chunks << " (" << r.zero_chunks << " zero, " << r.distinct_chunks
             << " distinct)\n"
             << "unique chunks " << r.unique_chunks << " (" << r.unique_fraction() * 100.0 << "%)\n";
  json j = report_json(r);
  j["config_hash"] = cfg.hash();
  out.finish(j);
  return kOk;
}

// ---- reads ---------------------------------------------------------------

// Counts fetches per tier around a manifest-backed image.
class CountingImage : public BaseImage {
 public:
  explicit CountingImage(ManifestImage& inner) : inner_(inner) {}
  std::uint64_t length() const override { return inner_.length(); }
  std::uint32_t chunk_size() const override { return inner_.chunk_size(); }
  std::size_t chunk_count() const override { return inner_.chunk_count(); }
  bool is_zero_chunk(std::size_t i) const override { return inner_.is_zero_chunk(i); }
  ChunkPtr chunk(std::size_t i) override {
    ChunkPtr c = inner_.chunk(i);
    ++tiers[static_cast<int>(inner_.last_fetch().source)];
    return c;
  }
  std::uint64_t tiers[3] = {0, 0, 0};

 private:
  ManifestImage& inner_;
};

struct ReadStack {
  ReadStack(StoreSession& s, const StoreConfig& cfg, const std::string& manifest, const CustomerKey& key)
      : location(s.collector().locate_manifest(manifest)),
        origin(s.store(), location.root_id),
        l1(cfg.l1_capacity_bytes, cfg.lru_k),
        l2(cfg.l2_nodes ? std::make_unique<L2Cluster>(cfg.l2_nodes, cfg.l2_node_capacity_bytes, cfg.lru_k) : nullptr),
        fetcher(l1, l2.get(), origin, FetchPolicy{cfg.erasure_k, true, true, true}),
        image(open_manifest(s.store().get(location.root_id, ObjectKind::manifest, manifest), key), fetcher),
        counting(image) {}

  ManifestLocation location;
  StoreOrigin origin;
  L1Cache l1;
  std::unique_ptr<L2Cluster> l2;
  ChunkFetcher fetcher;
  ManifestImage image;
  CountingImage counting;
};

[[noreturn]] void rethrow_integrity(const IntegrityError& e) {
  std::string where = e.chunk_index() >= 0 ? " at chunk " + std::to_string(e.chunk_index()) : "";
  throw IntegrityError(std::string("integrity failure") + where + ": " + e.what(), e.chunk_index());
}

int cmd_read_bench(const Globals& g, Output& out, const std::string& manifest, const std::string& trace_path,
                   std::string key_id, std::size_t passes, double touch_fraction, bool per_read) {
  fs::path dir = g.store;
  require_store(dir);
  StoreConfig cfg = load_store_config(dir, g.config);
  if (key_id.empty()) key_id = cfg.customer_key_id;
  FileLock lock(dir / "gc.lock");
  StoreSession s(dir, cfg);
  CustomerKey key = customer_key(dir, key_id);
  ReadStack stack(s, cfg, manifest, key);

  std::vector<TraceOp> trace;
  if (!trace_path.empty()) {
    trace = parse_trace_file(trace_path);
  } else {
    trace = default_trace(stack.image.length(), touch_fraction, g.seed.value_or(1));
  }
  for (const TraceOp& op : trace) {
    std::uint64_t len = op.kind == TraceOp::read ? op.length : op.data.size();
    if (op.offset > stack.image.length() || len > stack.image.length() - op.offset)
      throw ValidationError("trace line " + std::to_string(op.line) + ": range exceeds image length " +
                            std::to_string(stack.image.length()));
  }

  json pass_reports = json::array();
  for (std::size_t pass = 0; pass < passes; ++pass) {
    DeviceView view(stack.counting);
    std::uint64_t before[3] = {stack.counting.tiers[0], stack.counting.tiers[1], stack.counting.tiers[2]};
    std::vector<double> latencies;
    json reads = json::array();
    std::uint64_t writes = 0;
    try {
      for (const TraceOp& op : trace) {
        std::uint64_t t0[3] = {stack.counting.tiers[0], stack.counting.tiers[1], stack.counting.tiers[2]};
        auto start = std::chrono::steady_clock::now();
        if (op.kind == TraceOp::read) {
          view.read(op.offset, op.length);
        } else {
          view.write(op.offset, op.data);
          ++writes;
        }
        double us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
        if (op.kind == TraceOp::read) latencies.push_back(us);
        if (per_read) {
          reads.push_back({{"op", op.kind == TraceOp::read ? "R" : "W"},
                           {"offset", op.offset},
                           {"length", op.kind == TraceOp::read ? op.length : op.data.size()},
                           {"latency_us", us},
                           {"l1", stack.counting.tiers[0] - t0[0]},
                           {"l2", stack.counting.tiers[1] - t0[1]},
                           {"l3", stack.counting.tiers[2] - t0[2]}});
        }
      }
    } catch (const IntegrityError& e) {
      s.save();
      rethrow_integrity(e);
    }
    bool subset = std::includes(view.touched_chunks().begin(), view.touched_chunks().end(),
                                view.fetched_chunks().begin(), view.fetched_chunks().end());
    std::uint64_t fetch[3];
    for (int i = 0; i < 3; ++i) fetch[i] = stack.counting.tiers[i] - before[i];
    std::uint64_t total = fetch[0] + fetch[1] + fetch[2];
    json p{{"pass", pass + 1},
           {"reads", latencies.size()},
           {"writes", writes},
           {"chunk_fetches", total},
           {"l1", fetch[0]},
           {"l2", fetch[1]},
           {"l3", fetch[2]},
           {"l1_fraction", total ? static_cast<double>(fetch[0]) / static_cast<double>(total) : 0.0},
           {"fetched_chunks", view.fetched_chunks().size()},
           {"touched_chunks", view.touched_chunks().size()},
           {"fetched_subset_of_touched", subset},
           {"read_latency_us",
            {{"p50", percentile(latencies, 0.5)}, {"p99", percentile(latencies, 0.99)}, {"max", percentile(latencies, 1.0)}}}};
    if (per_read) p["per_read"] = reads;
    out.text() << "pass " << pass + 1 << ": " << latencies.size() << " reads, " << writes << " writes, " << total
               << " chunk fetches (L1 " << fetch[0] << ", L2 " << fetch[1] << ", L3 " << fetch[2] << "), "
               << view.fetched_chunks().size() << " chunks fetched of " << view.touched_chunks().size()
               << " touched, read p50 " << percentile(latencies, 0.5) << "us\n";
    pass_reports.push_back(p);
  }
  s.save();
  out.text() << "config hash " << cfg.hash() << '\n';
  out.finish({{"manifest_id", manifest},
              {"root_id", stack.location.root_id},
              {"migrated_on_access", stack.location.migrated},
              {"trace_ops", trace.size()},
              {"passes", pass_reports},
              {"config_hash", cfg.hash()}});
  return kOk;
}

int cmd_cat(const Globals& g, Output& out, const std::string& manifest, const std::string& output,
            std::string key_id) {
  fs::path dir = g.store;
  require_store(dir);
  StoreConfig cfg = load_store_config(dir, g.config);
  if (key_id.empty()) key_id = cfg.customer_key_id;
  FileLock lock(dir / "gc.lock");
  StoreSession s(dir, cfg);
  ReadStack stack(s, cfg, manifest, customer_key(dir, key_id));
  DeviceView view(stack.counting);
  Bytes bytes;
  try {
    bytes = view.read(0, view.length());
  } catch (const IntegrityError& e) {
    s.save();
    rethrow_integrity(e);
  }
  s.save();
  std::ofstream f(output, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("cannot write " + output);
  std::string digest = to_hex(sha256(bytes));
  out.text() << "wrote " << bytes.size() << " bytes to " << output << " from " << stack.location.root_id
             << "\nsha256 " << digest << '\n';
  out.finish({{"manifest_id", manifest}, {"root_id", stack.location.root_id}, {"bytes", bytes.size()},
              {"sha256", digest}, {"output", output}});
  return kOk;
}

// ---- gc ------------------------------------------------------------------

struct GcArgs {
  std::string verb;
  std::vector<std::string> operands;
  std::string manifest;
  std::string from;
  std::string to;
};

int cmd_gc(const Globals& g, Output& out, const GcArgs& a) {
  fs::path dir = g.store;
  require_store(dir);
  StoreConfig cfg = load_store_config(dir, g.config);
  FileLock lock(dir / "gc.lock");
  StoreSession s(dir, cfg);
  Collector& c = s.collector();
  auto operand = [&](const char* what) -> const std::string& {
    if (a.operands.size() != 1) throw ValidationError("gc " + a.verb + " needs exactly one " + what);
    return a.operands[0];
  };
  json result{{"verb", a.verb}};

  if (a.verb == "rotate") {
    auto fresh = c.rotate_root();
    out.text() << "active roots now:";
    for (const auto& r : fresh) out.text() << ' ' << r;
    out.text() << '\n';
    result["active_roots"] = fresh;
  } else if (a.verb == "migrate") {
    if (!a.manifest.empty()) {
      if (a.from.empty() || a.to.empty()) throw ValidationError("gc migrate --manifest needs --from and --to");
      c.migrate_manifest(a.manifest, a.from, a.to);
      out.text() << "migrated " << a.manifest << " from " << a.from << " to " << a.to << '\n';
      result["migrated"] = 1;
    } else {
      std::size_t moved = c.sweep();
      out.text() << "migrated " << moved << " manifests\n";
      result["migrated"] = moved;
    }
  } else if (a.verb == "expire") {
    c.expire_root(operand("root id"));
    out.text() << "expired " << a.operands[0] << '\n';
    result["root_id"] = a.operands[0];
  } else if (a.verb == "delete") {
    c.delete_root(operand("root id"));
    out.text() << "deleted " << a.operands[0] << '\n';
    result["root_id"] = a.operands[0];
  } else if (a.verb == "ack-alarms") {
    std::size_t n = s.store().acknowledge_alarms();
    out.text() << "acknowledged " << n << " alarms\n";
    result["acknowledged"] = n;
  } else if (a.verb == "tick") {
    std::uint64_t by = 1;
    if (!a.operands.empty()) {
      try {
        by = std::stoull(a.operands[0]);
      } catch (const std::exception&) {
        throw ValidationError("gc tick: bad count '" + a.operands[0] + "'");
      }
    }
    result["now"] = s.store().tick(by);
    out.text() << "clock " << result["now"].get<std::uint64_t>() << '\n';
  } else if (a.verb == "release") {
    s.released().release(operand("manifest id"));
    out.text() << "released " << a.operands[0] << '\n';
    result["manifest_id"] = a.operands[0];
  } else if (a.verb == "check") {
    auto violations = check_closure(s.store());
    for (const auto& v : violations) out.text() << "violation: " << v << '\n';
    out.text() << violations.size() << " closure violations\n";
    result["violations"] = violations;
    s.save();
    out.finish(result);
    return violations.empty() ? kOk : kIntegrity;
  } else if (a.verb != "status") {
    throw ValidationError("unknown gc verb '" + a.verb + "'");
  }

  s.save();
  json roots = json::array();
  for (const Root& r : s.store().roots()) roots.push_back(root_json(s.store(), r));
  AlarmLog alarms = s.store().alarms();
  json events = json::array();
  for (const auto& e : alarms.events) events.push_back({{"root", e.root_id}, {"name", e.name}, {"time", e.time}});
  result["roots"] = roots;
  result["alarms"] = events;
  result["acknowledged_alarms"] = alarms.acknowledged.size();
  result["now"] = s.store().now();
  result["config_hash"] = cfg.hash();
  if (a.verb == "status") {
    out.text() << "clock " << s.store().now() << "  config hash " << cfg.hash() << '\n';
    for (const auto& r : roots) {
      out.text() << "  " << r["root_id"].get<std::string>() << "  " << r["state"].get<std::string>()
                 << (r["migration_complete"].get<bool>() ? "  migration-complete" : "");
      if (r.contains("manifests"))
        out.text() << "  manifests=" << r["manifests"].get<std::size_t>() << " chunks=" << r["chunks"].get<std::size_t>();
      out.text() << '\n';
    }
    out.text() << "pending alarms: " << alarms.events.size() << '\n';
    for (const auto& e : alarms.events)
      out.text() << "  read of " << e.name << " from expired " << e.root_id << " at " << e.time << '\n';
  }
  out.finish(result);
  return kOk;
}

// ---- simulate / stats / size-cache ---------------------------------------

int cmd_simulate(const Globals& g, Output& out, const std::string& out_dir) {
  if (g.config.empty()) throw ValidationError("simulate needs --config <file>");
  sim::SimConfig cfg = sim::load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  std::string hash = to_hex(sha256(as_bytes(sim::config_to_json(cfg).dump()))).substr(0, 16);
  auto files = sim::write_reports(cfg, out_dir);
  out.text() << "config hash " << hash << '\n';
  json written = json::array();
  for (const auto& f : files) {
    out.text() << "wrote " << f.string() << '\n';
    written.push_back(f.string());
  }
  out.finish({{"config_hash", hash}, {"seed", cfg.seed}, {"files", written}});
  return kOk;
}

int cmd_stats(const Globals& g, Output& out, const std::string& csv) {
  fs::path log = fs::path(g.store) / "uploads.jsonl";
  std::vector<UploadReport> reports;
  if (fs::exists(log)) {
    std::ifstream in(log);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) reports.push_back(report_from_json(json::parse(line)));
    }
  }
  DedupStats st = dedup_stats(reports);
  out.text() << "uploads " << st.uploads << '\n'
             << "uploads with zero unique chunks " << st.fraction_zero_unique_uploads * 100.0 << "%\n"
             << "mean unique fraction (non-trivial) " << st.mean_nontrivial_fraction * 100.0 << "%\n"
             << "median unique fraction (non-trivial) " << st.median_nontrivial_fraction * 100.0 << "%\n";
  if (!csv.empty()) {
    std::ofstream f(csv);
    f << "value,cumulative_fraction\n";
    for (const auto& [v, p] : st.ecdf) f << v << ',' << p << '\n';
    out.text() << "wrote " << csv << '\n';
  }
  json ecdf = json::array();
  for (const auto& [v, p] : st.ecdf) ecdf.push_back({v, p});
  out.finish({{"uploads", st.uploads},
              {"fraction_zero_unique_uploads", st.fraction_zero_unique_uploads},
              {"mean_nontrivial_fraction", st.mean_nontrivial_fraction},
              {"median_nontrivial_fraction", st.median_nontrivial_fraction},
              {"unique_fractions", st.unique_fractions},
              {"ecdf", ecdf}});
  return kOk;
}

int cmd_size_cache(Output& out, SizingInputs in, const std::string& intervals_path) {
  std::ifstream f(intervals_path);
  if (!f) throw ValidationError("cannot open " + intervals_path);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double interval = 0;
    if (!(ls >> interval)) throw ValidationError("bad interval line '" + line + "'");
    in.reuse_intervals_s.push_back(interval);
    double rate;
    if (ls >> rate) in.access_rates.push_back(rate);
  }
  if (!in.access_rates.empty() && in.access_rates.size() != in.reuse_intervals_s.size())
    throw ValidationError("either every line or no line may carry an access rate");
  SizingReport r = size_cache(in);
  out.text() << "break-even reuse interval " << r.break_even_interval_s << " s\n"
             << "break-even size " << r.break_even_bytes << " bytes\n"
             << "hit-rate goal size " << r.hit_rate_goal_bytes << " bytes\n"
             << "recommended size " << r.recommended_bytes << " bytes (hit rate " << r.achieved_hit_rate << ")\n";
  out.finish({{"break_even_interval_s", r.break_even_interval_s},
              {"break_even_bytes", r.break_even_bytes},
              {"hit_rate_goal_bytes", r.hit_rate_goal_bytes},
              {"recommended_bytes", r.recommended_bytes},
              {"achieved_hit_rate", r.achieved_hit_rate}});
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Content-addressed, convergently encrypted container image store"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--store", g.store, "Store directory")->capture_default_str();
  app.add_option("--config", g.config, "Store config (or simulator config for simulate)");
  app.add_option("--seed", g.seed, "Random seed");
  app.add_flag("--json", g.json, "Print a JSON result on stdout");

  std::function<int(Output&)> action;

  auto* init = app.add_subcommand("init", "Create a store with a key and an active root");
  init->callback([&] { action = [&](Output& o) { return cmd_init(g, o); }; });

  std::string key_id;
  bool force = false;
  auto* keygen = app.add_subcommand("keygen", "Add a random customer key to the keyfile");
  keygen->add_option("key_id", key_id)->required();
  keygen->add_flag("--force", force);
  keygen->callback([&] { action = [&](Output& o) { return cmd_keygen(g, o, key_id, force); }; });

  std::string output;
  std::vector<std::string> layers;
  auto* flatten = app.add_subcommand("flatten", "Flatten layer tars into an image");
  flatten->add_option("output", output, "Image file to write")->required();
  flatten->add_option("layers", layers, "Layer tar files, lowest first");
  flatten->callback([&] { action = [&](Output& o) { return cmd_flatten(g, o, output, layers); }; });

  std::string image;
  std::string key_opt;
  auto* upload = app.add_subcommand("upload", "Encrypt and store an image");
  upload->add_option("image", image)->required();
  upload->add_option("--key", key_opt, "Customer key id");
  upload->callback([&] { action = [&](Output& o) { return cmd_upload(g, o, image, key_opt); }; });

  std::string manifest;
  std::string trace;
  std::size_t passes = 1;
  double fraction = 0.064;
  bool per_read = false;
  auto* bench = app.add_subcommand("read-bench", "Replay a trace through the block device");
  bench->add_option("manifest", manifest)->required();
  bench->add_option("trace", trace, "Trace file; default touches --touch-fraction of pages");
  bench->add_option("--key", key_opt);
  bench->add_option("--passes", passes)->check(CLI::PositiveNumber);
  bench->add_option("--touch-fraction", fraction)->check(CLI::Range(0.0, 1.0));
  bench->add_flag("--per-read", per_read, "Include every read in the JSON result");
  bench->callback([&] {
    action = [&](Output& o) { return cmd_read_bench(g, o, manifest, trace, key_opt, passes, fraction, per_read); };
  });

  auto* cat = app.add_subcommand("cat", "Reassemble an image from the store");
  cat->add_option("manifest", manifest)->required();
  cat->add_option("output", output)->required();
  cat->add_option("--key", key_opt);
  cat->callback([&] { action = [&](Output& o) { return cmd_cat(g, o, manifest, output, key_opt); }; });

  GcArgs gc_args;
  auto* gc = app.add_subcommand("gc", "Root lifecycle: rotate migrate expire delete ack-alarms status tick release check");
  gc->add_option("verb", gc_args.verb)
      ->required()
      ->check(CLI::IsMember({"rotate", "migrate", "expire", "delete", "ack-alarms", "status", "tick", "release",
                             "check"}));
  gc->add_option("operands", gc_args.operands);
  gc->add_option("--manifest", gc_args.manifest);
  gc->add_option("--from", gc_args.from);
  gc->add_option("--to", gc_args.to);
  gc->callback([&] { action = [&](Output& o) { return cmd_gc(g, o, gc_args); }; });

  std::string out_dir = "sim-out";
  auto* simulate = app.add_subcommand("simulate", "Run the simulator on --config");
  simulate->add_option("--out", out_dir, "Report directory")->capture_default_str();
  simulate->callback([&] { action = [&](Output& o) { return cmd_simulate(g, o, out_dir); }; });

  std::string csv;
  auto* stats = app.add_subcommand("stats", "Deduplication statistics over the upload log");
  stats->add_option("--csv", csv, "Write the unique-fraction eCDF here");
  stats->callback([&] { action = [&](Output& o) { return cmd_stats(g, o, csv); }; });

  SizingInputs sizing;
  std::string intervals;
  auto* size = app.add_subcommand("size-cache", "Cache size from per-item reuse intervals");
  size->add_option("intervals", intervals, "One reuse interval in seconds per line, optional access rate")
      ->required();
  size->add_option("--byte-cost", sizing.cost_per_byte_second, "Cost per byte-second retained")->required();
  size->add_option("--fetch-cost", sizing.cost_per_fetch, "Cost per origin fetch")->required();
  size->add_option("--item-bytes", sizing.item_bytes)->required();
  size->add_option("--hit-rate-goal", sizing.hit_rate_goal)->check(CLI::Range(0.0, 1.0));
  size->callback([&] { action = [&](Output& o) { return cmd_size_cache(o, sizing, intervals); }; });

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }

  Output o(out, err, g.json);
  auto fail = [&](const char* kind, const std::exception& e, int code) {
    err << kind << ": " << e.what() << '\n';
    if (g.json) out << json{{"error", kind}, {"message", e.what()}, {"exit_code", code}}.dump() << '\n';
    return code;
  };
  try {
    return action(o);
  } catch (const ValidationError& e) {
    return fail("validation error", e, kValidation);
  } catch (const IntegrityError& e) {
    return fail("integrity error", e, kIntegrity);
  } catch (const LifecycleError& e) {
    return fail("lifecycle refusal", e, kLifecycle);
  } catch (const std::exception& e) {
    return fail("error", e, kFailure);
  }
}

}  // namespace cvault::cli
