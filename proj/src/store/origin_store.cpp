#include "cvault/origin_store.hpp"

#include <algorithm>

#include "cvault/crypto.hpp"
#include "cvault/errors.hpp"

namespace cvault {

std::string_view to_string(RootState s) {
  switch (s) {
    case RootState::active: return "active";
    case RootState::retired: return "retired";
    case RootState::expired: return "expired";
    case RootState::deleted: return "deleted";
  }
  return "unknown";
}

RootState root_state_from_string(std::string_view s) {
  for (RootState st : {RootState::active, RootState::retired, RootState::expired, RootState::deleted})
    if (to_string(st) == s) return st;
  throw ValidationError("unknown root state '" + std::string(s) + "'");
}

std::string_view to_string(ObjectKind k) { return k == ObjectKind::chunk ? "chunk" : "manifest"; }

OriginStore::OriginStore(std::shared_ptr<ObjectBackend> backend) : backend_(std::move(backend)) {}

Root OriginStore::create_root(const std::string& root_id) {
  std::lock_guard lock(mu_);
  if (std::any_of(roots_.begin(), roots_.end(), [&](const Root& r) { return r.root_id == root_id; })) {
    throw ValidationError("root '" + root_id + "' already exists");
  }
  roots_.push_back(Root{root_id, RootState::active, clock_, false, 0});
  return roots_.back();
}

Root& OriginStore::mutable_root(const std::string& root_id) {
  auto it = std::find_if(roots_.begin(), roots_.end(), [&](const Root& r) { return r.root_id == root_id; });
  if (it == roots_.end()) throw NotFoundError("unknown root '" + root_id + "'");
  return *it;
}

Root OriginStore::root(const std::string& root_id) const {
  std::lock_guard lock(mu_);
  return const_cast<OriginStore*>(this)->mutable_root(root_id);
}

std::vector<Root> OriginStore::roots() const {
  std::lock_guard lock(mu_);
  return roots_;
}

bool OriginStore::has_root(const std::string& root_id) const {
  std::lock_guard lock(mu_);
  return std::any_of(roots_.begin(), roots_.end(), [&](const Root& r) { return r.root_id == root_id; });
}

void OriginStore::transition(const std::string& root_id, RootState to) {
  std::lock_guard lock(mu_);
  Root& r = mutable_root(root_id);
  bool legal = static_cast<int>(to) == static_cast<int>(r.state) + 1;
  if (!legal) {
    throw LifecycleError("root '" + root_id + "' cannot move from " + std::string(to_string(r.state)) + " to " +
                         std::string(to_string(to)));
  }
  if (to == RootState::expired) {
    if (!r.migration_complete) throw LifecycleError("root '" + root_id + "' has not completed migration");
    r.expired_at = clock_;
  }
  r.state = to;
}

void OriginStore::set_migration_complete(const std::string& root_id) {
  std::lock_guard lock(mu_);
  Root& r = mutable_root(root_id);
  if (r.state != RootState::retired) {
    throw LifecycleError("migration_complete may only be set on a retired root; '" + root_id + "' is " +
                         std::string(to_string(r.state)));
  }
  r.migration_complete = true;
}

PutResult OriginStore::put_if_absent(const std::string& root_id, ObjectKind kind, const std::string& name,
                                     ByteView bytes, WriteMode mode) {
  {
    std::lock_guard lock(mu_);
    const Root& r = mutable_root(root_id);
    bool allowed = r.state == RootState::active || (r.state == RootState::retired && mode == WriteMode::migration);
    if (!allowed) {
      throw LifecycleError("root '" + root_id + "' is " + std::string(to_string(r.state)) + " and refuses writes");
    }
  }
  Bytes existing;
  PutResult result = backend_->put_if_absent(root_id, kind, name, bytes, &existing);
  if (result == PutResult::already_present &&
      (existing.size() != bytes.size() || !std::equal(existing.begin(), existing.end(), bytes.begin()))) {
    throw IntegrityError("object '" + name + "' in root '" + root_id + "' exists with different bytes");
  }
  return result;
}

Bytes OriginStore::get(const std::string& root_id, ObjectKind kind, const std::string& name) {
  RootState state;
  {
    std::lock_guard lock(mu_);
    state = mutable_root(root_id).state;
  }
  if (state == RootState::deleted) throw NotFoundError("root '" + root_id + "' is deleted");
  auto bytes = backend_->get(root_id, kind, name);
  if (!bytes) throw NotFoundError(std::string(to_string(kind)) + " '" + name + "' not found in root '" + root_id + "'");
  if (state == RootState::expired) {
    std::lock_guard lock(mu_);
    alarms_.events.push_back(AlarmEvent{root_id, name, clock_});
  }
  if (verify_reads_ && kind == ObjectKind::chunk && chunk_name(sha256(*bytes)) != name) {
    throw IntegrityError("chunk '" + name + "' in root '" + root_id + "' does not match its name");
  }
  return std::move(*bytes);
}

bool OriginStore::contains(const std::string& root_id, ObjectKind kind, const std::string& name) const {
  return backend_->contains(root_id, kind, name);
}

std::optional<Bytes> OriginStore::peek(const std::string& root_id, ObjectKind kind, const std::string& name) const {
  return backend_->get(root_id, kind, name);
}

std::vector<std::string> OriginStore::list(const std::string& root_id, ObjectKind kind) const {
  return backend_->list(root_id, kind);
}

void OriginStore::purge_root(const std::string& root_id) {
  {
    std::lock_guard lock(mu_);
    if (mutable_root(root_id).state != RootState::expired) {
      throw LifecycleError("only expired roots can be purged; '" + root_id + "' is not expired");
    }
  }
  backend_->remove_root(root_id);
  transition(root_id, RootState::deleted);
}

AlarmLog OriginStore::alarms() const {
  std::lock_guard lock(mu_);
  return alarms_;
}

std::size_t OriginStore::acknowledge_alarms() {
  std::lock_guard lock(mu_);
  std::size_t n = alarms_.events.size();
  alarms_.acknowledged.insert(alarms_.acknowledged.end(), alarms_.events.begin(), alarms_.events.end());
  alarms_.events.clear();
  return n;
}

std::uint64_t OriginStore::now() const {
  std::lock_guard lock(mu_);
  return clock_;
}

std::uint64_t OriginStore::tick(std::uint64_t by) {
  std::lock_guard lock(mu_);
  return clock_ += by;
}

namespace {

nlohmann::json event_json(const AlarmEvent& e) { return {{"root", e.root_id}, {"name", e.name}, {"time", e.time}}; }

AlarmEvent event_from(const nlohmann::json& j) {
  return AlarmEvent{j.at("root").get<std::string>(), j.at("name").get<std::string>(), j.at("time").get<std::uint64_t>()};
}

}  // namespace

nlohmann::json OriginStore::metadata() const {
  std::lock_guard lock(mu_);
  nlohmann::json doc;
  doc["clock"] = clock_;
  doc["roots"] = nlohmann::json::array();
  for (const Root& r : roots_) {
    doc["roots"].push_back({{"id", r.root_id},
                            {"state", to_string(r.state)},
                            {"created_at", r.created_at},
                            {"migration_complete", r.migration_complete},
                            {"expired_at", r.expired_at}});
  }
  doc["alarms"] = nlohmann::json::array();
  for (const auto& e : alarms_.events) doc["alarms"].push_back(event_json(e));
  doc["acknowledged_alarms"] = nlohmann::json::array();
  for (const auto& e : alarms_.acknowledged) doc["acknowledged_alarms"].push_back(event_json(e));
  return doc;
}

void OriginStore::load_metadata(const nlohmann::json& doc) {
  std::lock_guard lock(mu_);
  clock_ = doc.value("clock", std::uint64_t{0});
  roots_.clear();
  for (const auto& j : doc.value("roots", nlohmann::json::array())) {
    roots_.push_back(Root{j.at("id").get<std::string>(), root_state_from_string(j.at("state").get<std::string>()),
                          j.value("created_at", std::uint64_t{0}), j.value("migration_complete", false),
                          j.value("expired_at", std::uint64_t{0})});
  }
  alarms_ = AlarmLog{};
  for (const auto& j : doc.value("alarms", nlohmann::json::array())) alarms_.events.push_back(event_from(j));
  for (const auto& j : doc.value("acknowledged_alarms", nlohmann::json::array()))
    alarms_.acknowledged.push_back(event_from(j));
}

}  // namespace cvault
