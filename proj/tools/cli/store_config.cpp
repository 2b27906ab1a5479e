#include "store_config.hpp"

#include <fstream>

#include "cvault/errors.hpp"
#include "cvault/flattener.hpp"

namespace cvault::cli {

using nlohmann::json;

json StoreConfig::to_json() const {
  return {{"chunk_size", chunk_size},
          {"salt_policy", salt_policy == SaltPolicy::fixed ? "static" : "per-root"},
          {"salt", salt},
          {"customer_key_id", customer_key_id},
          {"erasure_k", erasure_k},
          {"l1_capacity_bytes", l1_capacity_bytes},
          {"l2_nodes", l2_nodes},
          {"l2_node_capacity_bytes", l2_node_capacity_bytes},
          {"lru_k", lru_k},
          {"quiet_period", quiet_period},
          {"active_root_count", active_root_count}};
}

namespace {

template <class T>
T unsigned_field(const json& v, const std::string& key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ValidationError("store config: " + key + ": expected a non-negative integer");
  return static_cast<T>(v.get<std::uint64_t>());
}

std::string string_field(const json& v, const std::string& key) {
  if (!v.is_string()) throw ValidationError("store config: " + key + ": expected a string");
  return v.get<std::string>();
}

}  // namespace

void StoreConfig::merge(const json& doc) {
  if (!doc.is_object()) throw ValidationError("store config: expected a JSON object");
  for (const auto& [key, v] : doc.items()) {
    if (key == "chunk_size") chunk_size = unsigned_field<std::size_t>(v, key);
    else if (key == "salt_policy") {
      std::string p = string_field(v, key);
      if (p == "static") salt_policy = SaltPolicy::fixed;
      else if (p == "per-root") salt_policy = SaltPolicy::per_root;
      else throw ValidationError("store config: salt_policy: expected \"static\" or \"per-root\"");
    } else if (key == "salt") salt = string_field(v, key);
    else if (key == "customer_key_id") customer_key_id = string_field(v, key);
    else if (key == "erasure_k") erasure_k = unsigned_field<std::uint32_t>(v, key);
    else if (key == "l1_capacity_bytes") l1_capacity_bytes = unsigned_field<std::size_t>(v, key);
    else if (key == "l2_nodes") l2_nodes = unsigned_field<std::size_t>(v, key);
    else if (key == "l2_node_capacity_bytes") l2_node_capacity_bytes = unsigned_field<std::size_t>(v, key);
    else if (key == "lru_k") lru_k = unsigned_field<std::size_t>(v, key);
    else if (key == "quiet_period") quiet_period = unsigned_field<std::uint64_t>(v, key);
    else if (key == "active_root_count") active_root_count = unsigned_field<std::size_t>(v, key);
    else throw ValidationError("store config: " + key + ": unknown field");
  }
}

void StoreConfig::validate() const {
  validate_chunk_size(chunk_size);
  if (erasure_k < 2 || erasure_k > 16) throw ValidationError("store config: erasure_k: must be in [2, 16]");
  if (chunk_size % erasure_k != 0) throw ValidationError("store config: chunk_size: not divisible by erasure_k");
  if (l2_nodes != 0 && l2_nodes < erasure_k + 1)
    throw ValidationError("store config: l2_nodes: need 0 or at least erasure_k + 1");
  if (lru_k == 0) throw ValidationError("store config: lru_k: must be >= 1");
  if (active_root_count == 0) throw ValidationError("store config: active_root_count: must be >= 1");
  if (customer_key_id.empty()) throw ValidationError("store config: customer_key_id: must not be empty");
  Salt probe = Salt::from_string(salt);
  (void)probe;
}

std::string StoreConfig::hash() const {
  std::string canonical = to_json().dump();
  return to_hex(sha256(as_bytes(canonical))).substr(0, 16);
}

StoreConfig load_store_config(const std::filesystem::path& store_dir, const std::string& override_path) {
  StoreConfig cfg;
  auto merge_file = [&](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ValidationError("cannot open config " + p.string());
    try {
      cfg.merge(json::parse(in));
    } catch (const json::parse_error& e) {
      throw ValidationError("config " + p.string() + ": " + e.what());
    }
  };
  if (std::filesystem::exists(store_dir / "config.json")) merge_file(store_dir / "config.json");
  if (!override_path.empty()) merge_file(override_path);
  cfg.validate();
  return cfg;
}

}  // namespace cvault::cli
