#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "cvault/crypto.hpp"

namespace cvault::cli {

enum class SaltPolicy { fixed, per_root };

struct StoreConfig {
  std::size_t chunk_size = 524288;
  SaltPolicy salt_policy = SaltPolicy::per_root;
  // The whole salt under the fixed policy; the prefix under per-root.
  std::string salt = "cvault";
  std::string customer_key_id = "default";
  std::uint32_t erasure_k = 4;
  std::size_t l1_capacity_bytes = 256u << 20;
  std::size_t l2_nodes = 0;
  std::size_t l2_node_capacity_bytes = 256u << 20;
  std::size_t lru_k = 2;
  std::uint64_t quiet_period = 1;
  std::size_t active_root_count = 1;

  nlohmann::json to_json() const;
  // Overlays the fields present in `doc`; throws ValidationError naming the
  // field on bad values or unknown keys.
  void merge(const nlohmann::json& doc);
  void validate() const;
  // First 16 hex digits of SHA-256 over the canonical JSON form.
  std::string hash() const;
};

StoreConfig load_store_config(const std::filesystem::path& store_dir, const std::string& override_path);

}  // namespace cvault::cli
