#include "cvault/hash_ring.hpp"

#include <algorithm>
#include <cstring>

#include "cvault/errors.hpp"

namespace cvault {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t ring_position(NodeId node, std::uint32_t vnode) {
  return mix64(mix64(node) ^ mix64(0x100000000ULL + vnode));
}

std::uint64_t ring_position(const Digest& name, std::uint32_t stripe) {
  std::uint64_t a, b;
  std::memcpy(&a, name.data(), 8);
  std::memcpy(&b, name.data() + 8, 8);
  return mix64(a ^ mix64(b + stripe));
}

void HashRing::add_node(NodeId node) {
  if (up_.emplace(node, true).second) rebuild();
}

void HashRing::remove_node(NodeId node) {
  if (up_.erase(node)) rebuild();
}

void HashRing::set_up(NodeId node, bool up) {
  auto it = up_.find(node);
  if (it == up_.end()) throw NotFoundError("unknown cache node " + std::to_string(node));
  it->second = up;
}

bool HashRing::is_up(NodeId node) const {
  auto it = up_.find(node);
  return it != up_.end() && it->second;
}

std::size_t HashRing::up_count() const {
  return static_cast<std::size_t>(std::count_if(up_.begin(), up_.end(), [](const auto& kv) { return kv.second; }));
}

std::vector<NodeId> HashRing::nodes() const {
  std::vector<NodeId> out;
  for (const auto& [id, up] : up_) out.push_back(id);
  return out;
}

void HashRing::rebuild() {
  ring_.clear();
  ring_.reserve(up_.size() * vnodes_);
  for (const auto& [id, up] : up_)
    for (std::uint32_t v = 0; v < vnodes_; ++v) ring_.emplace_back(ring_position(id, v), id);
  std::sort(ring_.begin(), ring_.end());
}

std::vector<NodeId> HashRing::locate_stripes(const Digest& name, std::uint32_t count) const {
  const std::size_t up = up_count();
  if (up == 0) throw UnavailableError("no cache nodes are up");
  std::vector<NodeId> chosen;
  chosen.reserve(count);
  for (std::uint32_t s = 0; s < count; ++s) {
    const bool distinct = chosen.size() < up;
    auto start = std::lower_bound(ring_.begin(), ring_.end(), std::make_pair(ring_position(name, s), NodeId{0}));
    std::size_t pos = static_cast<std::size_t>(start - ring_.begin());
    for (std::size_t step = 0; step < ring_.size(); ++step) {
      NodeId candidate = ring_[(pos + step) % ring_.size()].second;
      if (!up_.at(candidate)) continue;
      if (distinct && std::find(chosen.begin(), chosen.end(), candidate) != chosen.end()) continue;
      chosen.push_back(candidate);
      break;
    }
  }
  return chosen;
}

NodeId HashRing::locate(const Digest& name, std::uint32_t stripe) const {
  return locate_stripes(name, stripe + 1)[stripe];
}

}  // namespace cvault
