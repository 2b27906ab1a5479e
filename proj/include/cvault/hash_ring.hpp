#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "cvault/crypto.hpp"

namespace cvault {

using NodeId = std::uint32_t;

std::uint64_t mix64(std::uint64_t x);
std::uint64_t ring_position(NodeId node, std::uint32_t vnode);
std::uint64_t ring_position(const Digest& name, std::uint32_t stripe);

// Consistent-hash ring with virtual nodes. Stripes of one chunk are placed
// on distinct up nodes: stripe i walks clockwise from its own position and
// skips nodes already holding a lower-numbered stripe of the same chunk.
class HashRing {
 public:
  explicit HashRing(std::uint32_t vnodes_per_node = 100) : vnodes_(vnodes_per_node) {}

  void add_node(NodeId node);
  void remove_node(NodeId node);
  // Down nodes stay in the ring but are skipped by locate.
  void set_up(NodeId node, bool up);
  bool is_up(NodeId node) const;

  std::size_t node_count() const { return up_.size(); }
  std::size_t up_count() const;
  std::vector<NodeId> nodes() const;

  // Node for one stripe given the placement of the whole chunk. Throws
  // UnavailableError when no node is up.
  NodeId locate(const Digest& name, std::uint32_t stripe) const;
  // Placement of stripes 0..count-1. Distinct whenever at least `count`
  // nodes are up; otherwise nodes repeat.
  std::vector<NodeId> locate_stripes(const Digest& name, std::uint32_t count) const;

 private:
  void rebuild();

  std::uint32_t vnodes_;
  std::map<NodeId, bool> up_;
  std::vector<std::pair<std::uint64_t, NodeId>> ring_;  // sorted by position
};

}  // namespace cvault
