#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "dot/geometry.hpp"

namespace dot {

inline constexpr int kOctreeDegree = 8;
inline constexpr int kDefaultMaxDepth = 10;

// Handle into the node pool. The generation distinguishes a live node from
// a stale handle whose slot was freed (and possibly reused) by a merge.
struct NodeId {
  static constexpr std::uint32_t kInvalidIndex = std::numeric_limits<std::uint32_t>::max();

  std::uint32_t index = kInvalidIndex;
  std::uint32_t generation = 0;

  constexpr bool operator==(const NodeId&) const = default;
};

// Density plus 3 x B SH coefficients, channel-major: sh[k * B + b].
struct LeafPayload {
  float sigma = 0.0f;
  std::vector<float> sh;

  bool operator==(const LeafPayload&) const = default;
};

struct TreeStats {
  std::size_t leaf_count = 0;
  std::size_t internal_count = 0;
  std::vector<std::size_t> depth_histogram;  // leaves per depth
  std::size_t payload_bytes = 0;
};

bool is_valid_basis_count(int basis_count);

// Sparse octree over a cube with per-leaf payloads. Nodes live in a pool
// with a free list; merges and splits are O(1) and never move live nodes.
//
// Structure is single-writer. Concurrent const access from many threads is
// fine while nobody mutates.
class SparseOctree {
 public:
  // Raw record used by loaders to rebuild a tree with exact pool indices.
  struct Record {
    bool leaf = true;
    std::array<std::uint64_t, 8> children{};
    std::vector<float> payload;  // sigma followed by sh, leaves only
  };

  // Single root leaf with zero payload.
  SparseOctree(const Cube& bounds, int basis_count, int max_depth = kDefaultMaxDepth);

  // Rebuild from pre-order records (root at 0). Throws FormatError on any
  // structural violation.
  static SparseOctree from_records(const Cube& bounds, int basis_count, int max_depth,
                                   std::span<const Record> records);

  const Cube& bounds() const { return bounds_; }
  int basis_count() const { return basis_count_; }
  int max_depth() const { return max_depth_; }
  // Floats per payload: sigma + 3 * B.
  int payload_stride() const { return 1 + 3 * basis_count_; }

  NodeId root() const { return id_at(root_); }
  bool is_valid(NodeId id) const;
  bool is_leaf(NodeId id) const;
  int depth(NodeId id) const;
  Cube cube(NodeId id) const;
  NodeId parent(NodeId id) const;  // invalid handle for the root
  std::array<NodeId, 8> children(NodeId id) const;

  // Live handle for a pool slot; throws HandleError for free slots.
  NodeId id_at(std::uint32_t index) const;
  std::uint32_t capacity() const { return static_cast<std::uint32_t>(nodes_.size()); }
  bool slot_is_leaf(std::uint32_t index) const { return nodes_[index].state == State::kLeaf; }
  bool slot_is_live(std::uint32_t index) const { return nodes_[index].state != State::kFree; }
  int slot_depth(std::uint32_t index) const { return nodes_[index].depth; }
  const std::array<std::uint32_t, 8>& slot_children(std::uint32_t index) const {
    return nodes_[index].children;
  }

  // [sigma, sh...] views for a leaf.
  std::span<const float> payload(NodeId leaf) const;
  std::span<float> mutable_payload(NodeId leaf);
  std::span<const float> slot_payload(std::uint32_t index) const {
    return {payloads_.data() + static_cast<std::size_t>(index) * payload_stride(),
            static_cast<std::size_t>(payload_stride())};
  }
  std::span<float> mutable_slot_payload(std::uint32_t index) {
    return {payloads_.data() + static_cast<std::size_t>(index) * payload_stride(),
            static_cast<std::size_t>(payload_stride())};
  }
  LeafPayload leaf_payload(NodeId leaf) const;
  void set_payload(NodeId leaf, const LeafPayload& payload);

  // Collapse an internal node whose 8 children are all leaves into a leaf
  // carrying the component-wise mean of their payloads.
  NodeId merge_children(NodeId parent);
  // Turn a leaf into an internal node with 8 leaves that copy its payload.
  std::array<NodeId, 8> split_leaf(NodeId leaf);

  // Leaf containing the point under half-open cells.
  std::pair<NodeId, Cube> locate(const Vec3& point) const;

  TreeStats stats() const;
  std::size_t leaf_count() const { return leaf_count_; }
  std::size_t internal_count() const { return internal_count_; }
  // Live leaves in ascending pool index.
  std::vector<NodeId> leaves() const;

  // Incremented by every structural mutation.
  std::uint64_t topology_version() const { return topology_version_; }

  // Copy with nodes renumbered in pre-order from the root. When given,
  // old_to_new receives the index map (kInvalidIndex for free slots).
  SparseOctree compacted(std::vector<std::uint32_t>* old_to_new = nullptr) const;
  // Pool indices in pre-order (root first, children in octant order).
  std::vector<std::uint32_t> preorder() const;

  // Throws PreconditionError describing the first violated invariant.
  void check_invariants() const;

 private:
  enum class State : std::uint8_t { kFree, kLeaf, kInternal };

  struct Node {
    std::array<std::uint32_t, 8> children{};
    std::uint32_t parent = NodeId::kInvalidIndex;
    std::uint32_t generation = 0;
    std::uint8_t depth = 0;
    State state = State::kFree;
    Vec3 center;
  };

  const Node& live(NodeId id) const;
  std::uint32_t allocate();
  void release(std::uint32_t index);

  Cube bounds_;
  int basis_count_;
  int max_depth_;
  std::uint32_t root_ = 0;
  std::vector<Node> nodes_;
  std::vector<float> payloads_;
  std::vector<std::uint32_t> free_list_;
  std::size_t leaf_count_ = 0;
  std::size_t internal_count_ = 0;
  std::uint64_t topology_version_ = 0;
};

// Leaf payload initializer: fills [sigma, sh...] for the cell.
using PayloadSource = std::function<void(const Cube& cell, std::span<float> payload)>;

PayloadSource constant_payload(const LeafPayload& payload);
// Uniform sigma in [sigma_lo, sigma_hi) and sh in [-sh_range, sh_range),
// drawn in leaf creation order.
PayloadSource random_payload(std::uint64_t seed, float sigma_lo, float sigma_hi, float sh_range);

// Complete octree of uniform depth.
SparseOctree build_dense(int depth, const Cube& bounds, int basis_count, const PayloadSource& init,
                         int max_depth = kDefaultMaxDepth);

}  // namespace dot
