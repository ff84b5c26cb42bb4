#include "dot/octree.hpp"

#include <atomic>
#include <cmath>
#include <memory>
#include <random>
#include <string>

#include "dot/error.hpp"

namespace dot {

namespace {

std::uint64_t next_topology_version() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

FormatError structure_error(const std::string& what) {
  return FormatError(FormatError::Kind::kStructure, "tree structure: " + what);
}

}  // namespace

bool is_valid_basis_count(int basis_count) {
  return basis_count == 1 || basis_count == 4 || basis_count == 9 || basis_count == 16;
}

SparseOctree::SparseOctree(const Cube& bounds, int basis_count, int max_depth)
    : bounds_(bounds), basis_count_(basis_count), max_depth_(max_depth) {
  if (!is_valid_basis_count(basis_count)) {
    throw ConfigError("basis count must be 1, 4, 9 or 16, got " + std::to_string(basis_count));
  }
  if (max_depth < 0 || max_depth > 20) {
    throw ConfigError("max depth must be in [0, 20], got " + std::to_string(max_depth));
  }
  if (!(bounds.half > 0.0) || !std::isfinite(bounds.half)) {
    throw ConfigError("bounds half-extent must be positive and finite");
  }
  root_ = allocate();
  Node& root = nodes_[root_];
  root.state = State::kLeaf;
  root.depth = 0;
  root.center = bounds.center;
  leaf_count_ = 1;
  topology_version_ = next_topology_version();
}

std::uint32_t SparseOctree::allocate() {
  std::uint32_t index;
  if (!free_list_.empty()) {
    index = free_list_.back();
    free_list_.pop_back();
  } else {
    index = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    payloads_.resize(payloads_.size() + payload_stride(), 0.0f);
  }
  Node& node = nodes_[index];
  node.children.fill(NodeId::kInvalidIndex);
  node.parent = NodeId::kInvalidIndex;
  return index;
}

void SparseOctree::release(std::uint32_t index) {
  Node& node = nodes_[index];
  node.state = State::kFree;
  node.generation += 1;
  node.parent = NodeId::kInvalidIndex;
  free_list_.push_back(index);
}

const SparseOctree::Node& SparseOctree::live(NodeId id) const {
  if (id.index >= nodes_.size()) throw HandleError("node handle out of range");
  const Node& node = nodes_[id.index];
  if (node.state == State::kFree || node.generation != id.generation) {
    throw HandleError("stale node handle " + std::to_string(id.index));
  }
  return node;
}

bool SparseOctree::is_valid(NodeId id) const {
  return id.index < nodes_.size() && nodes_[id.index].state != State::kFree &&
         nodes_[id.index].generation == id.generation;
}

bool SparseOctree::is_leaf(NodeId id) const { return live(id).state == State::kLeaf; }

int SparseOctree::depth(NodeId id) const { return live(id).depth; }

Cube SparseOctree::cube(NodeId id) const {
  const Node& node = live(id);
  return {node.center, std::ldexp(bounds_.half, -static_cast<int>(node.depth))};
}

NodeId SparseOctree::parent(NodeId id) const {
  const Node& node = live(id);
  if (node.parent == NodeId::kInvalidIndex) return {};
  return id_at(node.parent);
}

std::array<NodeId, 8> SparseOctree::children(NodeId id) const {
  const Node& node = live(id);
  if (node.state != State::kInternal) throw HandleError("children() on a leaf");
  std::array<NodeId, 8> out;
  for (int i = 0; i < 8; ++i) out[i] = id_at(node.children[i]);
  return out;
}

NodeId SparseOctree::id_at(std::uint32_t index) const {
  if (index >= nodes_.size() || nodes_[index].state == State::kFree) {
    throw HandleError("no live node at slot " + std::to_string(index));
  }
  return {index, nodes_[index].generation};
}

std::span<const float> SparseOctree::payload(NodeId leaf) const {
  if (live(leaf).state != State::kLeaf) throw HandleError("payload() on an internal node");
  return slot_payload(leaf.index);
}

std::span<float> SparseOctree::mutable_payload(NodeId leaf) {
  if (live(leaf).state != State::kLeaf) throw HandleError("payload() on an internal node");
  return mutable_slot_payload(leaf.index);
}

LeafPayload SparseOctree::leaf_payload(NodeId leaf) const {
  auto p = payload(leaf);
  return {p[0], std::vector<float>(p.begin() + 1, p.end())};
}

void SparseOctree::set_payload(NodeId leaf, const LeafPayload& payload) {
  if (payload.sh.size() != static_cast<std::size_t>(3 * basis_count_)) {
    throw InputError("payload sh length " + std::to_string(payload.sh.size()) + " != 3 * " +
                     std::to_string(basis_count_));
  }
  auto p = mutable_payload(leaf);
  p[0] = payload.sigma;
  std::copy(payload.sh.begin(), payload.sh.end(), p.begin() + 1);
}

NodeId SparseOctree::merge_children(NodeId parent) {
  const Node& node = live(parent);
  if (node.state != State::kInternal) throw PreconditionError("merge_children on a leaf");
  const std::array<std::uint32_t, 8> kids = node.children;
  for (std::uint32_t c : kids) {
    if (nodes_[c].state != State::kLeaf) {
      throw PreconditionError("merge_children: child " + std::to_string(c) + " is internal");
    }
  }
  const int stride = payload_stride();
  std::span<float> out = mutable_slot_payload(parent.index);
  for (int k = 0; k < stride; ++k) {
    double sum = 0.0;
    for (std::uint32_t c : kids) sum += static_cast<double>(slot_payload(c)[k]);
    out[k] = static_cast<float>(sum / kOctreeDegree);
  }
  for (int i = 7; i >= 0; --i) release(kids[i]);
  Node& p = nodes_[parent.index];
  p.state = State::kLeaf;
  p.children.fill(NodeId::kInvalidIndex);
  leaf_count_ -= 7;
  internal_count_ -= 1;
  topology_version_ = next_topology_version();
  return parent;
}

std::array<NodeId, 8> SparseOctree::split_leaf(NodeId leaf) {
  const Node& node = live(leaf);
  if (node.state != State::kLeaf) throw PreconditionError("split_leaf on an internal node");
  if (node.depth >= max_depth_) {
    throw DepthCappedError("split_leaf: leaf " + std::to_string(leaf.index) +
                           " is at max depth " + std::to_string(max_depth_));
  }
  const int depth = node.depth;
  const Vec3 center = node.center;
  const double half = std::ldexp(bounds_.half, -depth);
  std::array<std::uint32_t, 8> kids;
  for (int i = 0; i < 8; ++i) kids[i] = allocate();
  // allocate() may have grown the pools; re-fetch everything by index.
  const int stride = payload_stride();
  for (int i = 0; i < 8; ++i) {
    Node& child = nodes_[kids[i]];
    child.state = State::kLeaf;
    child.depth = static_cast<std::uint8_t>(depth + 1);
    child.parent = leaf.index;
    child.center = child_center(center, half, i);
    std::copy_n(payloads_.data() + static_cast<std::size_t>(leaf.index) * stride, stride,
                payloads_.data() + static_cast<std::size_t>(kids[i]) * stride);
  }
  Node& p = nodes_[leaf.index];
  p.state = State::kInternal;
  p.children = kids;
  leaf_count_ += 7;
  internal_count_ += 1;
  topology_version_ = next_topology_version();
  std::array<NodeId, 8> out;
  for (int i = 0; i < 8; ++i) out[i] = {kids[i], nodes_[kids[i]].generation};
  return out;
}

std::pair<NodeId, Cube> SparseOctree::locate(const Vec3& point) const {
  if (!bounds_.contains(point)) throw OutOfBoundsError("point outside tree bounds");
  std::uint32_t index = root_;
  double half = bounds_.half;
  while (nodes_[index].state == State::kInternal) {
    const Node& node = nodes_[index];
    index = node.children[octant_of(node.center, point)];
    half *= 0.5;
  }
  return {{index, nodes_[index].generation}, {nodes_[index].center, half}};
}

TreeStats SparseOctree::stats() const {
  TreeStats s;
  s.depth_histogram.assign(static_cast<std::size_t>(max_depth_) + 1, 0);
  for (const Node& node : nodes_) {
    if (node.state == State::kLeaf) {
      s.leaf_count += 1;
      s.depth_histogram[node.depth] += 1;
    } else if (node.state == State::kInternal) {
      s.internal_count += 1;
    }
  }
  s.payload_bytes = s.leaf_count * static_cast<std::size_t>(payload_stride()) * sizeof(float);
  return s;
}

std::vector<NodeId> SparseOctree::leaves() const {
  std::vector<NodeId> out;
  out.reserve(leaf_count_);
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].state == State::kLeaf) out.push_back({i, nodes_[i].generation});
  }
  return out;
}

std::vector<std::uint32_t> SparseOctree::preorder() const {
  std::vector<std::uint32_t> order;
  order.reserve(leaf_count_ + internal_count_);
  std::vector<std::uint32_t> stack{root_};
  while (!stack.empty()) {
    const std::uint32_t index = stack.back();
    stack.pop_back();
    order.push_back(index);
    const Node& node = nodes_[index];
    if (node.state == State::kInternal) {
      for (int i = 7; i >= 0; --i) stack.push_back(node.children[i]);
    }
  }
  return order;
}

SparseOctree SparseOctree::compacted(std::vector<std::uint32_t>* old_to_new) const {
  const std::vector<std::uint32_t> order = preorder();
  std::vector<std::uint32_t> remap(nodes_.size(), NodeId::kInvalidIndex);
  for (std::uint32_t i = 0; i < order.size(); ++i) remap[order[i]] = i;

  SparseOctree out(bounds_, basis_count_, max_depth_);
  out.nodes_.assign(order.size(), Node{});
  out.payloads_.assign(order.size() * static_cast<std::size_t>(payload_stride()), 0.0f);
  out.root_ = 0;
  const int stride = payload_stride();
  for (std::uint32_t i = 0; i < order.size(); ++i) {
    const Node& src = nodes_[order[i]];
    Node& dst = out.nodes_[i];
    dst = src;
    dst.generation = 0;
    dst.parent = src.parent == NodeId::kInvalidIndex ? NodeId::kInvalidIndex : remap[src.parent];
    if (src.state == State::kInternal) {
      for (int c = 0; c < 8; ++c) dst.children[c] = remap[src.children[c]];
    }
    std::copy_n(payloads_.data() + static_cast<std::size_t>(order[i]) * stride, stride,
                out.payloads_.data() + static_cast<std::size_t>(i) * stride);
  }
  out.leaf_count_ = leaf_count_;
  out.internal_count_ = internal_count_;
  out.topology_version_ = next_topology_version();
  if (old_to_new) *old_to_new = std::move(remap);
  return out;
}

SparseOctree SparseOctree::from_records(const Cube& bounds, int basis_count, int max_depth,
                                        std::span<const Record> records) {
  if (!is_valid_basis_count(basis_count)) throw structure_error("invalid basis count");
  if (max_depth < 0 || max_depth > 20) throw structure_error("invalid max depth");
  if (!(bounds.half > 0.0) || !std::isfinite(bounds.half)) throw structure_error("invalid bounds");
  if (records.empty()) throw structure_error("no nodes");
  const std::size_t n = records.size();
  if (n > NodeId::kInvalidIndex) throw structure_error("too many nodes");

  SparseOctree out(bounds, basis_count, max_depth);
  out.nodes_.assign(n, Node{});
  out.payloads_.assign(n * static_cast<std::size_t>(out.payload_stride()), 0.0f);
  out.root_ = 0;
  out.leaf_count_ = 0;

  std::vector<bool> seen(n, false);
  struct Pending {
    std::uint32_t index;
    std::uint32_t parent;
    int depth;
    Vec3 center;
  };
  std::vector<Pending> stack{{0, NodeId::kInvalidIndex, 0, bounds.center}};
  seen[0] = true;
  const int stride = out.payload_stride();
  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();
    if (cur.depth > max_depth) throw structure_error("node deeper than max depth");
    const Record& rec = records[cur.index];
    Node& node = out.nodes_[cur.index];
    node.parent = cur.parent;
    node.depth = static_cast<std::uint8_t>(cur.depth);
    node.center = cur.center;
    if (rec.leaf) {
      if (rec.payload.size() != static_cast<std::size_t>(stride)) {
        throw structure_error("leaf payload length mismatch");
      }
      for (float v : rec.payload) {
        if (!std::isfinite(v)) throw structure_error("non-finite payload value");
      }
      node.state = State::kLeaf;
      std::copy(rec.payload.begin(), rec.payload.end(),
                out.payloads_.begin() + static_cast<std::ptrdiff_t>(cur.index) * stride);
      out.leaf_count_ += 1;
    } else {
      node.state = State::kInternal;
      out.internal_count_ += 1;
      const double half = std::ldexp(bounds.half, -cur.depth);
      for (int c = 0; c < 8; ++c) {
        const std::uint64_t child = rec.children[c];
        if (child >= n) throw structure_error("child index out of range");
        if (seen[child]) throw structure_error("node referenced twice");
        seen[child] = true;
        node.children[c] = static_cast<std::uint32_t>(child);
        stack.push_back({static_cast<std::uint32_t>(child), cur.index, cur.depth + 1,
                         child_center(cur.center, half, c)});
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) throw structure_error("unreachable node " + std::to_string(i));
  }
  out.topology_version_ = next_topology_version();
  return out;
}

void SparseOctree::check_invariants() const {
  std::size_t leaves = 0;
  std::size_t internals = 0;
  std::vector<std::uint32_t> stack{root_};
  if (nodes_[root_].parent != NodeId::kInvalidIndex) throw PreconditionError("root has a parent");
  while (!stack.empty()) {
    const std::uint32_t index = stack.back();
    stack.pop_back();
    const Node& node = nodes_[index];
    if (node.depth > max_depth_) throw PreconditionError("node deeper than max depth");
    if (node.state == State::kLeaf) {
      leaves += 1;
      for (float v : slot_payload(index)) {
        if (!std::isfinite(v)) throw PreconditionError("non-finite payload");
      }
    } else if (node.state == State::kInternal) {
      internals += 1;
      const double half = std::ldexp(bounds_.half, -static_cast<int>(node.depth));
      for (int c = 0; c < 8; ++c) {
        const std::uint32_t child = node.children[c];
        if (child >= nodes_.size()) throw PreconditionError("child index out of range");
        const Node& kid = nodes_[child];
        if (kid.state == State::kFree) throw PreconditionError("child slot is free");
        if (kid.parent != index) throw PreconditionError("child parent link broken");
        if (kid.depth != node.depth + 1) throw PreconditionError("child depth mismatch");
        if (!(kid.center == child_center(node.center, half, c))) {
          throw PreconditionError("child center mismatch");
        }
        stack.push_back(child);
      }
    } else {
      throw PreconditionError("reachable free node");
    }
    if (leaves + internals > nodes_.size()) throw PreconditionError("cycle detected");
  }
  if (leaves != leaf_count_ || internals != internal_count_) {
    throw PreconditionError("cached node counts disagree with traversal");
  }
  if (leaves != 7 * internals + 1) throw PreconditionError("L != 7 I + 1");
  if (leaves + internals + free_list_.size() != nodes_.size()) {
    throw PreconditionError("live nodes unreachable from the root");
  }
}

PayloadSource constant_payload(const LeafPayload& payload) {
  return [payload](const Cube&, std::span<float> out) {
    if (out.size() != payload.sh.size() + 1) throw InputError("constant payload length mismatch");
    out[0] = payload.sigma;
    std::copy(payload.sh.begin(), payload.sh.end(), out.begin() + 1);
  };
}

PayloadSource random_payload(std::uint64_t seed, float sigma_lo, float sigma_hi, float sh_range) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [=](const Cube&, std::span<float> out) {
    std::uniform_real_distribution<float> sigma(sigma_lo, sigma_hi);
    std::uniform_real_distribution<float> sh(-sh_range, sh_range);
    out[0] = sigma(*rng);
    for (std::size_t i = 1; i < out.size(); ++i) out[i] = sh(*rng);
  };
}

SparseOctree build_dense(int depth, const Cube& bounds, int basis_count, const PayloadSource& init,
                         int max_depth) {
  if (depth < 0 || depth > max_depth) {
    throw ConfigError("dense depth " + std::to_string(depth) + " outside [0, " +
                      std::to_string(max_depth) + "]");
  }
  SparseOctree tree(bounds, basis_count, max_depth);
  std::vector<NodeId> frontier{tree.root()};
  for (int level = 0; level < depth; ++level) {
    std::vector<NodeId> next;
    next.reserve(frontier.size() * 8);
    for (NodeId leaf : frontier) {
      for (NodeId child : tree.split_leaf(leaf)) next.push_back(child);
    }
    frontier = std::move(next);
  }
  if (init) {
    for (NodeId leaf : frontier) init(tree.cube(leaf), tree.mutable_payload(leaf));
  }
  return tree;
}

}  // namespace dot
