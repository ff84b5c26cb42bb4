#include "dot/signal.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "dot/error.hpp"

namespace dot {

SignalBuffer::SignalBuffer(SignalTarget target, const SparseOctree& tree) : target_(target) {
  reset(tree);
}

void SignalBuffer::reset(const SparseOctree& tree) {
  version_ = tree.topology_version();
  values_.assign(tree.capacity(), 0.0);
  epoch_rays_ = 0;
}

void SignalBuffer::require_fresh(const SparseOctree& tree) const {
  if (!is_fresh(tree)) throw StaleError("signal buffer does not match the tree topology");
}

void SignalBuffer::accumulate(const SignalContribution& contribution) {
  if (contribution.topology_version != version_) {
    throw StaleError("signal contribution was rendered against another topology");
  }
  for (std::size_t i = 0; i < contribution.size(); ++i) {
    const std::uint32_t leaf = contribution.leaves[i];
    if (leaf >= values_.size()) values_.resize(leaf + 1, 0.0);
    values_[leaf] += contribution.values[i];
  }
  epoch_rays_ += contribution.ray_count;
}

double SignalBuffer::value(const SparseOctree& tree, NodeId leaf) const {
  require_fresh(tree);
  if (!tree.is_leaf(leaf)) throw HandleError("signal value requested for an internal node");
  if (target_ == SignalTarget::kDensitySigma) return tree.payload(leaf)[0];
  return accumulated(leaf.index);
}

double SignalBuffer::total_mass() const {
  double sum = 0.0;
  for (double v : values_) sum += v;
  return sum;
}

void SignalBuffer::fold_merge(const SparseOctree& tree_after, std::uint32_t parent,
                              const std::array<std::uint32_t, 8>& children) {
  double sum = 0.0;
  for (std::uint32_t c : children) {
    if (c < values_.size()) {
      sum += values_[c];
      values_[c] = 0.0;
    }
  }
  if (parent >= values_.size()) values_.resize(parent + 1, 0.0);
  values_[parent] = sum;
  version_ = tree_after.topology_version();
}

void SignalBuffer::fold_split(const SparseOctree& tree_after) {
  values_.resize(tree_after.capacity(), 0.0);
  version_ = tree_after.topology_version();
}

void SignalBuffer::set_accumulated(const SparseOctree& tree, std::uint32_t index, double value) {
  require_fresh(tree);
  if (index >= tree.capacity() || !tree.slot_is_leaf(index)) {
    throw InputError("signal entry " + std::to_string(index) + " is not a leaf");
  }
  if (!(value >= 0.0)) throw InputError("signal values must be non-negative");
  if (index >= values_.size()) values_.resize(index + 1, 0.0);
  values_[index] = value;
}

void SignalBuffer::write_csv(const SparseOctree& tree, std::ostream& out) const {
  require_fresh(tree);
  out << "leaf_id,depth,cx,cy,cz,signal\n";
  char line[256];
  for (NodeId leaf : tree.leaves()) {
    const Cube c = tree.cube(leaf);
    std::snprintf(line, sizeof line, "%u,%d,%.17g,%.17g,%.17g,%.17g\n", leaf.index,
                  tree.depth(leaf), c.center.x, c.center.y, c.center.z, value(tree, leaf));
    out << line;
  }
}

SignalBuffer SignalBuffer::read_csv(const SparseOctree& tree, std::istream& in) {
  SignalBuffer buffer(SignalTarget::kRayWeightQ, tree);
  std::string line;
  if (!std::getline(in, line) || line.rfind("leaf_id", 0) != 0) {
    throw InputError("signal dump is missing its header row");
  }
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6) throw InputError("signal dump row " + std::to_string(row) + " malformed");
    try {
      std::size_t used = 0;
      const unsigned long id = std::stoul(fields[0], &used);
      if (used != fields[0].size()) throw std::invalid_argument("id");
      const double value = std::stod(fields[5]);
      if (id >= tree.capacity()) throw InputError("signal dump leaf id out of range");
      buffer.set_accumulated(tree, static_cast<std::uint32_t>(id), value);
    } catch (const std::logic_error&) {
      throw InputError("signal dump row " + std::to_string(row) + " malformed");
    }
  }
  return buffer;
}

}  // namespace dot
