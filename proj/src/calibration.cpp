#include "dot/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dot/error.hpp"

namespace dot {

CalibrationReport& CalibrationReport::operator+=(const CalibrationReport& other) {
  leaves_after = other.leaves_after;
  merges_applied += other.merges_applied;
  splits_applied += other.splits_applied;
  recursion_rounds += other.recursion_rounds;
  return *this;
}

std::string CalibrationReport::to_json_line() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "{\"leaves_before\":%zu,\"leaves_after\":%zu,\"merges_applied\":%zu,"
                "\"splits_applied\":%zu,\"recursion_rounds\":%zu}",
                leaves_before, leaves_after, merges_applied, splits_applied, recursion_rounds);
  return buf;
}

std::vector<NodeId> select_prune(const SparseOctree& tree, const SignalBuffer& buffer,
                                 double tau) {
  if (!buffer.is_fresh(tree)) throw StaleError("select_prune: stale signal buffer");
  std::vector<NodeId> out;
  for (std::uint32_t i = 0; i < tree.capacity(); ++i) {
    if (!tree.slot_is_live(i) || tree.slot_is_leaf(i)) continue;
    bool all_weak = true;
    for (std::uint32_t c : tree.slot_children(i)) {
      if (!tree.slot_is_leaf(c) || buffer.value(tree, tree.id_at(c)) > tau) {
        all_weak = false;
        break;
      }
    }
    if (all_weak) out.push_back(tree.id_at(i));
  }
  return out;
}

CalibrationReport prune(SparseOctree& tree, SignalBuffer& buffer, double tau, bool recursive,
                        StructureListener* listener) {
  CalibrationReport report;
  report.leaves_before = tree.leaf_count();
  for (;;) {
    const std::vector<NodeId> selected = select_prune(tree, buffer, tau);
    for (NodeId parent : selected) {
      const std::array<std::uint32_t, 8> kids = tree.slot_children(parent.index);
      tree.merge_children(parent);
      buffer.fold_merge(tree, parent.index, kids);
      if (listener) listener->on_merge(tree, parent.index, kids);
    }
    if (!selected.empty()) {
      report.merges_applied += selected.size();
      report.recursion_rounds += 1;
    }
    if (!recursive || selected.empty()) break;
  }
  report.leaves_after = tree.leaf_count();
  return report;
}

std::vector<NodeId> select_sample(const SparseOctree& tree, const SignalBuffer& buffer,
                                  double gamma, SampleMode mode) {
  if (!buffer.is_fresh(tree)) throw StaleError("select_sample: stale signal buffer");
  if (!(gamma > 0.0)) return {};
  struct Candidate {
    double signal;
    NodeId leaf;
  };
  std::vector<Candidate> candidates;
  const std::vector<NodeId> leaves = tree.leaves();
  for (NodeId leaf : leaves) {
    if (tree.depth(leaf) >= tree.max_depth()) continue;
    const double s = buffer.value(tree, leaf);
    if (!(s > 0.0)) continue;
    if (mode == SampleMode::kThreshold && !(s > gamma)) continue;
    candidates.push_back({s, leaf});
  }
  if (mode == SampleMode::kTopK) {
    // The count is a fraction of every leaf, capped ones included.
    const double exact = gamma * static_cast<double>(leaves.size());
    const auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      return a.signal != b.signal ? a.signal > b.signal : a.leaf.index < b.leaf.index;
    });
    if (candidates.size() > k) candidates.resize(k);
  }
  std::vector<NodeId> out;
  out.reserve(candidates.size());
  for (const Candidate& c : candidates) out.push_back(c.leaf);
  std::sort(out.begin(), out.end(),
            [](const NodeId& a, const NodeId& b) { return a.index < b.index; });
  return out;
}

CalibrationReport sample(SparseOctree& tree, SignalBuffer& buffer, double gamma, SampleMode mode,
                         StructureListener* listener) {
  CalibrationReport report;
  report.leaves_before = tree.leaf_count();
  const std::vector<NodeId> selected = select_sample(tree, buffer, gamma, mode);
  for (NodeId leaf : selected) {
    const std::array<NodeId, 8> kids = tree.split_leaf(leaf);
    if (listener) listener->on_split(tree, leaf.index, kids);
  }
  buffer.fold_split(tree);
  report.splits_applied = selected.size();
  report.leaves_after = tree.leaf_count();
  return report;
}

CalibrationReport calibrate(SparseOctree& tree, SignalBuffer& buffer,
                            const CalibrationConfig& config, StructureListener* listener) {
  if (config.tau < 0.0) throw ConfigError("tau must be non-negative");
  if (config.gamma < 0.0) throw ConfigError("gamma must be non-negative");
  if (config.sample_mode == SampleMode::kTopK && config.gamma > 1.0) {
    throw ConfigError("top-k gamma must be in [0, 1]");
  }
  CalibrationReport report = prune(tree, buffer, config.tau, config.recursive, listener);
  report += sample(tree, buffer, config.gamma, config.sample_mode, listener);
  return report;
}

}  // namespace dot
