#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "dot/octree.hpp"
#include "dot/render.hpp"

namespace dot {

enum class SignalTarget { kRayWeightQ, kDensitySigma };

// Per-leaf training signal accumulated over one calibration interval.
// Bound to one tree topology; any structural mutation makes it stale until
// reset() (calibration keeps it coherent across its own merges).
class SignalBuffer {
 public:
  SignalBuffer(SignalTarget target, const SparseOctree& tree);

  SignalTarget target() const { return target_; }
  void reset(const SparseOctree& tree);
  bool is_fresh(const SparseOctree& tree) const {
    return version_ == tree.topology_version();
  }

  // Adds a batch's per-leaf weight sums. Throws StaleError on topology mismatch.
  void accumulate(const SignalContribution& contribution);

  // Accumulated weight for RayWeightQ, the leaf's stored sigma for
  // DensitySigma. Throws StaleError when the buffer does not match `tree`.
  double value(const SparseOctree& tree, NodeId leaf) const;
  double accumulated(std::uint32_t index) const {
    return index < values_.size() ? values_[index] : 0.0;
  }
  std::uint64_t epoch_rays() const { return epoch_rays_; }
  // Total accumulated weight mass over all leaves.
  double total_mass() const;

  // Carries the buffer across a merge that calibration just applied: the
  // parent receives the sum of its children's accumulators.
  void fold_merge(const SparseOctree& tree_after, std::uint32_t parent,
                  const std::array<std::uint32_t, 8>& children);
  // Re-binds after splits; new leaves start at zero.
  void fold_split(const SparseOctree& tree_after);

  // Directly set a leaf's accumulator (offline calibration from dumps).
  void set_accumulated(const SparseOctree& tree, std::uint32_t index, double value);

  // CSV with header: leaf_id,depth,cx,cy,cz,signal (leaves ascending).
  void write_csv(const SparseOctree& tree, std::ostream& out) const;
  // Builds a RayWeightQ buffer from a dump written for `tree`. Throws
  // InputError for malformed rows or ids that are not leaves of `tree`.
  static SignalBuffer read_csv(const SparseOctree& tree, std::istream& in);

 private:
  void require_fresh(const SparseOctree& tree) const;

  SignalTarget target_;
  std::uint64_t version_ = 0;
  std::vector<double> values_;
  std::uint64_t epoch_rays_ = 0;
};

}  // namespace dot
