#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dot/octree.hpp"
#include "dot/signal.hpp"

namespace dot {

// How gamma picks leaves to subdivide.
enum class SampleMode {
  kTopK,       // the ceil(gamma * L) strongest leaves
  kThreshold,  // every leaf with signal > gamma
};

struct CalibrationConfig {
  double tau = 1.0;
  double gamma = 0.01;  // 0 disables sampling
  bool recursive = false;
  SampleMode sample_mode = SampleMode::kTopK;
};

struct CalibrationReport {
  std::size_t leaves_before = 0;
  std::size_t leaves_after = 0;
  std::size_t merges_applied = 0;
  std::size_t splits_applied = 0;
  std::size_t recursion_rounds = 0;

  CalibrationReport& operator+=(const CalibrationReport& other);
  // One JSON object on a single line.
  std::string to_json_line() const;
};

// Notified of every structural change calibration applies, after it
// happened. Used to carry optimizer state across the mutation.
class StructureListener {
 public:
  virtual ~StructureListener() = default;
  virtual void on_merge(const SparseOctree& tree, std::uint32_t parent,
                        const std::array<std::uint32_t, 8>& children) = 0;
  virtual void on_split(const SparseOctree& tree, std::uint32_t leaf,
                        const std::array<NodeId, 8>& children) = 0;
};

// Internal nodes whose 8 children are leaves with signal <= tau, ascending.
std::vector<NodeId> select_prune(const SparseOctree& tree, const SignalBuffer& buffer, double tau);

CalibrationReport prune(SparseOctree& tree, SignalBuffer& buffer, double tau, bool recursive,
                        StructureListener* listener = nullptr);

// Leaves to subdivide, ascending by pool index. Leaves at max depth and
// leaves with zero signal are never selected.
std::vector<NodeId> select_sample(const SparseOctree& tree, const SignalBuffer& buffer,
                                  double gamma, SampleMode mode = SampleMode::kTopK);

CalibrationReport sample(SparseOctree& tree, SignalBuffer& buffer, double gamma,
                         SampleMode mode = SampleMode::kTopK,
                         StructureListener* listener = nullptr);

// Prune, then sample. The buffer stays bound to the final topology but is
// no longer a meaningful interval signal; callers reset it.
CalibrationReport calibrate(SparseOctree& tree, SignalBuffer& buffer,
                            const CalibrationConfig& config,
                            StructureListener* listener = nullptr);

}  // namespace dot
