#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dot/octree.hpp"

namespace dot {

struct MedianCutResult {
  std::size_t dims = 0;
  std::vector<double> centroids;  // palette x dims
  std::vector<std::uint32_t> assignment;

  std::size_t palette_size() const { return dims ? centroids.size() / dims : 0; }
};

// Median-cut quantization of `points` (count x dims, row-major): the box
// with the widest single-axis range is split first, along that axis, at the
// median element (nudged to the nearest value change so equal points never
// straddle a cut). Deterministic. palette is clamped to the point count.
MedianCutResult median_cut(std::span<const float> points, std::size_t dims, std::size_t palette);

struct CompressionResult {
  SparseOctree tree;               // sh replaced by palette centroids, sigma untouched
  std::vector<float> codebook;     // palette x 3B
  std::vector<std::uint32_t> assignment;  // per leaf, ascending leaf index
  std::size_t sh_bytes_before = 0;
  std::size_t sh_bytes_after = 0;  // codebook plus per-leaf palette indices

  double reduction() const {
    return sh_bytes_after ? static_cast<double>(sh_bytes_before) / sh_bytes_after : 0.0;
  }
};

CompressionResult compress_tree(const SparseOctree& tree, std::size_t palette_size);

}  // namespace dot
