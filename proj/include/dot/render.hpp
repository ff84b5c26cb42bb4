#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dot/camera.hpp"
#include "dot/geometry.hpp"
#include "dot/image.hpp"
#include "dot/octree.hpp"

namespace dot {

struct RaySegment {
  std::uint32_t leaf = NodeId::kInvalidIndex;  // pool index
  double delta = 0.0;                          // world length
  double t_entry = 0.0;
};

using RaySegmentList = std::vector<RaySegment>;

// Exact leaf-boundary segmentation of the ray inside the tree bounds,
// front to back. Empty when the ray misses.
RaySegmentList traverse(const SparseOctree& tree, const Ray& ray);
// Appends into `out` (cleared first) to avoid reallocating per ray.
void traverse_into(const SparseOctree& tree, const Ray& ray, RaySegmentList& out);

struct RenderOptions {
  bool early_termination = true;
  double termination_threshold = 1e-4;  // stop once transmittance drops below
};

struct RenderOutput {
  Vec3 rgb;
  RaySegmentList segments;            // processed segments only
  std::vector<double> alpha;          // Q_i = 1 - exp(-sigma_i delta_i)
  std::vector<double> transmittance;  // T_i at segment entry
  double transmittance_final = 1.0;

  // Compositing weight T_i Q_i of segment i.
  double weight(std::size_t i) const { return transmittance[i] * alpha[i]; }
};

RenderOutput render_ray(const SparseOctree& tree, const Ray& ray, const Vec3& background,
                        const RenderOptions& options = {});

// Sparse per-leaf accumulation over a ray batch: leaves ascending by pool
// index, `stride` doubles per leaf.
struct LeafAccumulator {
  std::uint64_t topology_version = 0;
  int stride = 0;
  std::vector<std::uint32_t> leaves;
  std::vector<double> values;

  std::size_t size() const { return leaves.size(); }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * stride, static_cast<std::size_t>(stride)};
  }
  // Row of a pool index, or an empty span when the leaf was not touched.
  std::span<const double> find(std::uint32_t leaf) const;
};

// Gradient rows are [dL/dsigma, dL/dsh(3 * B)].
using GradBuffer = LeafAccumulator;

// Per-leaf sum of compositing weights over the batch (stride 1).
struct SignalContribution : LeafAccumulator {
  std::uint64_t ray_count = 0;
};

struct BatchResult {
  double loss = 0.0;  // mean over rays of the 3-channel squared error
  GradBuffer grads;
  SignalContribution signal;
};

// Forward render plus exact analytical gradients of the batch MSE with
// respect to every touched leaf's sigma and sh. Rays are processed in fixed
// chunks and reduced in chunk order, so results are bit-identical for any
// worker count.
BatchResult render_and_backprop(const SparseOctree& tree, std::span<const Ray> rays,
                                std::span<const Vec3> targets, const Vec3& background,
                                const RenderOptions& options = {}, int workers = 1);

Image render_image(const SparseOctree& tree, const Camera& camera, const Vec3& background,
                   const RenderOptions& options = {}, int workers = 1);

}  // namespace dot
