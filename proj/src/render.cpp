#include "dot/render.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "dot/error.hpp"
#include "dot/parallel.hpp"
#include "dot/sh.hpp"

namespace dot {

namespace {

constexpr std::size_t kRaysPerChunk = 64;

struct Traversal {
  const SparseOctree& tree;
  const Ray& ray;
  RaySegmentList& out;

  void visit(std::uint32_t index, const Vec3& center, double t_enter, double t_exit) {
    if (tree.slot_is_leaf(index)) {
      out.push_back({index, t_exit - t_enter, t_enter});
      return;
    }
    // Which octant the ray occupies just after t_enter, and where it
    // crosses the three mid-planes inside (t_enter, t_exit).
    int octant = 0;
    double cross_t[3];
    int cross_axis[3];
    int crossings = 0;
    for (int a = 0; a < 3; ++a) {
      const double d = ray.dir[a];
      if (d == 0.0) {
        if (ray.origin[a] >= center[a]) octant |= 1 << a;
        continue;
      }
      const double tm = (center[a] - ray.origin[a]) / d;
      const bool upper = d > 0.0 ? tm <= t_enter : tm > t_enter;
      if (upper) octant |= 1 << a;
      if (tm > t_enter && tm < t_exit) {
        int j = crossings++;
        while (j > 0 && cross_t[j - 1] > tm) {
          cross_t[j] = cross_t[j - 1];
          cross_axis[j] = cross_axis[j - 1];
          --j;
        }
        cross_t[j] = tm;
        cross_axis[j] = a;
      }
    }
    const auto& kids = tree.slot_children(index);
    const double half = std::ldexp(tree.bounds().half, -tree.slot_depth(index));
    double t = t_enter;
    for (int j = 0; j < crossings; ++j) {
      if (cross_t[j] > t) {
        visit(kids[octant], child_center(center, half, octant), t, cross_t[j]);
        t = cross_t[j];
      }
      octant ^= 1 << cross_axis[j];
    }
    if (t_exit > t) visit(kids[octant], child_center(center, half, octant), t, t_exit);
  }
};

// Per-ray forward state kept for the backward pass.
struct SegmentState {
  double sigma;
  double delta;
  double t_in;   // transmittance at entry
  double t_out;  // transmittance at exit
  double alpha;
  Vec3 color;
};

struct ForwardResult {
  Vec3 rgb;
  double t_final = 1.0;
};

ForwardResult forward(const SparseOctree& tree, const RaySegmentList& segs, const ShBasis& basis,
                      const Vec3& background, const RenderOptions& options,
                      std::vector<SegmentState>& states) {
  states.clear();
  ForwardResult out;
  double transmittance = 1.0;
  for (const RaySegment& seg : segs) {
    if (options.early_termination && transmittance < options.termination_threshold) break;
    const std::span<const float> p = tree.slot_payload(seg.leaf);
    const double sigma = p[0];
    if (!std::isfinite(sigma)) throw PreconditionError("non-finite density in leaf payload");
    const double optical = sigma * seg.delta;
    const double alpha = -std::expm1(-optical);
    const Vec3 raw = sh_expand(p.subspan(1), basis);
    const Vec3 color{sigmoid(raw.x), sigmoid(raw.y), sigmoid(raw.z)};
    const double next = transmittance * std::exp(-optical);
    states.push_back({sigma, seg.delta, transmittance, next, alpha, color});
    out.rgb += (transmittance * alpha) * color;
    transmittance = next;
  }
  out.t_final = transmittance;
  out.rgb += transmittance * background;
  return out;
}

int degree_of(const SparseOctree& tree) { return sh_degree_for_basis_count(tree.basis_count()); }

// Insertion-ordered sparse rows keyed by leaf index.
class SparseRows {
 public:
  explicit SparseRows(int stride) : stride_(stride) {}

  double* row(std::uint32_t leaf) {
    auto [it, inserted] = slot_.try_emplace(leaf, static_cast<std::uint32_t>(order_.size()));
    if (inserted) {
      order_.push_back(leaf);
      values_.resize(values_.size() + stride_, 0.0);
    }
    return values_.data() + static_cast<std::size_t>(it->second) * stride_;
  }
  void add_into(SparseRows& dst) const {
    for (std::size_t i = 0; i < order_.size(); ++i) {
      double* d = dst.row(order_[i]);
      const double* s = values_.data() + i * stride_;
      for (int k = 0; k < stride_; ++k) d[k] += s[k];
    }
  }
  const std::vector<std::uint32_t>& order() const { return order_; }
  const double* row_at(std::size_t i) const { return values_.data() + i * stride_; }

 private:
  int stride_;
  std::unordered_map<std::uint32_t, std::uint32_t> slot_;
  std::vector<std::uint32_t> order_;
  std::vector<double> values_;
};

}  // namespace

void traverse_into(const SparseOctree& tree, const Ray& ray, RaySegmentList& out) {
  out.clear();
  const Cube& b = tree.bounds();
  double t0 = ray.t_near;
  double t1 = ray.t_far;
  for (int a = 0; a < 3; ++a) {
    const double d = ray.dir[a];
    const double o = ray.origin[a];
    const double lo = b.center[a] - b.half;
    const double hi = b.center[a] + b.half;
    if (d == 0.0) {
      if (o < lo || o >= hi) return;
      continue;
    }
    double ta = (lo - o) / d;
    double tb = (hi - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t1 > t0)) return;
  Traversal{tree, ray, out}.visit(tree.root().index, b.center, t0, t1);
}

RaySegmentList traverse(const SparseOctree& tree, const Ray& ray) {
  RaySegmentList out;
  traverse_into(tree, ray, out);
  return out;
}

RenderOutput render_ray(const SparseOctree& tree, const Ray& ray, const Vec3& background,
                        const RenderOptions& options) {
  RenderOutput out;
  RaySegmentList segs = traverse(tree, ray);
  std::vector<SegmentState> states;
  const ShBasis basis = eval_sh_basis(degree_of(tree), ray.dir);
  const ForwardResult fwd = forward(tree, segs, basis, background, options, states);
  segs.resize(states.size());
  out.rgb = fwd.rgb;
  out.segments = std::move(segs);
  out.transmittance_final = fwd.t_final;
  out.alpha.reserve(states.size());
  out.transmittance.reserve(states.size());
  for (const SegmentState& s : states) {
    out.alpha.push_back(s.alpha);
    out.transmittance.push_back(s.t_in);
  }
  return out;
}

std::span<const double> LeafAccumulator::find(std::uint32_t leaf) const {
  auto it = std::lower_bound(leaves.begin(), leaves.end(), leaf);
  if (it == leaves.end() || *it != leaf) return {};
  return row(static_cast<std::size_t>(it - leaves.begin()));
}

BatchResult render_and_backprop(const SparseOctree& tree, std::span<const Ray> rays,
                                std::span<const Vec3> targets, const Vec3& background,
                                const RenderOptions& options, int workers) {
  if (rays.size() != targets.size()) {
    throw InputError("render_and_backprop: " + std::to_string(rays.size()) + " rays but " +
                     std::to_string(targets.size()) + " targets");
  }
  const int basis_count = tree.basis_count();
  const int degree = degree_of(tree);
  const int grad_stride = tree.payload_stride();
  const int row_stride = grad_stride + 1;  // trailing slot: signal weight
  const std::size_t n = rays.size();
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  const std::size_t chunks = (n + kRaysPerChunk - 1) / kRaysPerChunk;

  std::vector<SparseRows> partial(chunks, SparseRows(row_stride));
  std::vector<double> partial_loss(chunks, 0.0);

  parallel_for(chunks, workers, [&](std::size_t c) {
    SparseRows& rows = partial[c];
    RaySegmentList segs;
    std::vector<SegmentState> states;
    double loss = 0.0;
    const std::size_t end = std::min(n, (c + 1) * kRaysPerChunk);
    for (std::size_t r = c * kRaysPerChunk; r < end; ++r) {
      const Ray& ray = rays[r];
      traverse_into(tree, ray, segs);
      const ShBasis basis = eval_sh_basis(degree, ray.dir);
      const ForwardResult fwd = forward(tree, segs, basis, background, options, states);
      const Vec3 err = fwd.rgb - targets[r];
      loss += dot(err, err);
      const Vec3 g = err * (2.0 * inv_n);

      // suffix = sum_{j > i} w_j c_j + T_final * bg, built back to front.
      Vec3 suffix = fwd.t_final * background;
      for (std::size_t i = states.size(); i-- > 0;) {
        const SegmentState& s = states[i];
        const double weight = s.t_in * s.alpha;
        double* row = rows.row(segs[i].leaf);
        const Vec3 dcolor_dsigma = s.delta * (s.t_out * s.color - suffix);
        row[0] += dot(g, dcolor_dsigma);
        for (int k = 0; k < 3; ++k) {
          const double graw = g[k] * weight * s.color[k] * (1.0 - s.color[k]);
          double* sh = row + 1 + k * basis_count;
          for (int b = 0; b < basis_count; ++b) sh[b] += graw * basis.values[b];
        }
        row[grad_stride] += weight;
        suffix += weight * s.color;
      }
    }
    partial_loss[c] = loss;
  });

  SparseRows total(row_stride);
  double loss = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    partial[c].add_into(total);
    loss += partial_loss[c];
  }

  BatchResult out;
  out.loss = loss * inv_n;
  std::vector<std::size_t> perm(total.order().size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::sort(perm.begin(), perm.end(),
            [&](std::size_t a, std::size_t b) { return total.order()[a] < total.order()[b]; });

  out.grads.topology_version = tree.topology_version();
  out.grads.stride = grad_stride;
  out.grads.leaves.reserve(perm.size());
  out.grads.values.reserve(perm.size() * grad_stride);
  out.signal.topology_version = tree.topology_version();
  out.signal.stride = 1;
  out.signal.ray_count = n;
  out.signal.leaves.reserve(perm.size());
  out.signal.values.reserve(perm.size());
  for (std::size_t i : perm) {
    const double* row = total.row_at(i);
    out.grads.leaves.push_back(total.order()[i]);
    out.grads.values.insert(out.grads.values.end(), row, row + grad_stride);
    out.signal.leaves.push_back(total.order()[i]);
    out.signal.values.push_back(row[grad_stride]);
  }
  return out;
}

Image render_image(const SparseOctree& tree, const Camera& camera, const Vec3& background,
                   const RenderOptions& options, int workers) {
  Image image(camera.width, camera.height);
  const int degree = degree_of(tree);
  parallel_for(static_cast<std::size_t>(camera.height), workers, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    RaySegmentList segs;
    std::vector<SegmentState> states;
    for (int x = 0; x < camera.width; ++x) {
      const Ray ray = camera.pixel_ray(x, y);
      traverse_into(tree, ray, segs);
      const ShBasis basis = eval_sh_basis(degree, ray.dir);
      image.set_rgb(x, y, forward(tree, segs, basis, background, options, states).rgb);
    }
  });
  return image;
}

}  // namespace dot
