#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "dot/camera.hpp"
#include "dot/error.hpp"
#include "dot/render.hpp"
#include "dot/toy_scene.hpp"
#include "oracles.hpp"

using namespace dot;

namespace {

const Cube kUnit{{0.0, 0.0, 0.0}, 1.0};
const Vec3 kBlack{0.0, 0.0, 0.0};
const Vec3 kWhite{1.0, 1.0, 1.0};
const RenderOptions kExact{false, 0.0};

// Degree-0 coefficient giving channel value c after the sigmoid.
float sh_for(double c) { return static_cast<float>(logit(c) / 0.28209479177387814); }

void set_leaf(SparseOctree& tree, NodeId leaf, float sigma, const Vec3& color) {
  std::span<float> p = tree.mutable_payload(leaf);
  p[0] = sigma;
  for (int k = 0; k < 3; ++k) p[1 + k * tree.basis_count()] = sh_for(color[k]);
}

double image_max_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    m = std::max(m, static_cast<double>(std::abs(a.pixels[i] - b.pixels[i])));
  }
  return m;
}

Camera test_camera(int size = 32) {
  return look_at({2.3, 1.7, 2.9}, {0.05, -0.02, 0.03}, {0, 0, 1}, size, size, 0.9);
}

}  // namespace

TEST_CASE("axis-aligned chords") {
  SparseOctree tree(kUnit, 1);
  const Ray ray{{0.0 + 1e-3, 0.0 + 2e-3, -5.0}, {0.0, 0.0, 1.0}};
  RaySegmentList segs = traverse(tree, ray);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].delta == doctest::Approx(2.0));
  CHECK(segs[0].t_entry == doctest::Approx(4.0));

  tree.split_leaf(tree.root());
  segs = traverse(tree, ray);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].delta == doctest::Approx(1.0));
  CHECK(segs[1].delta == doctest::Approx(1.0));
  CHECK(segs[0].leaf == tree.locate({0.001, 0.002, -0.5}).first.index);
  CHECK(segs[1].leaf == tree.locate({0.001, 0.002, 0.5}).first.index);
}

TEST_CASE("ray through the exact center plane follows the half-open tie-break") {
  SparseOctree tree(kUnit, 1);
  const auto kids = tree.split_leaf(tree.root());
  const RaySegmentList segs = traverse(tree, {{0.0, 0.0, -5.0}, {0.0, 0.0, 1.0}});
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].leaf == kids[3].index);
  CHECK(segs[1].leaf == kids[7].index);
}

TEST_CASE("missing rays and clipped rays") {
  SparseOctree tree = testing::random_tree(1, 2, 1);
  CHECK(traverse(tree, {{0.0, 3.0, -5.0}, {0.0, 0.0, 1.0}}).empty());
  CHECK(traverse(tree, {{0.0, 0.0, 5.0}, {0.0, 0.0, 1.0}}).empty());
  // Origin inside the bounds: segments start at t_near.
  const Ray inside{{0.1, 0.2, 0.3}, normalized({1, -1, 0.5}), 0.0, 1e30};
  const RaySegmentList segs = traverse(tree, inside);
  REQUIRE_FALSE(segs.empty());
  CHECK(segs.front().t_entry == 0.0);
  // t_far inside the bounds truncates the last segment.
  const Ray shortened{{0.0, 0.0, -5.0}, {0.0, 0.0, 1.0}, 0.0, 4.5};
  double total = 0.0;
  for (const RaySegment& s : traverse(tree, shortened)) total += s.delta;
  CHECK(total == doctest::Approx(0.5));
}

TEST_CASE("traversal agrees with the micro-step marching oracle") {
  std::mt19937_64 rng(314);
  for (int t = 0; t < 6; ++t) {
    const Cube bounds{{0.2 * t - 0.4, 0.1, -0.3}, 1.0 + 0.25 * t};
    SparseOctree tree = testing::random_tree(100 + t, 4, 1, bounds, 0.4);
    const double edge = bounds.edge();
    const double step = edge / std::ldexp(1.0, tree.max_depth() + 4);
    for (int r = 0; r < 25; ++r) {
      const Ray ray = testing::random_ray(rng, bounds);
      const RaySegmentList segs = traverse(tree, ray);
      const auto oracle = testing::march_segments(tree, ray, step);
      // Segments shorter than the march step may be stepped over by the oracle.
      RaySegmentList visible;
      for (const RaySegment& s : segs) {
        if (s.delta > step) visible.push_back(s);
      }
      std::vector<testing::OracleSegment> long_oracle;
      for (const auto& o : oracle) {
        if (o.t1 - o.t0 > step) long_oracle.push_back(o);
      }
      REQUIRE(visible.size() == long_oracle.size());
      for (std::size_t i = 0; i < visible.size(); ++i) {
        CHECK(visible[i].leaf == long_oracle[i].leaf);
        CHECK(std::abs(visible[i].delta - (long_oracle[i].t1 - long_oracle[i].t0)) <= 1e-5 * edge);
      }
      // Structural segment invariants.
      for (std::size_t i = 0; i < segs.size(); ++i) {
        CHECK(segs[i].delta > 0.0);
        CHECK(tree.slot_is_leaf(segs[i].leaf));
        if (i > 0) {
          CHECK(segs[i].t_entry ==
                doctest::Approx(segs[i - 1].t_entry + segs[i - 1].delta).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("transparent and single-voxel closed forms") {
  SparseOctree tree(kUnit, 1);
  const Ray ray{{0.01, -0.02, -4.0}, {0.0, 0.0, 1.0}};
  RenderOutput out = render_ray(tree, ray, {0.2, 0.4, 0.9});
  CHECK(out.rgb == Vec3{0.2, 0.4, 0.9});
  CHECK(out.transmittance_final == 1.0);

  const Vec3 c{0.8, 0.3, 0.6};
  // delta = 2, sigma * delta = ln 2
  set_leaf(tree, tree.root(), static_cast<float>(std::log(2.0) / 2.0), c);
  out = render_ray(tree, ray, kBlack, kExact);
  const Vec3 decoded = decode_color(tree.payload(tree.root()).subspan(1), ray.dir);
  for (int k = 0; k < 3; ++k) CHECK(out.rgb[k] == doctest::Approx(0.5 * decoded[k]).epsilon(1e-6));
  CHECK(out.transmittance_final == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(out.alpha.size() == 1);
}

TEST_CASE("two-segment hand evaluation") {
  SparseOctree tree(kUnit, 1);
  const auto kids = tree.split_leaf(tree.root());
  const float s = static_cast<float>(std::log(2.0));  // delta = 1 per child along z
  const Vec3 c1{0.9, 0.2, 0.4}, c2{0.1, 0.7, 0.5};
  const Ray ray{{0.3, 0.4, -3.0}, {0.0, 0.0, 1.0}};
  set_leaf(tree, kids[3], s, c1);
  set_leaf(tree, kids[7], s, c2);
  const RenderOutput out = render_ray(tree, ray, kBlack, kExact);
  const Vec3 d1 = decode_color(tree.payload(kids[3]).subspan(1), ray.dir);
  const Vec3 d2 = decode_color(tree.payload(kids[7]).subspan(1), ray.dir);
  for (int k = 0; k < 3; ++k) {
    CHECK(out.rgb[k] == doctest::Approx(0.5 * d1[k] + 0.25 * d2[k]).epsilon(1e-6));
  }
  CHECK(out.transmittance_final == doctest::Approx(0.25).epsilon(1e-6));
  const auto segs = testing::locate_step_segments(tree, ray);
  const auto ref = testing::composite_micro(tree, ray, segs, kBlack, 1e-3);
  CHECK(testing::max_abs_diff(ref.rgb, out.rgb) < 1e-9);
}

TEST_CASE("renderer matches the brute-force compositor and conserves energy") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 5; ++t) {
    SparseOctree tree = testing::random_tree(200 + t, 4, 9, kUnit, 0.5, 0.0, 4.0);
    for (int r = 0; r < 40; ++r) {
      const Ray ray = testing::random_ray(rng, kUnit);
      const Vec3 bg{0.3, 0.6, 0.9};
      const RenderOutput out = render_ray(tree, ray, bg, kExact);
      const auto segs = testing::locate_step_segments(tree, ray);
      const auto ref = testing::composite_micro(tree, ray, segs, bg, kUnit.edge() / 4096);
      CHECK(testing::max_abs_diff(out.rgb, ref.rgb) < 1e-4);
      double sum = out.transmittance_final;
      for (std::size_t i = 0; i < out.alpha.size(); ++i) {
        CHECK(out.alpha[i] >= 0.0);
        CHECK(out.alpha[i] < 1.0);
        if (i > 0) CHECK(out.transmittance[i] <= out.transmittance[i - 1]);
        sum += out.weight(i);
      }
      CHECK(std::abs(sum - 1.0) < 1e-5);
    }
  }
}

TEST_CASE("alpha is zero exactly for zero density") {
  SparseOctree tree = testing::random_tree(4, 2, 1, kUnit, 0.5, 0.0, 2.0);
  const auto leaves = tree.leaves();
  tree.mutable_payload(leaves[0])[0] = 0.0f;
  std::mt19937_64 rng(3);
  for (int r = 0; r < 200; ++r) {
    const RenderOutput out = render_ray(tree, testing::random_ray(rng, kUnit), kWhite, kExact);
    for (std::size_t i = 0; i < out.alpha.size(); ++i) {
      const bool zero_sigma = tree.slot_payload(out.segments[i].leaf)[0] == 0.0f;
      CHECK((out.alpha[i] == 0.0) == zero_sigma);
    }
  }
}

TEST_CASE("early termination freezes transmittance at the cut") {
  SparseOctree tree(kUnit, 1);
  const auto kids = tree.split_leaf(tree.root());
  set_leaf(tree, kids[3], 20.0f, {0.9, 0.1, 0.1});
  set_leaf(tree, kids[7], 1.0f, {0.1, 0.9, 0.1});
  const Ray ray{{0.3, 0.4, -3.0}, {0.0, 0.0, 1.0}};
  const RenderOutput cut = render_ray(tree, ray, kWhite);
  CHECK(cut.segments.size() == 1);
  CHECK(cut.transmittance_final == doctest::Approx(std::exp(-20.0)));
  const RenderOutput full = render_ray(tree, ray, kWhite, kExact);
  CHECK(full.segments.size() == 2);
  CHECK(testing::max_abs_diff(cut.rgb, full.rgb) < 1e-4);
}

TEST_CASE("non-finite density is a hard fault") {
  SparseOctree tree(kUnit, 1);
  tree.mutable_payload(tree.root())[0] = std::nanf("");
  CHECK_THROWS_AS(render_ray(tree, {{0, 0, -3}, {0, 0, 1}}, kWhite), PreconditionError);
}

TEST_CASE("zero-density tree fits a background target exactly") {
  SparseOctree tree = build_dense(2, kUnit, 1, constant_payload({0.0f, {0.3f, -0.2f, 0.1f}}));
  std::mt19937_64 rng(5);
  std::vector<Ray> rays;
  for (int i = 0; i < 64; ++i) rays.push_back(testing::random_ray(rng, kUnit));
  const std::vector<Vec3> targets(rays.size(), kWhite);
  const BatchResult res = render_and_backprop(tree, rays, targets, kWhite);
  CHECK(res.loss == 0.0);
  for (double v : res.grads.values) CHECK(v == 0.0);
  for (double v : res.signal.values) CHECK(v == 0.0);
  CHECK_FALSE(res.grads.leaves.empty());
  const Image img = render_image(tree, test_camera(), kWhite);
  for (float v : img.pixels) CHECK(v == 1.0f);
}

TEST_CASE("gradients match central finite differences") {
  std::mt19937_64 rng(9);
  for (int seed = 0; seed < 6; ++seed) {
    const int b = seed % 2 ? 4 : 1;
    SparseOctree tree = testing::random_tree(seed, 2, b, kUnit, 0.5);
    std::vector<Ray> rays;
    std::vector<Vec3> targets;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 8; ++i) {
      rays.push_back(testing::random_ray(rng, kUnit));
      targets.push_back({u(rng), u(rng), u(rng)});
    }
    const Vec3 bg{0.7, 0.2, 0.5};
    const BatchResult res = render_and_backprop(tree, rays, targets, bg, kExact);
    CHECK(res.grads.stride == tree.payload_stride());
    CHECK(std::is_sorted(res.grads.leaves.begin(), res.grads.leaves.end()));
    for (std::size_t i = 0; i < res.grads.size(); ++i) {
      const auto row = res.grads.row(i);
      for (int c = 0; c < tree.payload_stride(); ++c) {
        const double fd =
            testing::finite_difference(tree, res.grads.leaves[i], c, rays, targets, bg, 1e-3);
        INFO("seed " << seed << " leaf " << res.grads.leaves[i] << " component " << c);
        CHECK(testing::gradient_close(row[c], fd));
      }
    }
    // Leaves no ray touched have no row and no finite-difference response.
    for (const NodeId leaf : tree.leaves()) {
      if (!res.grads.find(leaf.index).empty()) continue;
      CHECK(testing::finite_difference(tree, leaf.index, 0, rays, targets, bg, 1e-3) == 0.0);
    }
  }
}

TEST_CASE("single voxel, black target: density gradient is positive") {
  SparseOctree tree(kUnit, 1);
  set_leaf(tree, tree.root(), 0.4f, {0.6, 0.3, 0.8});
  const std::vector<Ray> rays{{{0.0, 0.1, -3.0}, {0.0, 0.0, 1.0}}};
  const std::vector<Vec3> targets{kBlack};
  const BatchResult res = render_and_backprop(tree, rays, targets, kBlack, kExact);
  const auto row = res.grads.find(tree.root().index);
  REQUIRE(row.size() == 4);
  // L = |(1 - e^{-s d}) c|^2, dL/ds = 2 (1 - e^{-s d}) e^{-s d} d |c|^2
  const Vec3 c = decode_color(tree.payload(tree.root()).subspan(1), rays[0].dir);
  const double a = 1.0 - std::exp(-static_cast<double>(0.4f) * 2.0);
  CHECK(row[0] > 0.0);
  CHECK(row[0] == doctest::Approx(2.0 * a * (1.0 - a) * 2.0 * dot::dot(c, c)).epsilon(1e-9));
  CHECK(res.loss == doctest::Approx(a * a * dot::dot(c, c)).epsilon(1e-12));
}

TEST_CASE("length mismatch is an input error") {
  SparseOctree tree(kUnit, 1);
  const std::vector<Ray> rays(3);
  const std::vector<Vec3> targets(2);
  CHECK_THROWS_AS(render_and_backprop(tree, rays, targets, kWhite), InputError);
}

TEST_CASE("batch results and images do not depend on worker count") {
  SparseOctree tree = testing::random_tree(31, 4, 16, kUnit, 0.6, 0.0, 3.0);
  std::mt19937_64 rng(12);
  std::vector<Ray> rays;
  std::vector<Vec3> targets;
  for (int i = 0; i < 3000; ++i) {
    rays.push_back(testing::random_ray(rng, kUnit));
    targets.push_back({0.5, 0.25, 0.75});
  }
  const BatchResult a = render_and_backprop(tree, rays, targets, kWhite, {}, 1);
  const BatchResult b = render_and_backprop(tree, rays, targets, kWhite, {}, 8);
  CHECK(std::bit_cast<std::uint64_t>(a.loss) == std::bit_cast<std::uint64_t>(b.loss));
  CHECK(a.grads.leaves == b.grads.leaves);
  CHECK(a.grads.values == b.grads.values);
  CHECK(a.signal.values == b.signal.values);
  CHECK(render_image(tree, test_camera(), kWhite, {}, 1) ==
        render_image(tree, test_camera(), kWhite, {}, 8));
}

TEST_CASE("signal is invariant to ray order") {
  SparseOctree tree = testing::random_tree(32, 3, 1, kUnit, 0.6, 0.0, 3.0);
  std::mt19937_64 rng(13);
  std::vector<Ray> rays;
  for (int i = 0; i < 500; ++i) rays.push_back(testing::random_ray(rng, kUnit));
  const std::vector<Vec3> targets(rays.size(), kWhite);
  const BatchResult a = render_and_backprop(tree, rays, targets, kWhite);
  std::vector<Ray> reversed(rays.rbegin(), rays.rend());
  const BatchResult b = render_and_backprop(tree, reversed, targets, kWhite);
  REQUIRE(a.signal.leaves == b.signal.leaves);
  for (std::size_t i = 0; i < a.signal.size(); ++i) {
    CHECK(a.signal.values[i] == doctest::Approx(b.signal.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("subdivision and homogeneous merges are render-neutral") {
  SparseOctree tree = testing::random_tree(41, 3, 4, kUnit, 0.5, 0.0, 3.0);
  const Camera cam = test_camera();
  const Image before = render_image(tree, cam, kWhite, kExact);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    const auto leaves = tree.leaves();
    tree.split_leaf(leaves[rng() % leaves.size()]);
  }
  const Image split = render_image(tree, cam, kWhite, kExact);
  CHECK(image_max_diff(before, split) <= 1e-5);

  // Make one sibling set homogeneous, then merge it.
  for (std::uint32_t i : tree.preorder()) {
    if (tree.slot_is_leaf(i)) continue;
    const auto& kids = tree.slot_children(i);
    if (!std::all_of(kids.begin(), kids.end(), [&](auto c) { return tree.slot_is_leaf(c); })) continue;
    const LeafPayload p = tree.leaf_payload(tree.id_at(kids[0]));
    for (std::uint32_t c : kids) tree.set_payload(tree.id_at(c), p);
    const Image homog = render_image(tree, cam, kWhite, kExact);
    tree.merge_children(tree.id_at(i));
    CHECK(image_max_diff(homog, render_image(tree, cam, kWhite, kExact)) <= 1e-5);
    break;
  }
}

TEST_CASE("raising a leaf density never raises final transmittance") {
  SparseOctree tree = testing::random_tree(51, 3, 1, kUnit, 0.5, 0.0, 2.0);
  std::mt19937_64 rng(6);
  for (int r = 0; r < 100; ++r) {
    const Ray ray = testing::random_ray(rng, kUnit);
    const RenderOutput base = render_ray(tree, ray, kWhite, kExact);
    if (base.segments.empty()) continue;
    const std::uint32_t leaf = base.segments[rng() % base.segments.size()].leaf;
    float& s = tree.mutable_slot_payload(leaf)[0];
    const float old = s;
    s = old + 0.5f;
    CHECK(render_ray(tree, ray, kWhite, kExact).transmittance_final <= base.transmittance_final);
    s = old;
  }
}

TEST_CASE("opaque sphere silhouette matches the analytic projection") {
  ToySceneSpec spec;
  spec.kind = ToyKind::kSolidSphere;
  spec.radius = 0.55;
  spec.density = 200.0;
  const ToyScene scene = generate_toy_scene(spec, 6);
  const int n = 48;
  const Camera cam = look_at({0.0, -3.2, 0.4}, {0, 0, 0}, {0, 0, 1}, n, n, 0.69);
  std::vector<int> tree_mask(n * n), analytic(n * n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const Ray ray = cam.pixel_ray(x, y);
      const RenderOutput out = render_ray(scene.tree, ray, kWhite);
      tree_mask[y * n + x] = out.transmittance_final < 0.5;
      // Ray-sphere test against the analytic surface.
      const double b = dot::dot(ray.origin, ray.dir);
      const double c = dot::dot(ray.origin, ray.origin) - spec.radius * spec.radius;
      analytic[y * n + x] = b * b - c > 0.0;
    }
  }
  auto near = [&](const std::vector<int>& m, int x, int y) {
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int xx = x + dx, yy = y + dy;
        if (xx >= 0 && yy >= 0 && xx < n && yy < n && m[yy * n + xx]) return true;
      }
    return false;
  };
  int covered = 0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      covered += analytic[y * n + x];
      if (tree_mask[y * n + x]) CHECK(near(analytic, x, y));
      if (analytic[y * n + x]) CHECK(near(tree_mask, x, y));
    }
  }
  CHECK(covered > 100);
}
