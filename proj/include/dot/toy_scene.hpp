#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dot/camera.hpp"
#include "dot/dataset.hpp"
#include "dot/geometry.hpp"
#include "dot/octree.hpp"

namespace dot {

enum class ToyKind { kSolidSphere, kHollowShellWithCore, kTwoBoxes, kCheckerSphere };

struct ToySceneSpec {
  ToyKind kind = ToyKind::kSolidSphere;
  double bounds_half = 1.0;  // tree bounds: cube of this half-extent at the origin
  Vec3 center;
  double radius = 0.6;         // sphere / outer shell radius
  double inner_radius = 0.45;  // shell cavity
  double core_radius = 0.2;
  double density = 30.0;
  double core_density = 30.0;
  Vec3 color{0.85, 0.35, 0.2};
  Vec3 color_b{0.15, 0.45, 0.85};  // checker second color / second box
  Vec3 core_color{0.2, 0.8, 0.3};
  int checker_cells = 6;  // cells along the polar angle; twice as many around
  Vec3 box_a_lo{-0.7, -0.5, -0.5}, box_a_hi{-0.1, 0.3, 0.2};
  Vec3 box_b_lo{0.15, -0.2, -0.6}, box_b_hi{0.65, 0.6, 0.4};
  std::uint64_t seed = 0;
  double init_noise = 0.0;  // uniform jitter on initial SH, drawn with seed

  // Throws ConfigError when the geometry leaves the bounds.
  void validate() const;
};

ToyKind parse_toy_kind(const std::string& name);
std::string toy_kind_name(ToyKind kind);

// Analytic density and color of a toy scene.
class ToyField {
 public:
  explicit ToyField(const ToySceneSpec& spec);

  const ToySceneSpec& spec() const { return spec_; }
  Cube bounds() const { return {{0.0, 0.0, 0.0}, spec_.bounds_half}; }
  double density(const Vec3& p) const;
  Vec3 color(const Vec3& p) const;
  // Checker cell parity (0 or 1) of the direction from the sphere center.
  int checker_parity(const Vec3& p) const;

 private:
  ToySceneSpec spec_;
};

struct ToyScene {
  SparseOctree tree;
  ToyField field;
};

// Dense tree at `depth`: sigma from the field at leaf centers, degree-0 SH
// encoding the field color through the inverse sigmoid.
ToyScene generate_toy_scene(const ToySceneSpec& spec, int depth, int basis_count = 1,
                            int max_depth = kDefaultMaxDepth);

// Fine midpoint ray march through the analytic field.
Image render_field(const ToyField& field, const Camera& camera, const Vec3& background,
                   double step, int workers = 1);

struct ToyDatasetSpec {
  ToySceneSpec scene;
  int train_views = 16;
  int test_views = 4;
  int width = 48;
  int height = 48;
  double orbit_radius = 3.2;
  double camera_angle_x = 0.69;
  double gt_step = 0.004;  // world units
  Vec3 background{1.0, 1.0, 1.0};
};

struct ToyViews {
  std::vector<View> train;
  std::vector<View> test;
};

ToyViews make_toy_views(const ToyDatasetSpec& spec, int workers = 1);

// Accepts either a scene spec or a dataset spec ({"scene": {...}, ...}).
ToyDatasetSpec load_toy_dataset_spec(const std::filesystem::path& path);
ToyDatasetSpec parse_toy_dataset_spec(const std::string& json_text);

}  // namespace dot
