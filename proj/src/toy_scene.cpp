#include "dot/toy_scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "dot/error.hpp"
#include "dot/parallel.hpp"
#include "dot/sh.hpp"
#include "json.hpp"

namespace dot {

namespace {

using nlohmann::json;

constexpr double kShC0 = 0.28209479177387814;

bool inside_box(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  for (int a = 0; a < 3; ++a) {
    if (p[a] < lo[a] || p[a] >= hi[a]) return false;
  }
  return true;
}

Vec3 read_vec3(const json& j, const char* key, const Vec3& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j[key];
  if (!v.is_array() || v.size() != 3) throw ConfigError(std::string(key) + " must be a 3-vector");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

ToySceneSpec scene_from_json(const json& j) {
  ToySceneSpec s;
  if (!j.is_object()) throw ConfigError("toy scene spec must be a JSON object");
  if (j.contains("kind")) s.kind = parse_toy_kind(j["kind"].get<std::string>());
  s.bounds_half = j.value("bounds_half", s.bounds_half);
  s.center = read_vec3(j, "center", s.center);
  s.radius = j.value("radius", s.radius);
  s.inner_radius = j.value("inner_radius", s.inner_radius);
  s.core_radius = j.value("core_radius", s.core_radius);
  s.density = j.value("density", s.density);
  s.core_density = j.value("core_density", s.core_density);
  s.color = read_vec3(j, "color", s.color);
  s.color_b = read_vec3(j, "color_b", s.color_b);
  s.core_color = read_vec3(j, "core_color", s.core_color);
  s.checker_cells = j.value("checker_cells", s.checker_cells);
  s.box_a_lo = read_vec3(j, "box_a_lo", s.box_a_lo);
  s.box_a_hi = read_vec3(j, "box_a_hi", s.box_a_hi);
  s.box_b_lo = read_vec3(j, "box_b_lo", s.box_b_lo);
  s.box_b_hi = read_vec3(j, "box_b_hi", s.box_b_hi);
  s.seed = j.value("seed", s.seed);
  s.init_noise = j.value("init_noise", s.init_noise);
  s.validate();
  return s;
}

}  // namespace

ToyKind parse_toy_kind(const std::string& name) {
  if (name == "solid_sphere") return ToyKind::kSolidSphere;
  if (name == "hollow_shell_with_core") return ToyKind::kHollowShellWithCore;
  if (name == "two_boxes") return ToyKind::kTwoBoxes;
  if (name == "checker_sphere") return ToyKind::kCheckerSphere;
  throw ConfigError("unknown toy scene kind '" + name + "'");
}

std::string toy_kind_name(ToyKind kind) {
  switch (kind) {
    case ToyKind::kSolidSphere: return "solid_sphere";
    case ToyKind::kHollowShellWithCore: return "hollow_shell_with_core";
    case ToyKind::kTwoBoxes: return "two_boxes";
    case ToyKind::kCheckerSphere: return "checker_sphere";
  }
  return "unknown";
}

void ToySceneSpec::validate() const {
  if (!(bounds_half > 0.0)) throw ConfigError("bounds_half must be positive");
  if (density < 0.0 || core_density < 0.0) throw ConfigError("densities must be non-negative");
  if (radius < 0.0) throw ConfigError("radius must be non-negative");
  auto sphere_fits = [&](double r) {
    for (int a = 0; a < 3; ++a) {
      if (center[a] - r < -bounds_half || center[a] + r > bounds_half) return false;
    }
    return true;
  };
  switch (kind) {
    case ToyKind::kSolidSphere:
    case ToyKind::kCheckerSphere:
      if (!sphere_fits(radius)) throw ConfigError("sphere leaves the tree bounds");
      if (checker_cells < 1) throw ConfigError("checker_cells must be positive");
      break;
    case ToyKind::kHollowShellWithCore:
      if (!sphere_fits(radius)) throw ConfigError("shell leaves the tree bounds");
      if (!(core_radius <= inner_radius && inner_radius <= radius)) {
        throw ConfigError("shell radii must satisfy core <= inner <= outer");
      }
      break;
    case ToyKind::kTwoBoxes:
      for (const Vec3* v : {&box_a_lo, &box_a_hi, &box_b_lo, &box_b_hi}) {
        for (int a = 0; a < 3; ++a) {
          if ((*v)[a] < -bounds_half || (*v)[a] > bounds_half) {
            throw ConfigError("box leaves the tree bounds");
          }
        }
      }
      break;
  }
}

ToyField::ToyField(const ToySceneSpec& spec) : spec_(spec) { spec_.validate(); }

double ToyField::density(const Vec3& p) const {
  const double r = norm(p - spec_.center);
  switch (spec_.kind) {
    case ToyKind::kSolidSphere:
    case ToyKind::kCheckerSphere:
      return r < spec_.radius ? spec_.density : 0.0;
    case ToyKind::kHollowShellWithCore:
      if (r < spec_.core_radius) return spec_.core_density;
      if (r >= spec_.inner_radius && r < spec_.radius) return spec_.density;
      return 0.0;
    case ToyKind::kTwoBoxes:
      if (inside_box(p, spec_.box_a_lo, spec_.box_a_hi)) return spec_.density;
      if (inside_box(p, spec_.box_b_lo, spec_.box_b_hi)) return spec_.core_density;
      return 0.0;
  }
  return 0.0;
}

int ToyField::checker_parity(const Vec3& p) const {
  const Vec3 d = p - spec_.center;
  const double r = norm(d);
  const double theta = r > 0.0 ? std::acos(std::clamp(d.z / r, -1.0, 1.0)) : 0.0;
  double phi = std::atan2(d.y, d.x);
  if (phi < 0.0) phi += 2.0 * std::numbers::pi;
  const int n = spec_.checker_cells;
  const int i = std::min(n - 1, static_cast<int>(theta / std::numbers::pi * n));
  const int j = std::min(2 * n - 1, static_cast<int>(phi / (2.0 * std::numbers::pi) * 2 * n));
  return (i + j) & 1;
}

Vec3 ToyField::color(const Vec3& p) const {
  switch (spec_.kind) {
    case ToyKind::kSolidSphere:
      return spec_.color;
    case ToyKind::kCheckerSphere:
      return checker_parity(p) ? spec_.color_b : spec_.color;
    case ToyKind::kHollowShellWithCore:
      return norm(p - spec_.center) < spec_.core_radius ? spec_.core_color : spec_.color;
    case ToyKind::kTwoBoxes:
      return inside_box(p, spec_.box_b_lo, spec_.box_b_hi) ? spec_.color_b : spec_.color;
  }
  return spec_.color;
}

ToyScene generate_toy_scene(const ToySceneSpec& spec, int depth, int basis_count, int max_depth) {
  ToyField field(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<float> noise(-1.0f, 1.0f);
  const int b_count = basis_count;
  PayloadSource init = [&](const Cube& cell, std::span<float> payload) {
    payload[0] = static_cast<float>(field.density(cell.center));
    const Vec3 c = field.color(cell.center);
    std::fill(payload.begin() + 1, payload.end(), 0.0f);
    for (int k = 0; k < 3; ++k) {
      const double clamped = std::clamp(c[k], 1e-3, 1.0 - 1e-3);
      payload[1 + k * b_count] = static_cast<float>(logit(clamped) / kShC0);
    }
    if (spec.init_noise > 0.0) {
      for (std::size_t i = 1; i < payload.size(); ++i) {
        payload[i] += static_cast<float>(spec.init_noise) * noise(rng);
      }
    }
  };
  SparseOctree tree = build_dense(depth, field.bounds(), basis_count, init, max_depth);
  return {std::move(tree), std::move(field)};
}

Image render_field(const ToyField& field, const Camera& camera, const Vec3& background,
                   double step, int workers) {
  if (!(step > 0.0)) throw ConfigError("ray-march step must be positive");
  Image image(camera.width, camera.height);
  const Cube bounds = field.bounds();
  parallel_for(static_cast<std::size_t>(camera.height), workers, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < camera.width; ++x) {
      const Ray ray = camera.pixel_ray(x, y);
      double t0 = ray.t_near, t1 = ray.t_far;
      for (int a = 0; a < 3; ++a) {
        if (ray.dir[a] == 0.0) {
          if (ray.origin[a] < bounds.lo()[a] || ray.origin[a] >= bounds.hi()[a]) t1 = -1.0;
          continue;
        }
        double ta = (bounds.lo()[a] - ray.origin[a]) / ray.dir[a];
        double tb = (bounds.hi()[a] - ray.origin[a]) / ray.dir[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
      }
      Vec3 rgb;
      double transmittance = 1.0;
      for (double t = t0; t < t1 && transmittance > 1e-6; t += step) {
        const double dt = std::min(step, t1 - t);
        const Vec3 p = ray.origin + (t + 0.5 * dt) * ray.dir;
        const double sigma = field.density(p);
        if (sigma <= 0.0) continue;
        const double alpha = -std::expm1(-sigma * dt);
        rgb += (transmittance * alpha) * field.color(p);
        transmittance *= 1.0 - alpha;
      }
      rgb += transmittance * background;
      image.set_rgb(x, y, rgb);
    }
  });
  return image;
}

ToyViews make_toy_views(const ToyDatasetSpec& spec, int workers) {
  ToyField field(spec.scene);
  ToyViews out;
  auto render_all = [&](const std::vector<Camera>& cams, std::vector<View>& dst) {
    for (const Camera& cam : cams) {
      dst.push_back({cam, render_field(field, cam, spec.background, spec.gt_step, workers)});
    }
  };
  render_all(orbit_cameras(spec.train_views, spec.orbit_radius, spec.width, spec.height,
                           spec.camera_angle_x, 0.0),
             out.train);
  render_all(orbit_cameras(spec.test_views, spec.orbit_radius, spec.width, spec.height,
                           spec.camera_angle_x, 0.37),
             out.test);
  return out;
}

ToyDatasetSpec parse_toy_dataset_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed toy spec JSON: ") + e.what());
  }
  ToyDatasetSpec spec;
  try {
    if (j.contains("scene")) {
      spec.scene = scene_from_json(j["scene"]);
      spec.train_views = j.value("train_views", spec.train_views);
      spec.test_views = j.value("test_views", spec.test_views);
      spec.width = j.value("width", spec.width);
      spec.height = j.value("height", spec.height);
      spec.orbit_radius = j.value("orbit_radius", spec.orbit_radius);
      spec.camera_angle_x = j.value("camera_angle_x", spec.camera_angle_x);
      spec.gt_step = j.value("gt_step", spec.gt_step);
      spec.background = read_vec3(j, "background", spec.background);
    } else {
      spec.scene = scene_from_json(j);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad toy spec field: ") + e.what());
  }
  if (spec.train_views < 1 || spec.test_views < 0 || spec.width < 1 || spec.height < 1) {
    throw ConfigError("toy dataset view counts and sizes must be positive");
  }
  if (spec.orbit_radius <= std::sqrt(3.0) * spec.scene.bounds_half) {
    throw ConfigError("orbit radius must place cameras outside the scene bounds");
  }
  return spec;
}

ToyDatasetSpec load_toy_dataset_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(LoadError::Kind::kMissingFile, "missing toy spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_toy_dataset_spec(ss.str());
}

}  // namespace dot
