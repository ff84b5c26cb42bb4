#include "dot/camera.hpp"

#include <cmath>
#include <numbers>

#include "dot/error.hpp"

namespace dot {

double Camera::focal_from_angle(int width, double camera_angle_x) {
  return 0.5 * width / std::tan(0.5 * camera_angle_x);
}

Vec3 Camera::rotate(const Vec3& v) const {
  const auto& m = cam_to_world;
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[4] * v.x + m[5] * v.y + m[6] * v.z,
          m[8] * v.x + m[9] * v.y + m[10] * v.z};
}

Vec3 Camera::pixel_direction_camera(int x, int y) const {
  return {(x + 0.5 - 0.5 * width) / focal, -(y + 0.5 - 0.5 * height) / focal, -1.0};
}

Ray Camera::pixel_ray(int x, int y) const {
  Ray ray;
  ray.origin = position();
  ray.dir = normalized(rotate(pixel_direction_camera(x, y)));
  return ray;
}

std::vector<Ray> Camera::rays() const {
  std::vector<Ray> out;
  out.reserve(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.push_back(pixel_ray(x, y));
  }
  return out;
}

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw InputError("camera size must be positive");
  if (!(focal > 0.0) || !std::isfinite(focal)) throw InputError("camera focal must be positive");
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double d = 0.0;
      for (int k = 0; k < 3; ++k) d += cam_to_world[k * 4 + i] * cam_to_world[k * 4 + j];
      if (std::abs(d - (i == j ? 1.0 : 0.0)) > 1e-4) {
        throw InputError("camera rotation block is not orthonormal");
      }
    }
  }
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
               double camera_angle_x) {
  const Vec3 back = normalized(eye - target);  // camera +z
  Vec3 right = cross(up, back);
  if (norm(right) < 1e-9) right = cross(Vec3{1.0, 0.0, 0.0}, back);
  right = normalized(right);
  const Vec3 cam_up = cross(back, right);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.focal = Camera::focal_from_angle(width, camera_angle_x);
  cam.cam_to_world = {right.x, cam_up.x, back.x, eye.x,  //
                      right.y, cam_up.y, back.y, eye.y,  //
                      right.z, cam_up.z, back.z, eye.z,  //
                      0.0,     0.0,      0.0,    1.0};
  return cam;
}

std::vector<Camera> orbit_cameras(int count, double radius, int width, int height,
                                  double camera_angle_x, double phase) {
  std::vector<Camera> out;
  out.reserve(count);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    // Fibonacci lattice, kept away from the poles so the up hint is valid.
    const double z = 0.9 * (1.0 - 2.0 * (i + 0.5) / count);
    const double r = std::sqrt(1.0 - z * z);
    const double theta = golden * i + 2.0 * std::numbers::pi * phase;
    const Vec3 eye{radius * r * std::cos(theta), radius * r * std::sin(theta), radius * z};
    out.push_back(look_at(eye, {0.0, 0.0, 0.0}, {0.0, 0.0, 1.0}, width, height, camera_angle_x));
  }
  return out;
}

}  // namespace dot
