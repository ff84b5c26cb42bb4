#pragma once

#include <array>
#include <vector>

#include "dot/geometry.hpp"

namespace dot {

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit
  double t_near = 0.0;
  double t_far = 1e30;
};

// Pinhole camera with OpenGL-style axes: looks down -z, +y up.
struct Camera {
  int width = 0;
  int height = 0;
  double focal = 0.0;                    // pixels
  std::array<double, 16> cam_to_world{};  // row-major 4x4

  static double focal_from_angle(int width, double camera_angle_x);

  Vec3 position() const { return {cam_to_world[3], cam_to_world[7], cam_to_world[11]}; }
  // Camera-frame direction to world frame (rotation block only).
  Vec3 rotate(const Vec3& v) const;
  // Unnormalized camera-frame direction through the pixel center.
  Vec3 pixel_direction_camera(int x, int y) const;
  Ray pixel_ray(int x, int y) const;
  std::vector<Ray> rays() const;

  // Throws InputError when the rotation block is not orthonormal (1e-4).
  void validate() const;
};

// Camera at `eye` looking at `target` with world up hint.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
               double camera_angle_x);

// `count` cameras spread over a sphere of `radius` around the origin
// (Fibonacci lattice), all looking at the origin. `phase` in [0,1) rotates
// the lattice so train and test orbits do not coincide.
std::vector<Camera> orbit_cameras(int count, double radius, int width, int height,
                                  double camera_angle_x, double phase = 0.0);

}  // namespace dot
