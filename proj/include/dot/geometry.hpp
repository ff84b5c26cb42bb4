#pragma once

#include <array>
#include <cmath>

namespace dot {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  constexpr double& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) { return v / norm(v); }
constexpr Vec3 hadamard(const Vec3& a, const Vec3& b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }

// Axis-aligned cube. Membership is half-open: [lo, hi) on every axis.
struct Cube {
  Vec3 center;
  double half = 1.0;

  constexpr Vec3 lo() const { return {center.x - half, center.y - half, center.z - half}; }
  constexpr Vec3 hi() const { return {center.x + half, center.y + half, center.z + half}; }
  constexpr double edge() const { return 2.0 * half; }
  constexpr double volume() const { return edge() * edge() * edge(); }
  constexpr bool contains(const Vec3& p) const {
    for (int a = 0; a < 3; ++a) {
      if (p[a] < center[a] - half || p[a] >= center[a] + half) return false;
    }
    return true;
  }
  constexpr bool operator==(const Cube&) const = default;
};

// Child octant index: bit 0 = x upper half, bit 1 = y, bit 2 = z.
constexpr Vec3 child_center(const Vec3& parent_center, double parent_half, int octant) {
  const double q = parent_half * 0.5;
  return {parent_center.x + ((octant & 1) ? q : -q), parent_center.y + ((octant & 2) ? q : -q),
          parent_center.z + ((octant & 4) ? q : -q)};
}

constexpr int octant_of(const Vec3& center, const Vec3& p) {
  return (p.x >= center.x ? 1 : 0) | (p.y >= center.y ? 2 : 0) | (p.z >= center.z ? 4 : 0);
}

}  // namespace dot
