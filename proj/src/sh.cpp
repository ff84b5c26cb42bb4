#include "dot/sh.hpp"

#include <cmath>
#include <string>

#include "dot/error.hpp"

namespace dot {

namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                          0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                          -0.5900435899266435};

}  // namespace

int sh_degree_for_basis_count(int basis_count) {
  switch (basis_count) {
    case 1: return 0;
    case 4: return 1;
    case 9: return 2;
    case 16: return 3;
    default: throw InputError("invalid SH basis count " + std::to_string(basis_count));
  }
}

ShBasis eval_sh_basis(int degree, const Vec3& dir) {
  if (degree < 0 || degree > kMaxShDegree) {
    throw InputError("SH degree must be in 0..3, got " + std::to_string(degree));
  }
  if (std::abs(norm(dir) - 1.0) > 1e-4) throw InputError("SH direction is not unit length");
  ShBasis out;
  out.degree = degree;
  auto& v = out.values;
  v[0] = kC0;
  if (degree < 1) return out;
  const double x = dir.x, y = dir.y, z = dir.z;
  v[1] = -kC1 * y;
  v[2] = kC1 * z;
  v[3] = -kC1 * x;
  if (degree < 2) return out;
  const double xx = x * x, yy = y * y, zz = z * z;
  const double xy = x * y, yz = y * z, xz = x * z;
  v[4] = kC2[0] * xy;
  v[5] = kC2[1] * yz;
  v[6] = kC2[2] * (2.0 * zz - xx - yy);
  v[7] = kC2[3] * xz;
  v[8] = kC2[4] * (xx - yy);
  if (degree < 3) return out;
  v[9] = kC3[0] * y * (3.0 * xx - yy);
  v[10] = kC3[1] * xy * z;
  v[11] = kC3[2] * y * (4.0 * zz - xx - yy);
  v[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  v[13] = kC3[4] * x * (4.0 * zz - xx - yy);
  v[14] = kC3[5] * z * (xx - yy);
  v[15] = kC3[6] * x * (xx - 3.0 * yy);
  return out;
}

Vec3 sh_expand(std::span<const float> sh, const ShBasis& basis) {
  const std::size_t b_count = static_cast<std::size_t>(basis.count());
  if (sh.size() != 3 * b_count) throw InputError("sh block length does not match basis");
  Vec3 raw;
  for (int k = 0; k < 3; ++k) {
    double acc = 0.0;
    for (std::size_t b = 0; b < b_count; ++b) {
      acc += static_cast<double>(sh[k * b_count + b]) * basis.values[b];
    }
    raw[k] = acc;
  }
  return raw;
}

Vec3 decode_color(std::span<const float> sh, const Vec3& dir) {
  const int degree = sh_degree_for_basis_count(static_cast<int>(sh.size() / 3));
  const Vec3 raw = sh_expand(sh, eval_sh_basis(degree, dir));
  return {sigmoid(raw.x), sigmoid(raw.y), sigmoid(raw.z)};
}

}  // namespace dot
