#pragma once

#include <array>
#include <span>

#include "dot/geometry.hpp"

namespace dot {

inline constexpr int kMaxShDegree = 3;
inline constexpr int kMaxBasisCount = 16;

// Real SH basis values for degree 0..3, graphics normalization.
struct ShBasis {
  int degree = 0;
  std::array<double, kMaxBasisCount> values{};

  int count() const { return (degree + 1) * (degree + 1); }
  std::span<const double> view() const { return {values.data(), static_cast<std::size_t>(count())}; }
};

int sh_degree_for_basis_count(int basis_count);

// Throws InputError for a degree outside 0..3 or a direction whose norm is
// more than 1e-4 away from 1.
ShBasis eval_sh_basis(int degree, const Vec3& dir);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Pre-sigmoid channel values sum_b sh[k * B + b] * basis[b].
Vec3 sh_expand(std::span<const float> sh, const ShBasis& basis);

// View-dependent rgb in (0,1)^3 for a payload's sh block (3 * B floats).
Vec3 decode_color(std::span<const float> sh, const Vec3& dir);

}  // namespace dot
