#pragma once

#include <array>
#include <cmath>

namespace mdt {

using Vec3 = std::array<double, 3>;
/// Row-major 3x3; entry (i, j) = d v_i / d x_j.
using Tensor = std::array<double, 9>;

inline double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }

/// (a . grad) v for a vector field with gradient G: sum_j G(i,j) a_j.
inline Vec3 directional(const Tensor& G, const Vec3& a) {
  return {G[0] * a[0] + G[1] * a[1] + G[2] * a[2], G[3] * a[0] + G[4] * a[1] + G[5] * a[2],
          G[6] * a[0] + G[7] * a[1] + G[8] * a[2]};
}

}  // namespace mdt
