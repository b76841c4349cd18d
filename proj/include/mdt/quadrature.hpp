#pragma once

#include <array>
#include <vector>

namespace mdt {

struct QuadraturePoint {
  std::array<double, 4> bary{};  // barycentric coordinates, first sdim+1 used
  double weight = 0.0;           // weights sum to the reference volume 1/sdim!
};

using QuadratureRule = std::vector<QuadraturePoint>;

/// Rule on the reference simplex of dimension dim (2 or 3), exact for
/// polynomials of total degree <= order, order in [1,6].
const QuadratureRule& quadrature_rule(int dim, int order);

/// Rule on a simplex of dimension 1..3, any order >= 1. Used for cells
/// (sdim = dim) and boundary facets (sdim = dim - 1).
const QuadratureRule& simplex_rule(int sdim, int order);

/// Gauss-Legendre nodes and weights on [0,1].
std::vector<std::array<double, 2>> gauss_legendre_01(int n);

}  // namespace mdt
