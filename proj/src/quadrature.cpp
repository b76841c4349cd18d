#include "mdt/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mdt {

namespace {

QuadratureRule collapsed_rule(int sdim, int order) {
  QuadratureRule rule;
  if (sdim == 1) {
    for (const auto& [x, w] : gauss_legendre_01((order + 2) / 2))
      rule.push_back({{1.0 - x, x, 0.0, 0.0}, w});
    return rule;
  }
  if (sdim == 2) {
    // x = s, y = t (1 - s), jacobian (1 - s).
    const auto gs = gauss_legendre_01((order + 3) / 2);
    const auto gt = gauss_legendre_01((order + 2) / 2);
    for (const auto& [s, ws] : gs)
      for (const auto& [t, wt] : gt) {
        const double x = s, y = t * (1.0 - s);
        rule.push_back({{1.0 - x - y, x, y, 0.0}, ws * wt * (1.0 - s)});
      }
    return rule;
  }
  // x = s, y = t (1 - s), z = r (1 - s)(1 - t), jacobian (1 - s)^2 (1 - t).
  const auto gs = gauss_legendre_01((order + 4) / 2);
  const auto gt = gauss_legendre_01((order + 3) / 2);
  const auto gr = gauss_legendre_01((order + 2) / 2);
  for (const auto& [s, ws] : gs)
    for (const auto& [t, wt] : gt)
      for (const auto& [r, wr] : gr) {
        const double x = s, y = t * (1.0 - s), z = r * (1.0 - s) * (1.0 - t);
        rule.push_back({{1.0 - x - y - z, x, y, z},
                        ws * wt * wr * (1.0 - s) * (1.0 - s) * (1.0 - t)});
      }
  return rule;
}

void add_orbit3(QuadratureRule& rule, double a, double w) {
  const double b = 1.0 - 2.0 * a;
  rule.push_back({{a, a, b, 0.0}, w});
  rule.push_back({{a, b, a, 0.0}, w});
  rule.push_back({{b, a, a, 0.0}, w});
}

void add_orbit6(QuadratureRule& rule, double a, double b, double w) {
  const double c = 1.0 - a - b;
  rule.push_back({{a, b, c, 0.0}, w});
  rule.push_back({{a, c, b, 0.0}, w});
  rule.push_back({{b, a, c, 0.0}, w});
  rule.push_back({{b, c, a, 0.0}, w});
  rule.push_back({{c, a, b, 0.0}, w});
  rule.push_back({{c, b, a, 0.0}, w});
}

// Symmetric triangle rules (Strang-Fix / Dunavant), weights scaled to area 1/2.
QuadratureRule triangle_rule(int order) {
  QuadratureRule rule;
  switch (order) {
    case 1:
      rule.push_back({{1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0}, 0.5});
      return rule;
    case 2:
      add_orbit3(rule, 1.0 / 6, 1.0 / 6);
      return rule;
    case 3:
    case 4:
      add_orbit3(rule, 0.445948490915965, 0.5 * 0.223381589678011);
      add_orbit3(rule, 0.091576213509771, 0.5 * 0.109951743655322);
      return rule;
    case 5:
      rule.push_back({{1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0}, 0.5 * 0.225});
      add_orbit3(rule, 0.470142064105115, 0.5 * 0.132394152788506);
      add_orbit3(rule, 0.101286507323456, 0.5 * 0.125939180544827);
      return rule;
    case 6:
      add_orbit3(rule, 0.249286745170910, 0.5 * 0.116786275726379);
      add_orbit3(rule, 0.063089014491502, 0.5 * 0.050844906370207);
      add_orbit6(rule, 0.053145049844817, 0.310352451033784, 0.5 * 0.082851075618374);
      return rule;
    default:
      return collapsed_rule(2, order);
  }
}

QuadratureRule tetrahedron_rule(int order) {
  QuadratureRule rule;
  if (order == 1) {
    rule.push_back({{0.25, 0.25, 0.25, 0.25}, 1.0 / 6});
    return rule;
  }
  if (order == 2) {
    const double a = 0.1381966011250105, b = 1.0 - 3.0 * a;
    for (int i = 0; i < 4; ++i) {
      QuadraturePoint q{{a, a, a, a}, 1.0 / 24};
      q.bary[i] = b;
      rule.push_back(q);
    }
    return rule;
  }
  return collapsed_rule(3, order);
}

}  // namespace

std::vector<std::array<double, 2>> gauss_legendre_01(int n) {
  if (n < 1) throw std::invalid_argument("Gauss-Legendre needs at least one node");
  std::vector<std::array<double, 2>> out(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged node
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    out[n - 1 - i] = {0.5 * (1.0 + x), 0.5 * w};
  }
  return out;
}

const QuadratureRule& simplex_rule(int sdim, int order) {
  if (sdim < 1 || sdim > 3) throw std::invalid_argument("simplex dimension must be 1, 2 or 3");
  if (order < 1) throw std::invalid_argument("quadrature order must be >= 1");
  static std::mutex mutex;
  static std::map<std::pair<int, int>, QuadratureRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find({sdim, order});
  if (it != cache.end()) return it->second;
  QuadratureRule rule;
  if (sdim == 1)
    rule = collapsed_rule(1, order);
  else if (sdim == 2)
    rule = triangle_rule(order);
  else
    rule = tetrahedron_rule(order);
  return cache.emplace(std::pair{sdim, order}, std::move(rule)).first->second;
}

const QuadratureRule& quadrature_rule(int dim, int order) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("quadrature dimension must be 2 or 3");
  if (order < 1 || order > 6)
    throw std::invalid_argument("unsupported quadrature order " + std::to_string(order));
  return simplex_rule(dim, order);
}

}  // namespace mdt
