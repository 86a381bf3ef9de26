#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace ddmres {

/// Quadrature rule on the reference interval [-1, 1].
struct Rule1D {
  std::vector<double> points;
  std::vector<double> weights;
  std::size_t size() const noexcept { return points.size(); }
  /// Polynomial degree integrated exactly.
  int exactness = 0;
};

/// n-point Gauss-Legendre rule, exact for degree 2n-1.
const Rule1D& gauss_legendre(int n);

/// n-point Gauss-Lobatto rule (n >= 2), exact for degree 2n-3. Nodes include +-1.
const Rule1D& gauss_lobatto(int n);

/// Smallest Gauss-Legendre rule exact for the given polynomial degree.
const Rule1D& gauss_for_degree(int degree);

/// Rule on a triangle in barycentric coordinates; weights sum to 1, so
/// the integral over T is |T| * sum w_i f(x_i).
struct TriangleRule {
  std::vector<std::array<double, 3>> bary;
  std::vector<double> weights;
  int exactness = 0;
  std::size_t size() const noexcept { return weights.size(); }
};

/// Six-point symmetric rule of degree 4.
const TriangleRule& triangle_degree4();

/// Collapsed (Duffy) tensor Gauss rule with n points per direction, exact
/// for degree 2n-2.
TriangleRule triangle_collapsed(int n);

using ScalarFn = std::function<double(double)>;

/// Points and weights of a composite rule on a physical interval.
struct PointRule {
  std::vector<double> x;
  std::vector<double> w;
};

/// Composite Gauss-Legendre rule on [a, b] split at `breaks` and graded toward
/// `singular` points; see integrate().
PointRule composite_rule(double a, double b, std::span<const double> breaks = {},
                         std::span<const double> singular = {}, int points_per_panel = 10);

/// Composite Gauss-Legendre integration of f on [a, b].
///
/// The interval is split at each entry of `breaks` lying strictly inside
/// (a, b). Every entry of `singular` inside [a, b] additionally gets a
/// geometric mesh graded toward it (ratio 0.15, 40 levels, twice the points
/// per panel), which handles
/// integrable endpoint singularities such as |x - s|^(-2/3) and kinks
/// such as |x - s|^1.01.
double integrate(const ScalarFn& f, double a, double b, std::span<const double> breaks = {},
                 std::span<const double> singular = {}, int points_per_panel = 10);

/// Adaptive Gauss-Kronrod (15-point) integration to the given relative tolerance.
double integrate_adaptive(const ScalarFn& f, double a, double b, double rel_tol = 1e-12);

}  // namespace ddmres
