#include "ddmres/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ddmres/error.hpp"

namespace ddmres {

namespace {

Rule1D make_gauss_legendre(int n) {
  Rule1D rule;
  rule.points.resize(n);
  rule.weights.resize(n);
  rule.exactness = 2 * n - 1;
  for (int i = 0; i < (n + 1) / 2; ++i) {
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
    // recompute derivative at the converged root
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.points[i] = -x;
    rule.points[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.points[n / 2] = 0.0;
  return rule;
}

Rule1D make_gauss_lobatto(int n) {
  const int N = n - 1;
  std::vector<double> x(n), xold(n, 2.0);
  std::vector<std::vector<double>> P(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i) x[i] = -std::cos(std::numbers::pi * i / N);
  for (int it = 0; it < 200; ++it) {
    double change = 0.0;
    for (int i = 0; i < n; ++i) change = std::max(change, std::abs(x[i] - xold[i]));
    if (change < 1e-16) break;
    xold = x;
    for (int i = 0; i < n; ++i) {
      P[i][0] = 1.0;
      P[i][1] = x[i];
      for (int k = 2; k <= N; ++k)
        P[i][k] = ((2.0 * k - 1.0) * x[i] * P[i][k - 1] - (k - 1.0) * P[i][k - 2]) / k;
      x[i] = xold[i] - (x[i] * P[i][N] - P[i][N - 1]) / (n * P[i][N]);
    }
  }
  Rule1D rule;
  rule.points = x;
  rule.weights.resize(n);
  rule.exactness = 2 * n - 3;
  for (int i = 0; i < n; ++i) rule.weights[i] = 2.0 / (N * n * P[i][N] * P[i][N]);
  rule.points.front() = -1.0;
  rule.points.back() = 1.0;
  return rule;
}

template <class Make>
const Rule1D& cached(std::map<int, Rule1D>& cache, std::mutex& m, int n, Make make) {
  std::lock_guard lock(m);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make(n)).first;
  return it->second;
}

void gauss_panel(double a, double b, const Rule1D& rule, PointRule& out) {
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (std::size_t q = 0; q < rule.size(); ++q) {
    out.x.push_back(mid + half * rule.points[q]);
    out.w.push_back(half * rule.weights[q]);
  }
}

constexpr double kGradingRatio = 0.15;
constexpr int kGradingLevels = 40;

// Panels on [a, b] graded geometrically toward a (toward_left) or b.
void graded_panel(double a, double b, bool toward_left, const Rule1D& rule, PointRule& out) {
  double len = b - a;
  const double s = toward_left ? a : b;
  // below this width the panels no longer separate from the singular point
  const double floor = 128.0 * std::numeric_limits<double>::epsilon() * std::abs(s);
  for (int level = 0; level < kGradingLevels && len * kGradingRatio > floor; ++level) {
    const double inner = len * kGradingRatio;
    if (toward_left)
      gauss_panel(a + inner, a + len, rule, out);
    else
      gauss_panel(b - len, b - inner, rule, out);
    len = inner;
  }
  const std::size_t first = out.x.size();
  if (toward_left)
    gauss_panel(a, a + len, rule, out);
  else
    gauss_panel(b - len, b, rule, out);
  // keep a few ulp off s: f(x) often cancels to f(s) within rounding there
  const double gap = 64.0 * std::abs(std::nextafter(s, toward_left ? b : a) - s);
  for (std::size_t i = first; i < out.x.size(); ++i) {
    if (toward_left)
      out.x[i] = std::max(out.x[i], s + gap);
    else
      out.x[i] = std::min(out.x[i], s - gap);
  }
}

}  // namespace

const Rule1D& gauss_legendre(int n) {
  require(n >= 1, ErrorCode::InvalidArgument, "Gauss-Legendre rule needs n >= 1");
  static std::map<int, Rule1D> cache;
  static std::mutex m;
  return cached(cache, m, n, make_gauss_legendre);
}

const Rule1D& gauss_lobatto(int n) {
  require(n >= 2, ErrorCode::InvalidArgument, "Gauss-Lobatto rule needs n >= 2");
  static std::map<int, Rule1D> cache;
  static std::mutex m;
  return cached(cache, m, n, make_gauss_lobatto);
}

const Rule1D& gauss_for_degree(int degree) { return gauss_legendre(std::max(1, (degree + 2) / 2)); }

const TriangleRule& triangle_degree4() {
  static const TriangleRule rule = [] {
    TriangleRule r;
    const double a1 = 0.445948490915965, b1 = 1.0 - 2.0 * a1, w1 = 0.223381589678011;
    const double a2 = 0.091576213509771, b2 = 1.0 - 2.0 * a2, w2 = 0.109951743655322;
    r.bary = {{b1, a1, a1}, {a1, b1, a1}, {a1, a1, b1}, {b2, a2, a2}, {a2, b2, a2}, {a2, a2, b2}};
    r.weights = {w1, w1, w1, w2, w2, w2};
    r.exactness = 4;
    return r;
  }();
  return rule;
}

TriangleRule triangle_collapsed(int n) {
  const Rule1D& g = gauss_legendre(n);
  TriangleRule r;
  r.exactness = 2 * n - 2;
  for (int i = 0; i < n; ++i) {
    const double s = 0.5 * (g.points[i] + 1.0);
    for (int j = 0; j < n; ++j) {
      const double t = 0.5 * (g.points[j] + 1.0);
      // (s, t) in the unit square -> (l1, l2) = (s (1 - t), t)
      const double l1 = s * (1.0 - t), l2 = t;
      r.bary.push_back({1.0 - l1 - l2, l1, l2});
      // reference area 1/2: weights normalised to sum to 1
      r.weights.push_back(0.25 * g.weights[i] * g.weights[j] * (1.0 - t) * 2.0);
    }
  }
  return r;
}

PointRule composite_rule(double a, double b, std::span<const double> breaks, std::span<const double> singular,
                         int points_per_panel) {
  PointRule out;
  if (!(b > a)) return out;
  std::vector<double> nodes{a, b};
  for (double x : breaks)
    if (x > a && x < b) nodes.push_back(x);
  for (double x : singular)
    if (x > a && x < b) nodes.push_back(x);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  auto is_singular = [&](double x) {
    return std::any_of(singular.begin(), singular.end(), [x](double s) { return s == x; });
  };
  const Rule1D& rule = gauss_legendre(points_per_panel);
  // geometric panels sit close to the singular point relative to their width
  const Rule1D& graded = gauss_legendre(2 * points_per_panel);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double l = nodes[i], r = nodes[i + 1];
    const bool sl = is_singular(l), sr = is_singular(r);
    if (sl && sr) {
      const double m = 0.5 * (l + r);
      graded_panel(l, m, true, graded, out);
      graded_panel(m, r, false, graded, out);
    } else if (sl) {
      graded_panel(l, r, true, graded, out);
    } else if (sr) {
      graded_panel(l, r, false, graded, out);
    } else {
      gauss_panel(l, r, rule, out);
    }
  }
  return out;
}

double integrate(const ScalarFn& f, double a, double b, std::span<const double> breaks,
                 std::span<const double> singular, int points_per_panel) {
  const PointRule rule = composite_rule(a, b, breaks, singular, points_per_panel);
  double total = 0.0;
  for (std::size_t i = 0; i < rule.x.size(); ++i) total += rule.w[i] * f(rule.x[i]);
  return total;
}

double integrate_adaptive(const ScalarFn& f, double a, double b, double rel_tol) {
  if (!(b > a)) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 15, rel_tol, &err);
}

}  // namespace ddmres
