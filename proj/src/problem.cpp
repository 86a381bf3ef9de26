#include "ddmres/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SparseCholesky>

#include "ddmres/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ddmres {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::string_view to_string(TestNormKind k) noexcept {
  return k == TestNormKind::DerivativeOnly ? "DerivativeOnly" : "AdjointGraph";
}

EndpointConstraint outflow_constraint(const Problem1D& problem) {
  // outward normals are -1 at a and +1 at b
  return {problem.beta(problem.a) < 0.0, problem.beta(problem.b) > 0.0};
}

namespace {

void gauss_points(double a, double b, int n, std::vector<double>& x, std::vector<double>& w) {
  const Rule1D& r = gauss_legendre(n);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  x.resize(r.size());
  w.resize(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    x[i] = mid + half * r.points[i];
    w[i] = half * r.weights[i];
  }
}

double element_midpoint(const Mesh1D& m, std::size_t e) { return 0.5 * (m.node(e) + m.node(e + 1)); }

void check_outflow_conformity(const Problem1D& problem, const Space1D& test) {
  const EndpointConstraint c = outflow_constraint(problem);
  const Mesh1D& m = test.mesh();
  LocalBasis lb;
  auto check = [&](bool active, std::size_t e, double x) {
    if (!active) return;
    const double pt[1] = {x};
    test.local(e, pt, lb);
    for (std::size_t j = 0; j < lb.dofs.size(); ++j)
      if (std::abs(lb.values(0, j)) > 1e-10)
        fail(ErrorCode::NonconformingTestSpace, "test function " + std::to_string(lb.dofs[j]) +
                                                    " does not vanish at the outflow endpoint x = " + std::to_string(x));
  };
  check(c.left, 0, m.left());
  check(c.right, m.num_elements() - 1, m.right());
}

}  // namespace

CoefficientBounds coefficient_bounds(const Problem1D& problem, const Mesh1D& mesh) {
  CoefficientBounds cb;
  cb.mu0 = std::numeric_limits<double>::infinity();
  std::vector<double> x, w;
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    gauss_points(mesh.node(e), mesh.node(e + 1), 5, x, w);
    x.push_back(element_midpoint(mesh, e));
    for (double xi : x) {
      const double mu = problem.mu(xi);
      cb.mu0 = std::min(cb.mu0, mu - problem.dbeta(xi) / problem.p);
      cb.mu_inf = std::max(cb.mu_inf, std::abs(mu));
    }
  }
  return cb;
}

void validate(const Problem1D& problem, const Mesh1D& mesh) {
  require(problem.a < problem.b, ErrorCode::InvalidInterval, "problem interval needs a < b");
  require(std::isfinite(problem.p) && problem.p > 1.0, ErrorCode::InvalidArgument,
          "trial exponent p must lie in (1, inf)");
  const double tol = 1e-12 * (problem.b - problem.a);
  require(std::abs(mesh.left() - problem.a) <= tol && std::abs(mesh.right() - problem.b) <= tol,
          ErrorCode::InvalidArgument, "mesh does not cover the problem interval");
  for (const Dirac& d : problem.diracs)
    require(d.x >= problem.a && d.x <= problem.b, ErrorCode::OutOfDomain, "point source outside the interval");
  const CoefficientBounds cb = coefficient_bounds(problem, mesh);
  if (cb.mu_inf > 0.0 && !problem.omega_filling)
    require(cb.mu0 > 0.0, ErrorCode::AssumptionViolated,
            "mu - beta'/p has sampled minimum " + std::to_string(cb.mu0) + " <= 0");
}

StabilityConstants stability_constants(const Problem1D& problem, const Mesh1D& mesh) {
  const CoefficientBounds cb = coefficient_bounds(problem, mesh);
  require(cb.mu0 > 0.0, ErrorCode::AssumptionUnavailable,
          "mu - beta'/p is not bounded below by a positive constant; gamma_B is not available");
  StabilityConstants s;
  s.mu0 = cb.mu0;
  s.gamma_B = std::sqrt(cb.mu0 * cb.mu0 / (1.0 + (cb.mu0 + cb.mu_inf) * (cb.mu0 + cb.mu_inf)));
  s.M_mu = std::sqrt(1.0 + cb.mu_inf * cb.mu_inf);
  return s;
}

int assembly_points(const Space1D& trial, const Space1D& test) {
  const int dt = trial.degree(), ds = test.degree();
  if (dt < 0 || ds < 0) return 12;
  return (dt + ds + 2) / 2 + 2;
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

Sampler split_sampler(const Triplets& trip, Eigen::Index rows, Eigen::Index m, TestNormKind norm) {
  SparseMatrix both(rows, 2 * m);
  both.setFromTriplets(trip.begin(), trip.end());
  Sampler s;
  s.V = both.leftCols(m);
  s.D = both.rightCols(m);
  s.norm = norm;
  return s;
}

}  // namespace

Sampler sample_test_space(const Problem1D& problem, const Space1D& test, TestNormKind norm, int points_per_element,
                          Exec exec) {
  const Mesh1D& mesh = test.mesh();
  const int n = points_per_element > 0 ? points_per_element : (test.degree() < 0 ? 12 : test.degree() + 2);
  const Eigen::Index m = static_cast<Eigen::Index>(test.dof_count());
  const Eigen::Index rows = static_cast<Eigen::Index>(mesh.num_elements()) * n;
  const bool graph = norm == TestNormKind::AdjointGraph;

  Triplets trip = gather_elements(mesh.num_elements(), exec, [&](std::size_t e, Triplets& out) {
    std::vector<double> x, w;
    gauss_points(mesh.node(e), mesh.node(e + 1), n, x, w);
    LocalBasis lb;
    test.local(e, x, lb);
    for (int q = 0; q < n; ++q) {
      const Eigen::Index row = static_cast<Eigen::Index>(e) * n + q;
      const double b = graph ? problem.beta(x[q]) : 1.0;
      const double db = graph ? problem.dbeta(x[q]) : 0.0;
      for (std::size_t j = 0; j < lb.dofs.size(); ++j) {
        out.emplace_back(row, lb.dofs[j], lb.values(q, j));
        out.emplace_back(row, m + lb.dofs[j], db * lb.values(q, j) + b * lb.derivs(q, j));
      }
    }
  });
  Sampler s = split_sampler(trip, rows, m, norm);
  s.w.resize(rows);
  s.x.resize(rows);
  std::vector<double> x, w;
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    gauss_points(mesh.node(e), mesh.node(e + 1), n, x, w);
    for (int q = 0; q < n; ++q) {
      s.x[static_cast<Eigen::Index>(e) * n + q] = x[q];
      s.w[static_cast<Eigen::Index>(e) * n + q] = w[q];
    }
  }
  return s;
}

Sampler sample_test_space(const Problem2D& problem, const P1ConfSpace2D& test, Exec exec) {
  const TriMesh2D& mesh = test.mesh();
  const TriangleRule& rule = triangle_degree4();
  const Eigen::Index nq = static_cast<Eigen::Index>(rule.size());
  const Eigen::Index m = static_cast<Eigen::Index>(test.dof_count());
  const Eigen::Index rows = static_cast<Eigen::Index>(mesh.num_triangles()) * nq;
  (void)problem;

  Triplets trip = gather_elements(mesh.num_triangles(), exec, [&](std::size_t t, Triplets& out) {
    const int ti = static_cast<int>(t);
    const Vec2 beta = mesh.beta(ti);
    for (const auto& entry : test.on_element(t)) {
      const double flux = dot(beta, linear_gradient(mesh, ti, entry.values));
      for (Eigen::Index q = 0; q < nq; ++q) {
        const auto& l = rule.bary[q];
        const Eigen::Index row = static_cast<Eigen::Index>(t) * nq + q;
        out.emplace_back(row, entry.dof, l[0] * entry.values[0] + l[1] * entry.values[1] + l[2] * entry.values[2]);
        out.emplace_back(row, m + entry.dof, flux);
      }
    }
  });
  Sampler s = split_sampler(trip, rows, m, TestNormKind::AdjointGraph);
  s.w.resize(rows);
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t)
    for (Eigen::Index q = 0; q < nq; ++q)
      s.w[static_cast<Eigen::Index>(t) * nq + q] = mesh.area(static_cast<int>(t)) * rule.weights[q];
  return s;
}

// ---------------------------------------------------------------------------
// Assembly, 1-D

SparseMatrix assemble_B(const Problem1D& problem, const Space1D& trial, const Space1D& test, Exec exec) {
  check_outflow_conformity(problem, test);
  const Mesh1D& fine = common_refinement(trial, test);
  const int n = assembly_points(trial, test);

  Triplets trip = gather_elements(fine.num_elements(), exec, [&](std::size_t e, Triplets& out) {
    std::vector<double> x, w;
    gauss_points(fine.node(e), fine.node(e + 1), n, x, w);
    const double mid = element_midpoint(fine, e);
    LocalBasis lu, lv;
    trial.local(trial.mesh().locate(mid), x, lu);
    test.local(test.mesh().locate(mid), x, lv);
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(lv.dofs.size()),
                                                  static_cast<Eigen::Index>(lu.dofs.size()));
    for (int q = 0; q < n; ++q) {
      const double mu = problem.mu(x[q]), b = problem.beta(x[q]), db = problem.dbeta(x[q]);
      for (Eigen::Index j = 0; j < block.rows(); ++j) {
        const double adj = mu * lv.values(q, j) - (db * lv.values(q, j) + b * lv.derivs(q, j));
        for (Eigen::Index i = 0; i < block.cols(); ++i) block(j, i) += w[q] * lu.values(q, i) * adj;
      }
    }
    for (Eigen::Index j = 0; j < block.rows(); ++j)
      for (Eigen::Index i = 0; i < block.cols(); ++i)
        if (block(j, i) != 0.0) out.emplace_back(lv.dofs[j], lu.dofs[i], block(j, i));
  });
  SparseMatrix B(static_cast<Eigen::Index>(test.dof_count()), static_cast<Eigen::Index>(trial.dof_count()));
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

Eigen::VectorXd assemble_rhs(const Problem1D& problem, const Space1D& test) {
  const Mesh1D& mesh = test.mesh();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(test.dof_count()));
  const int n = test.degree() < 0 ? 12 : test.degree() + 5;
  std::vector<double> x, w;
  LocalBasis lb;
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    gauss_points(mesh.node(e), mesh.node(e + 1), n, x, w);
    test.local(e, x, lb);
    for (int q = 0; q < n; ++q) {
      const double s = problem.source(x[q]);
      if (s == 0.0) continue;
      for (std::size_t j = 0; j < lb.dofs.size(); ++j) f[lb.dofs[j]] += w[q] * s * lb.values(q, j);
    }
  }
  auto point_term = [&](double x0, double weight) {
    const double pt[1] = {x0};
    test.local(mesh.locate(x0), pt, lb);
    for (std::size_t j = 0; j < lb.dofs.size(); ++j) f[lb.dofs[j]] += weight * lb.values(0, j);
  };
  for (const Dirac& d : problem.diracs) point_term(d.x, d.weight);
  if (problem.is_inflow_left()) point_term(problem.a, std::abs(problem.beta(problem.a)) * problem.inflow(problem.a));
  if (problem.is_inflow_right()) point_term(problem.b, std::abs(problem.beta(problem.b)) * problem.inflow(problem.b));
  return f;
}

AssembledOperator assemble(const Problem1D& problem, const Space1D& trial, const Space1D& test, Exec exec) {
  return {assemble_B(problem, trial, test, exec), assemble_rhs(problem, test)};
}

// ---------------------------------------------------------------------------
// Assembly, 2-D

SparseMatrix assemble_B(const Problem2D& problem, const P0Space2D& trial, const P1ConfSpace2D& test, Exec exec) {
  const TriMesh2D& mesh = test.mesh();
  require(&trial.mesh() == &mesh, ErrorCode::InvalidArgument, "trial and test spaces live on different meshes");
  const double outflow = test.max_outflow_trace();
  require(outflow <= 1e-10, ErrorCode::NonconformingTestSpace,
          "test functions do not vanish on the outflow boundary (max trace " + std::to_string(outflow) + ")");
  Triplets trip = gather_elements(mesh.num_triangles(), exec, [&](std::size_t t, Triplets& out) {
    const int ti = static_cast<int>(t);
    const double area = mesh.area(ti);
    for (const auto& entry : test.on_element(t)) {
      const double mean = (entry.values[0] + entry.values[1] + entry.values[2]) / 3.0;
      const double flux = dot(mesh.beta(ti), linear_gradient(mesh, ti, entry.values));
      out.emplace_back(entry.dof, ti, area * (problem.mu * mean - flux));
    }
  });
  SparseMatrix B(static_cast<Eigen::Index>(test.dof_count()), static_cast<Eigen::Index>(trial.dof_count()));
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

Eigen::VectorXd assemble_rhs(const Problem2D& problem, const P1ConfSpace2D& test) {
  const TriMesh2D& mesh = test.mesh();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(test.dof_count()));
  if (problem.source) {
    const TriangleRule& rule = triangle_degree4();
    for (int t = 0; t < static_cast<int>(mesh.num_triangles()); ++t)
      for (std::size_t q = 0; q < rule.size(); ++q) {
        const double s = problem.source(mesh.point(t, rule.bary[q]));
        if (s == 0.0) continue;
        for (const auto& e : test.on_element(t)) {
          const auto& l = rule.bary[q];
          f[e.dof] += mesh.area(t) * rule.weights[q] * s *
                      (l[0] * e.values[0] + l[1] * e.values[1] + l[2] * e.values[2]);
        }
      }
  }
  const Rule1D& g5 = gauss_legendre(5);
  const auto tags = classify_faces(mesh);
  for (int fi = 0; fi < static_cast<int>(mesh.num_faces()); ++fi) {
    if (tags[fi] != FaceClass::Inflow) continue;
    const Face& face = mesh.face(fi);
    const int t = face.tri[0];
    const double flux = std::abs(dot(mesh.beta(t), face.normal));
    const Vec2 p0 = mesh.vertex(face.v[0]), p1 = mesh.vertex(face.v[1]);
    std::vector<double> cuts{0.0, 1.0};
    for (const Vec2& b : problem.inflow_breaks) {
      const Vec2 d = p1 - p0;
      const double s = dot(b - p0, d) / dot(d, d);
      if (s > 0.0 && s < 1.0 && std::abs(cross(d, b - p0)) <= 1e-12 * dot(d, d)) cuts.push_back(s);
    }
    std::sort(cuts.begin(), cuts.end());
    const auto& tri = mesh.triangle(t);
    const int l0 = static_cast<int>(std::find(tri.begin(), tri.end(), face.v[0]) - tri.begin());
    const int l1 = static_cast<int>(std::find(tri.begin(), tri.end(), face.v[1]) - tri.begin());
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double s0 = cuts[c], s1 = cuts[c + 1];
      for (std::size_t q = 0; q < g5.size(); ++q) {
        const double s = s0 + 0.5 * (1.0 + g5.points[q]) * (s1 - s0);
        const double wq = 0.5 * g5.weights[q] * (s1 - s0) * face.length;
        const double g = problem.inflow(p0 + s * (p1 - p0));
        for (const auto& e : test.on_element(t))
          f[e.dof] += wq * flux * g * ((1.0 - s) * e.values[l0] + s * e.values[l1]);
      }
    }
  }
  return f;
}

AssembledOperator assemble(const Problem2D& problem, const P0Space2D& trial, const P1ConfSpace2D& test, Exec exec) {
  return {assemble_B(problem, trial, test, exec), assemble_rhs(problem, test)};
}

// ---------------------------------------------------------------------------
// Gram matrices

SparseMatrix gram_matrix(const Sampler& s) {
  SparseMatrix G = SparseMatrix(s.D.transpose() * s.w.asDiagonal() * s.D);
  if (s.norm == TestNormKind::AdjointGraph) G += SparseMatrix(s.V.transpose() * s.w.asDiagonal() * s.V);
  G.prune(0.0);
  Eigen::SimplicialLLT<SparseMatrix> llt(G);
  require(llt.info() == Eigen::Success, ErrorCode::SingularGram, "test Gram matrix is not positive definite");
  return G;
}

SparseMatrix gram_matrix(const Problem1D& problem, const Space1D& test, TestNormKind norm, Exec exec) {
  return gram_matrix(sample_test_space(problem, test, norm, 0, exec));
}

}  // namespace ddmres
