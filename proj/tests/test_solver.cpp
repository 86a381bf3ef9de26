#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "ddmres/duality.hpp"
#include "ddmres/error.hpp"
#include "ddmres/optimal_test.hpp"
#include "ddmres/solver.hpp"

using namespace ddmres;

namespace {

double sign_fn(double x) { return x < 0.0 ? -1.0 : (x > 0.0 ? 1.0 : 0.0); }

Problem1D variable_beta(double p) {
  Problem1D pr;
  pr.beta = [](double x) { return 2.0 - x; };
  pr.dbeta = [](double) { return -1.0; };
  pr.mu = [](double) { return 1.0; };
  pr.source = [](double x) { return std::exp(x); };
  pr.inflow = [](double) { return 0.5; };
  pr.p = p;
  return pr;
}

Problem1D gibbs(double p) {
  Problem1D pr;
  pr.a = -1.0;
  pr.b = 1.0;
  pr.diracs = {{0.0, 2.0}};
  pr.inflow = [](double) { return -1.0; };
  pr.p = p;
  return pr;
}

}  // namespace

TEST(ContinuationPath, GeometricAndEndsAtTarget) {
  const SolverConfig cfg;
  EXPECT_EQ(continuation_path(2.0, cfg), std::vector<double>{2.0});
  for (double q : {1.2, 3.0, 101.0}) {
    const auto path = continuation_path(q, cfg);
    EXPECT_DOUBLE_EQ(path.back(), q);
    EXPECT_LE(path.size(), 12u);
    double prev = 2.0;
    for (double x : path) {
      EXPECT_LE(std::max(x / prev, prev / x), 1.4 + 1e-12);
      prev = x;
    }
  }
  SolverConfig c2;
  c2.continuation = {1.5, 1.2};
  const auto path = continuation_path(101.0, c2);
  EXPECT_EQ(path.size(), 3u);
  EXPECT_DOUBLE_EQ(path[0], 3.0);
}

TEST(MixedSolve, QuadraticCaseMatchesDenseSaddlePoint) {
  const auto pr = variable_beta(2.0);
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 6);
  const auto trial = PolySpace1D::p0(mesh);
  const auto test = PolySpace1D::pk(mesh, 2, outflow_constraint(pr));
  const auto sol = solve_mixed(pr, trial, test);

  const auto op = assemble(pr, trial, test);
  const Eigen::MatrixXd G(gram_matrix(pr, test, TestNormKind::AdjointGraph));
  const Eigen::MatrixXd B(op.B);
  const Eigen::Index m = B.rows(), n = B.cols();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m + n, m + n);
  K.topLeftCorner(m, m) = G;
  K.topRightCorner(m, n) = B;
  K.bottomLeftCorner(n, m) = B.transpose();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + n);
  rhs.head(m) = op.f;
  const Eigen::VectorXd x = K.fullPivLu().solve(rhs);
  EXPECT_LE((sol.r - x.head(m)).cwiseAbs().maxCoeff(), 1e-11);
  EXPECT_LE((sol.u - x.tail(n)).cwiseAbs().maxCoeff(), 1e-11);
  EXPECT_LE(sol.diagnostics.orthogonality, 1e-12);
}

TEST(MixedSolve, SquarePairReducesToPetrovGalerkin) {
  // with an invertible square B the residual representative vanishes for every q
  Problem1D pr;
  pr.diracs = {{std::numbers::sqrt2 / 2.0, 2.0}};
  pr.inflow = [](double) { return -1.0; };
  pr.p = 1.5;
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 8);
  const auto trial = PolySpace1D::p0(mesh);
  const auto test = optimal_basis_1d(mesh, pr.beta, pr.dbeta);
  const auto pg = solve_petrov_galerkin(pr, trial, test);
  const auto sol = solve_mixed(pr, trial, test);
  EXPECT_LE((sol.u - pg).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(sol.r.cwiseAbs().maxCoeff(), 1e-10);
}

class NonlinearMixed : public ::testing::TestWithParam<double> {};

TEST_P(NonlinearMixed, SatisfiesBothEquations) {
  const double p = GetParam();
  const auto pr = variable_beta(p);
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 5);
  const auto trial = PolySpace1D::p0(mesh);
  const auto test = PolySpace1D::refined_p1(mesh, 2, outflow_constraint(pr));
  SolverConfig cfg;
  cfg.quadrature_points = 6;
  const auto sol = solve_mixed(pr, trial, test, cfg);
  const auto op = assemble(pr, trial, test);
  const auto s = sample_test_space(pr, test, TestNormKind::AdjointGraph, 6);
  // the equation holds for the regularised map the solver ended with
  TestNormMap map(s, pr.q());
  map.set_epsilon(sol.epsilon);
  const Eigen::VectorXd res = map.apply(sol.r) + op.B * sol.u - op.f;
  const double fs = op.f.cwiseAbs().maxCoeff();
  EXPECT_LE(res.cwiseAbs().maxCoeff() / fs, 1e-7) << "p=" << p;
  EXPECT_LE((op.B.transpose() * sol.r).cwiseAbs().maxCoeff() / fs, 1e-9);
  EXPECT_LE(sol.diagnostics.orthogonality, 1e-9);
  EXPECT_FALSE(sol.diagnostics.continuation_path.empty());
}

INSTANTIATE_TEST_SUITE_P(Exponents, NonlinearMixed, ::testing::Values(1.1, 1.5, 3.0, 4.0));

TEST(MixedSolve, GibbsAtSmallExponentConverges) {
  const auto pr = gibbs(1.01);
  const auto mesh = uniform_mesh_1d(-1.0, 1.0, 9);
  SolverConfig cfg;
  cfg.norm = TestNormKind::DerivativeOnly;
  const auto sol = solve_mixed(pr, PolySpace1D::p1(mesh), PolySpace1D::pk(mesh, 2, outflow_constraint(pr)), cfg);
  EXPECT_LE(sol.diagnostics.orthogonality, 1e-9);
  // nodal values approach sign(x)
  EXPECT_NEAR(sol.u[0], -1.0, 1e-6);
  EXPECT_NEAR(sol.u[9], 1.0, 1e-6);
  EXPECT_LE(sol.u.maxCoeff(), 1.0 + 1e-6);
}

TEST(MixedSolve, IterationCapReportsDivergence) {
  const auto pr = gibbs(1.01);
  const auto mesh = uniform_mesh_1d(-1.0, 1.0, 9);
  SolverConfig cfg;
  cfg.norm = TestNormKind::DerivativeOnly;
  cfg.max_iters = 1;
  try {
    solve_mixed(pr, PolySpace1D::p1(mesh), PolySpace1D::pk(mesh, 2, outflow_constraint(pr)), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NewtonDiverged);
    EXPECT_TRUE(is_solver_failure(e.code()));
  }
}

TEST(MixedSolve, TooSmallTestSpaceRejected) {
  const Problem1D pr;
  const auto trial = PolySpace1D::p0(uniform_mesh_1d(0.0, 1.0, 8));
  const auto test = PolySpace1D::p1(uniform_mesh_1d(0.0, 1.0, 2), outflow_constraint(pr));
  EXPECT_THROW(solve_mixed(pr, trial, test), Error);
}

TEST(DualNorm, QuadraticCaseIsGramInverse) {
  const auto pr = variable_beta(2.0);
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 4);
  const auto test = PolySpace1D::p1(mesh, outflow_constraint(pr));
  const auto s = sample_test_space(pr, test, TestNormKind::AdjointGraph, 3);
  const Eigen::MatrixXd G(gram_matrix(s));
  const Eigen::VectorXd l = Eigen::VectorXd::LinSpaced(s.dofs(), 1.0, -2.0);
  const double exact = std::sqrt(l.dot(G.llt().solve(l)));
  EXPECT_NEAR(discrete_dual_norm(l, s, 2.0, {}), exact, 1e-12 * exact);
}

TEST(DualNorm, DualOfRepresentativeNorm) {
  // ||J(r)||_* = ||r|| for the discrete norm at any q
  const auto pr = variable_beta(1.5);
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 4);
  const auto test = PolySpace1D::pk(mesh, 2, outflow_constraint(pr));
  const auto s = sample_test_space(pr, test, TestNormKind::AdjointGraph, 6);
  for (double q : {1.5, 3.0}) {
    TestNormMap map(s, q);
    const Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(s.dofs(), -0.3, 1.0);
    const double n = map.norm(r);
    const std::vector<double> eps(map.pieces(), 0.0);
    EXPECT_NEAR(discrete_dual_norm(map.apply(r), s, q, eps), n, 1e-8 * n) << "q=" << q;
  }
}

TEST(BestLp, QuadraticExponentIsL2Projection) {
  const auto mesh = uniform_mesh_1d(-1.0, 1.0, 9);
  const auto space = PolySpace1D::p1(mesh);
  const std::vector<double> disc{0.0};
  const auto b = best_lp_approximation(sign_fn, disc, space, 2.0);
  // independent oracle: mass matrix and load vector by adaptive quadrature
  const Eigen::Index n = Eigen::Index(space.dof_count());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      M(i, j) = integrate([&](double x) { return space.value(i, x) * space.value(j, x); }, -1.0, 1.0,
                          std::vector<double>(mesh.nodes().begin(), mesh.nodes().end()));
    std::vector<double> br(mesh.nodes().begin(), mesh.nodes().end());
    br.push_back(0.0);
    std::sort(br.begin(), br.end());
    f[i] = integrate([&](double x) { return space.value(i, x) * sign_fn(x); }, -1.0, 1.0, br);
  }
  const Eigen::VectorXd c = M.llt().solve(f);
  EXPECT_LE((b.coeffs - c).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(b.coeffs.maxCoeff() - 1.0, 0.18301886792, 1e-9);
}

TEST(BestLp, OptimalityConditionHoldsIndependently) {
  const auto mesh = uniform_mesh_1d(-1.0, 1.0, 9);
  const auto space = PolySpace1D::p1(mesh);
  const std::vector<double> disc{0.0};
  for (double p : {1.5, 1.25}) {
    const auto b = best_lp_approximation(sign_fn, disc, space, p);
    const std::vector<double> cb(b.coeffs.data(), b.coeffs.data() + b.coeffs.size());
    // int |e|^(p-2) e phi_j = 0 for every basis function
    for (std::size_t j = 0; j < space.dof_count(); ++j) {
      double g = 0.0;
      for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        const double a = mesh.node(e), c = mesh.node(e + 1);
        auto f = [&](double x) {
          const double err = sign_fn(x) - space.evaluate(cb, x);
          return std::pow(std::abs(err), p - 1.0) * sign_fn(err) * space.value(j, x);
        };
        // split at 0 and at sign changes of the error, where |e|^(p-1) has a cusp
        std::vector<double> cuts{a, c};
        if (a < 0.0 && c > 0.0) cuts.push_back(0.0);
        auto err = [&](double x) { return sign_fn(x) - space.evaluate(cb, x); };
        for (int i = 0; i < 400; ++i) {
          double l = a + (c - a) * i / 400.0, r = a + (c - a) * (i + 1) / 400.0;
          if ((l < 0.0 && r > 0.0) || err(l) * err(r) >= 0.0) continue;
          for (int it = 0; it < 200 && r - l > 1e-15; ++it) {
            const double m = 0.5 * (l + r);
            (err(l) * err(m) <= 0.0 ? r : l) = m;
          }
          cuts.push_back(0.5 * (l + r));
        }
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) g += integrate_adaptive(f, cuts[k], cuts[k + 1], 1e-10);
      }
      EXPECT_NEAR(g, 0.0, 1e-7) << "p=" << p << " j=" << j;
    }
  }
}

TEST(BestLp, KnownOvershoots) {
  // reference values from exact piecewise integration of |e|^p
  const auto space = PolySpace1D::p1(uniform_mesh_1d(-1.0, 1.0, 9));
  const std::vector<double> disc{0.0};
  EXPECT_NEAR(best_lp_approximation(sign_fn, disc, space, 1.5).coeffs.maxCoeff() - 1.0, 0.082359507, 5e-9);
  EXPECT_NEAR(best_lp_approximation(sign_fn, disc, space, 1.25).coeffs.maxCoeff() - 1.0, 0.022482005, 5e-9);
}

TEST(BestLp, RejectsBadInput) {
  const auto space = PolySpace1D::p0(uniform_mesh_1d(0.0, 1.0, 3));
  EXPECT_THROW(best_lp_approximation(sign_fn, {}, space, 2.0), Error);
  const auto p1 = PolySpace1D::p1(uniform_mesh_1d(0.0, 1.0, 3));
  EXPECT_THROW(best_lp_approximation(sign_fn, {}, p1, 1.0), Error);
}

TEST(ErrorNorm, ClosedForms) {
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 4);
  const auto p0 = PolySpace1D::p0(mesh);
  const std::vector<double> zero(4, 0.0);
  for (double r : {1.0, 1.5, 2.0, 3.0})
    EXPECT_NEAR(error_norm([](double x) { return x; }, {}, {}, p0, zero, r), std::pow(1.0 / (r + 1.0), 1.0 / r), 1e-13);
  // cell averages of x: error on each cell is |x - mid|
  const std::vector<double> mids{0.125, 0.375, 0.625, 0.875};
  EXPECT_NEAR(error_norm([](double x) { return x; }, {}, {}, p0, mids, 2.0), std::sqrt(4.0 * 2.0 * std::pow(0.125, 3) / 3.0),
              1e-14);
  const std::vector<double> sing{1.0 / 12.0};
  const double v = error_norm([](double x) { return std::pow(std::abs(1.0 - 12.0 * x), -1.0 / 3.0); }, sing, sing, p0, zero, 2.0);
  EXPECT_NEAR(v * v, (3.0 + 3.0 * std::cbrt(11.0)) / 12.0, 1e-5);  // tail inside a few ulp of 1/12 is lost
}

TEST(TwoD, ConstantInflowIsReproduced) {
  const auto mesh = flow_aligned_channel(4, 8, 2019);
  Problem2D pr;
  pr.mesh = &mesh;
  pr.source = [](Vec2) { return 0.0; };
  pr.inflow = [](Vec2) { return 1.0; };
  const P0Space2D trial(mesh);
  const auto test = build_p1conf_basis(mesh);
  const auto u = solve_petrov_galerkin(pr, trial, test);
  for (Eigen::Index i = 0; i < u.size(); ++i) EXPECT_NEAR(u[i], 1.0, 1e-12);
  EXPECT_NEAR(error_norm_2d(pr, {u.data(), std::size_t(u.size())}, 2.0), 0.0, 1e-12);
  const std::vector<double> zero(mesh.num_triangles(), 0.0);
  for (double r : {1.0, 2.0, 3.0}) EXPECT_NEAR(error_norm_2d(pr, zero, r), std::pow(2.0, 1.0 / r), 1e-10);
}

TEST(TwoD, ExactSolutionIsTracedInflow) {
  const auto mesh = flow_aligned_channel(4, 8, 2019);
  Problem2D pr;
  pr.mesh = &mesh;
  pr.inflow = [](Vec2 x) { return x.x * x.x; };
  for (int t = 0; t < int(mesh.num_triangles()); t += 5) {
    const Vec2 c = mesh.centroid(t);
    const double u = exact_solution_2d(pr, t, c);
    const auto foot = trace_to_inflow(mesh, t, c);
    EXPECT_DOUBLE_EQ(u, foot.point.x * foot.point.x);
  }
}
