#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ddmres/duality.hpp"
#include "ddmres/error.hpp"
#include "ddmres/optimal_test.hpp"
#include "ddmres/solver.hpp"

using namespace ddmres;

namespace {

const double kJump = std::numbers::sqrt2 / 2.0;

// exact mean of sign(x - kJump) over [a, b]
double jump_average(double a, double b) {
  if (b <= kJump) return -1.0;
  if (a >= kJump) return 1.0;
  return ((b - kJump) - (kJump - a)) / (b - a);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;  // sentinel: nothing thrown
}

}  // namespace

TEST(Optimal1D, PetrovGalerkinGivesCellAverages) {
  Problem1D pr;
  pr.diracs = {{kJump, 2.0}};
  pr.inflow = [](double) { return -1.0; };
  for (std::size_t n = 2; n <= 64; ++n) {
    const auto mesh = uniform_mesh_1d(0.0, 1.0, n);
    for (auto kind : {OptimalBasisKind::Dual, OptimalBasisKind::Nodal}) {
      const auto u = solve_petrov_galerkin(pr, PolySpace1D::p0(mesh), optimal_basis_1d(mesh, pr.beta, pr.dbeta, kind));
      for (std::size_t e = 0; e < n; ++e)
        EXPECT_NEAR(u[Eigen::Index(e)], jump_average(mesh.node(e), mesh.node(e + 1)), 1e-10) << "n=" << n;
    }
  }
}

TEST(Optimal1D, DualBasisInvertsAdjoint) {
  // -(beta v_j)' = chi_{T_j}
  const ScalarFn beta = [](double x) { return 2.0 - x; };
  const ScalarFn dbeta = [](double) { return -1.0; };
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 5);
  const auto s = optimal_basis_1d(mesh, beta, dbeta);
  EXPECT_EQ(s.dof_count(), 5u);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t e = 0; e < 5; ++e)
      for (double t : {0.1, 0.5, 0.9}) {
        const double x = mesh.node(e) + t * mesh.element_size(e);
        const double adj = -(dbeta(x) * s.dual_value(j, e, x) + beta(x) * s.dual_derivative(j, e, x));
        EXPECT_NEAR(adj, e == j ? 1.0 : 0.0, 1e-12);
      }
  // vanish at the outflow end
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(s.dual_value(j, 4, 1.0), 0.0, 1e-15);
}

TEST(Optimal1D, BOrthogonality) {
  // assemble_B(P0, dual basis) = diag(|T|) for mu = 0
  Problem1D pr;
  pr.beta = [](double x) { return 1.0 + x * x; };
  pr.dbeta = [](double x) { return 2.0 * x; };
  std::vector<double> nodes{0.0, 0.1, 0.35, 0.5, 0.8, 1.0};
  const Mesh1D mesh(nodes);
  const auto B = Eigen::MatrixXd(assemble_B(pr, PolySpace1D::p0(mesh), optimal_basis_1d(mesh, pr.beta, pr.dbeta)));
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(B(j, i), i == j ? mesh.element_size(i) : 0.0, 1e-12);
}

TEST(Optimal1D, NodalBasisSpansSameSpace) {
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 6);
  const ScalarFn beta = [](double x) { return 1.5 - x; };
  const ScalarFn dbeta = [](double) { return -1.0; };
  const auto dual = optimal_basis_1d(mesh, beta, dbeta, OptimalBasisKind::Dual);
  const auto nodal = optimal_basis_1d(mesh, beta, dbeta, OptimalBasisKind::Nodal);
  const Eigen::MatrixXd C = nodal.nodal_to_dual();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C);
  const double cond = svd.singularValues()(0) / svd.singularValues().tail(1)(0);
  EXPECT_TRUE(std::isfinite(cond));
  EXPECT_LT(cond, 1e6);
  for (std::size_t i = 0; i < 6; ++i)
    for (double x : {0.05, 0.4, 0.77}) {
      double v = 0.0;
      for (std::size_t j = 0; j < 6; ++j) v += C(Eigen::Index(i), Eigen::Index(j)) * dual.value(j, x);
      EXPECT_NEAR(nodal.value(i, x), v, 1e-12);
    }
}

TEST(Optimal1D, TwoSidedInflow) {
  // beta = 1/2 - x vanishes at the node 1/2: flow enters at both ends
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 4);
  const ScalarFn beta = [](double x) { return 0.5 - x; };
  const ScalarFn dbeta = [](double) { return -1.0; };
  const auto s = optimal_basis_1d(mesh, beta, dbeta);
  ASSERT_EQ(s.stagnation_nodes().size(), 1u);
  EXPECT_EQ(s.stagnation_nodes()[0], 2u);
  EXPECT_EQ(s.element_sign()[0], 1);
  EXPECT_EQ(s.element_sign()[3], -1);
  for (std::size_t j = 0; j < 4; ++j)
    for (double x : {0.0, 0.2, 0.49, 0.51, 1.0}) EXPECT_TRUE(std::isfinite(s.value(j, x)));
  // supports stay on their own side of the stagnation point
  EXPECT_EQ(s.value(0, 0.8), 0.0);
  EXPECT_EQ(s.value(3, 0.2), 0.0);
  Problem1D pr;
  pr.beta = beta;
  pr.dbeta = dbeta;
  pr.inflow = [](double) { return 1.0; };
  const auto u = solve_petrov_galerkin(pr, PolySpace1D::p0(mesh), s);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(u[i], 1.0, 1e-12);
}

TEST(Optimal1D, Errors) {
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 4);
  EXPECT_EQ(code_of([&] { optimal_basis_1d(mesh, [](double x) { return 0.3 - x; }, [](double) { return -1.0; }); }),
            ErrorCode::BetaVanishesInsideElement);
  EXPECT_EQ(code_of([&] { optimal_basis_1d(mesh, [](double x) { return x - 0.5; }, [](double) { return 1.0; }); }),
            ErrorCode::InvalidArgument);
}

TEST(Optimal1D, PiecewiseConstantsAreInvariantUnderDualityMap) {
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 5);
  const auto& g = gauss_legendre(4);
  std::vector<double> v, w;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  for (std::size_t e = 0; e < 5; ++e) {
    const double c = d(rng);
    for (std::size_t i = 0; i < g.size(); ++i) {
      v.push_back(c);
      w.push_back(0.5 * mesh.element_size(e) * g.weights[i]);
    }
  }
  for (double p : {1.5, 3.0}) {
    const auto J = jq_value(v, w, p);
    for (std::size_t e = 0; e < 5; ++e)
      for (std::size_t i = 1; i < g.size(); ++i) EXPECT_EQ(J[e * g.size() + i], J[e * g.size()]);
  }
}

TEST(Compatibility, OptimalPairMeetsInfSupBound) {
  Problem1D pr;
  pr.beta = [](double x) { return 2.0 - x; };
  pr.dbeta = [](double) { return -1.0; };
  for (std::size_t n : {4u, 16u}) {
    const auto mesh = uniform_mesh_1d(0.0, 1.0, n);
    const auto rep = verify_compatibility(pr, PolySpace1D::p0(mesh), optimal_basis_1d(mesh, pr.beta, pr.dbeta));
    EXPECT_TRUE(rep.gamma_available);
    EXPECT_FALSE(rep.singular);
    EXPECT_GE(rep.inf_sup, 0.95 * rep.gamma_B);
    EXPECT_TRUE(rep.ok);
    EXPECT_EQ(rep.trial_dofs, n);
  }
}

TEST(Compatibility, RefinedPairsOnCoarseMesh) {
  Problem1D pr;
  pr.beta = [](double x) { return 2.0 - x; };
  pr.dbeta = [](double) { return -1.0; };
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 2);
  const auto trial = PolySpace1D::p0(mesh);
  const auto r0 = verify_compatibility(pr, trial, PolySpace1D::refined_p1(mesh, 0, outflow_constraint(pr)));
  const auto r1 = verify_compatibility(pr, trial, PolySpace1D::refined_p1(mesh, 1, outflow_constraint(pr)));
  EXPECT_EQ(r0.test_dofs, 2u);
  // more test functions can only raise the inf-sup constant
  EXPECT_GE(r1.inf_sup, r0.inf_sup - 1e-12);
  EXPECT_TRUE(r1.ok);
}

class FlowAlignedBasis : public ::testing::Test {
protected:
  TriMesh2D mesh = red_refine_2d(flow_aligned_channel(4, 8, 2019));
};

TEST_F(FlowAlignedBasis, ConformityAndAdjointIdentity) {
  const auto s = build_p1conf_basis(mesh);
  EXPECT_EQ(s.dof_count(), mesh.num_triangles());
  EXPECT_LE(p1conf_adjoint_defect(s), 1e-10);
  EXPECT_LE(s.max_trace_jump(FaceClass::InteriorCrossing), 1e-12);
  EXPECT_LE(s.max_outflow_trace(), 1e-12);
}

TEST_F(FlowAlignedBasis, SerialAndParallelIdentical) {
  const auto a = build_p1conf_basis(mesh, Exec::Serial);
  const auto b = build_p1conf_basis(mesh, Exec::Parallel);
  std::ostringstream sa, sb;
  write_basis_csv(sa, a);
  write_basis_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str().rfind("basis,element,v0,v1,v2\n", 0), 0u);
}

TEST_F(FlowAlignedBasis, BIsDiagonalArea) {
  Problem2D pr;
  pr.mesh = &mesh;
  pr.source = [](Vec2) { return 0.0; };
  const auto s = build_p1conf_basis(mesh);
  const Eigen::SparseMatrix<double> B = assemble_B(pr, P0Space2D(mesh), s);
  for (int k = 0; k < B.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(B, k); it; ++it) {
      if (it.row() == it.col()) EXPECT_NEAR(it.value(), mesh.area(int(it.row())), 1e-13);
      else EXPECT_NEAR(it.value(), 0.0, 1e-13);
    }
}

TEST(FlowAlignedBasisErrors, CycleDetected) {
  // two triangles whose outflow faces coincide
  TriMesh2D m({{0, 0}, {1, 0}, {0, 1}, {1, 1}}, {{0, 1, 2}, {1, 3, 2}}, {{1.0, 0.0}, {-1.0, 0.0}});
  EXPECT_EQ(code_of([&] { build_p1conf_basis(m); }), ErrorCode::CycleDetected);
}

TEST(BasisCsv, OneDimensionalDump) {
  const auto mesh = uniform_mesh_1d(0.0, 1.0, 3);
  const auto s = optimal_basis_1d(mesh, [](double) { return 1.0; }, [](double) { return 0.0; });
  std::ostringstream os;
  write_basis_csv(os, s, 4);
  const std::string out = os.str();
  EXPECT_EQ(out.rfind("basis,element,x,value\n", 0), 0u);
  EXPECT_THROW(write_basis_csv(os, s, 1), Error);
}
