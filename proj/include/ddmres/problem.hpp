#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ddmres/mesh.hpp"
#include "ddmres/parallel.hpp"
#include "ddmres/quadrature.hpp"
#include "ddmres/spaces.hpp"

namespace ddmres {

using SparseMatrix = Eigen::SparseMatrix<double>;
using RowSparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Point mass weight * delta_x in the source term.
struct Dirac {
  double x = 0.0;
  double weight = 0.0;
};

/// beta u' + mu u = f on (a, b), u = g on the inflow endpoints, posed weakly as
/// int u (mu v - (beta v)') = int f v + sum_{inflow} |beta n| g v.
struct Problem1D {
  double a = 0.0;
  double b = 1.0;
  ScalarFn beta = [](double) { return 1.0; };
  ScalarFn dbeta = [](double) { return 0.0; };
  ScalarFn mu = [](double) { return 0.0; };
  ScalarFn source = [](double) { return 0.0; };
  std::vector<Dirac> diracs;
  /// Inflow datum, evaluated only at inflow endpoints.
  ScalarFn inflow = [](double) { return 0.0; };
  double p = 2.0;
  /// Set when stability rests on the domain-filling flow condition rather
  /// than on mu - div(beta)/p >= mu0 > 0.
  bool omega_filling = false;

  double q() const { return p / (p - 1.0); }
  bool is_inflow_left() const { return beta(a) > 0.0; }
  bool is_inflow_right() const { return beta(b) < 0.0; }
};

/// Test-space constraint: vanish at the outflow endpoints.
EndpointConstraint outflow_constraint(const Problem1D& problem);

/// Checks 1 < p < inf, a < b, Dirac locations and, when mu is not identically
/// zero, the sampled condition mu - beta'/p > 0 (unless omega_filling).
void validate(const Problem1D& problem, const Mesh1D& mesh);

/// beta . grad u + mu u = f on a triangulation with per-element constant beta.
struct Problem2D {
  const TriMesh2D* mesh = nullptr;
  double mu = 0.0;
  std::function<double(Vec2)> source;
  std::function<double(Vec2)> inflow = [](Vec2) { return 0.0; };
  /// Discontinuity points of the inflow datum on the inflow boundary.
  std::vector<Vec2> inflow_breaks;
  double p = 2.0;

  double q() const { return p / (p - 1.0); }
};

enum class TestNormKind {
  DerivativeOnly,  ///< ||v'||_q, 1-D only
  AdjointGraph,    ///< (||v||_q^2 + ||div(beta v)||_q^2)^(1/2)
};

std::string_view to_string(TestNormKind k) noexcept;

/// Test functions sampled at quadrature points: row i of V holds the values
/// of all basis functions at point i, row i of D the derivative that enters
/// the norm ((beta v)' resp. beta . grad v for AdjointGraph, v' for
/// DerivativeOnly); w are the quadrature weights.
struct Sampler {
  RowSparseMatrix V;
  RowSparseMatrix D;
  Eigen::VectorXd w;
  Eigen::VectorXd x;  ///< point coordinates (1-D only)
  TestNormKind norm = TestNormKind::AdjointGraph;

  Eigen::Index dofs() const { return V.cols(); }
  Eigen::Index points() const { return V.rows(); }
};

/// Gauss points per integration element used for bilinear forms.
int assembly_points(const Space1D& trial, const Space1D& test);

Sampler sample_test_space(const Problem1D& problem, const Space1D& test, TestNormKind norm, int points_per_element = 0,
                          Exec exec = Exec::Parallel);
Sampler sample_test_space(const Problem2D& problem, const P1ConfSpace2D& test, Exec exec = Exec::Parallel);

/// Discrete operator: B(j, i) = b(trial_i, test_j) (rows are test dofs) and
/// f(j) = <f, test_j>.
struct AssembledOperator {
  SparseMatrix B;
  Eigen::VectorXd f;
};

/// Throws NonconformingTestSpace when a test function does not vanish on the
/// outflow boundary.
SparseMatrix assemble_B(const Problem1D& problem, const Space1D& trial, const Space1D& test, Exec exec = Exec::Parallel);
Eigen::VectorXd assemble_rhs(const Problem1D& problem, const Space1D& test);
AssembledOperator assemble(const Problem1D& problem, const Space1D& trial, const Space1D& test,
                           Exec exec = Exec::Parallel);

SparseMatrix assemble_B(const Problem2D& problem, const P0Space2D& trial, const P1ConfSpace2D& test,
                        Exec exec = Exec::Parallel);
Eigen::VectorXd assemble_rhs(const Problem2D& problem, const P1ConfSpace2D& test);
AssembledOperator assemble(const Problem2D& problem, const P0Space2D& trial, const P1ConfSpace2D& test,
                           Exec exec = Exec::Parallel);

/// Gram matrix of the test norm at q = 2. Throws SingularGram when the
/// Cholesky factorisation fails.
SparseMatrix gram_matrix(const Problem1D& problem, const Space1D& test, TestNormKind norm, Exec exec = Exec::Parallel);
SparseMatrix gram_matrix(const Sampler& sampler);

/// Sampled mu0 = min(mu - beta'/p) and ||mu||_inf over Gauss points and
/// midpoints of `mesh`.
struct CoefficientBounds {
  double mu0 = 0.0;
  double mu_inf = 0.0;
};
CoefficientBounds coefficient_bounds(const Problem1D& problem, const Mesh1D& mesh);

struct StabilityConstants {
  double gamma_B = 0.0;
  double M_mu = 0.0;
  double mu0 = 0.0;
};

/// gamma_B = sqrt(mu0^2 / (1 + (mu0 + ||mu||)^2)), M_mu = sqrt(1 + ||mu||^2).
/// Throws AssumptionUnavailable when mu0 <= 0.
StabilityConstants stability_constants(const Problem1D& problem, const Mesh1D& mesh);

}  // namespace ddmres
