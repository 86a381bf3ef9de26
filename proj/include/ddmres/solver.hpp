#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ddmres/duality.hpp"
#include "ddmres/problem.hpp"
#include "ddmres/spaces.hpp"

namespace ddmres {

struct SolverConfig {
  /// Stop when the residual of both equations is below newton_tol * ||f||_inf.
  double newton_tol = 1e-10;
  int max_iters = 50;
  /// Intermediate trial exponents p; empty selects a geometric path in q from
  /// 2 to the target with ratio at most 1.4 and at most 12 steps. The target
  /// is appended when missing.
  std::vector<double> continuation;
  double backtrack = 0.5;
  double min_step = 1e-6;
  /// Relative regularisation of the duality map at the final exponent;
  /// negative selects 1e-8 for q <= 2 and 1e-10 above. Larger values are
  /// visited first when q > 2.
  double eps_rel = -1.0;
  /// Include the rank-one normalisation terms in the Jacobian. When false the
  /// normalisation factors are frozen during each step.
  bool full_jacobian = true;
  /// Systems up to this many test dofs are factorised densely.
  int dense_threshold = 2000;
  /// Gauss points per test element for nonlinear solves (0: automatic).
  int quadrature_points = 0;
  TestNormKind norm = TestNormKind::AdjointGraph;
  Exec exec = Exec::Parallel;
};

/// Regularisation used for exponent q when SolverConfig::eps_rel < 0.
double default_eps_rel(double q);

/// Exponents q of the continuation path ending at q_target.
std::vector<double> continuation_path(double q_target, const SolverConfig& config);

struct ContinuationStep {
  double q = 2.0;
  int iterations = 0;
  int picard_steps = 0;
  double residual = 0.0;
  std::vector<double> epsilon;
};

struct SolverDiagnostics {
  int iterations = 0;
  double final_residual = 0.0;
  /// max_i |<B w_i, r>| / ||f||_inf
  double orthogonality = 0.0;
  std::vector<ContinuationStep> continuation_path;
};

struct MixedSolution {
  Eigen::VectorXd u;
  Eigen::VectorXd r;
  SolverDiagnostics diagnostics;
  /// Regularisation of the final duality map, one value per norm piece.
  std::vector<double> epsilon;
  double q = 2.0;
};

/// Solves J_V(r) + B u = f, B^T r = 0 for the assembled operator and sampled
/// test space. Throws SingularSystem when B has (numerically) dependent
/// columns and NewtonDiverged when the nonlinear iteration stalls.
MixedSolution solve_mixed(const AssembledOperator& op, const Sampler& sampler, double q, const SolverConfig& config);

MixedSolution solve_mixed(const Problem1D& problem, const Space1D& trial, const Space1D& test,
                          const SolverConfig& config = {});

/// Square solve B u = f. Throws SingularSystem.
Eigen::VectorXd solve_petrov_galerkin(const AssembledOperator& op);
Eigen::VectorXd solve_petrov_galerkin(const Problem1D& problem, const Space1D& trial, const Space1D& optimal_test,
                                      Exec exec = Exec::Parallel);
Eigen::VectorXd solve_petrov_galerkin(const Problem2D& problem, const P0Space2D& trial, const P1ConfSpace2D& test,
                                      Exec exec = Exec::Parallel);

/// sqrt(2 Phi*(l)) for the duality map's potential Phi: the discrete dual norm
/// of l (exactly so when the regularisation is zero). `eps` fixes the
/// regularisation per norm piece.
double discrete_dual_norm(const Eigen::VectorXd& l, const Sampler& sampler, double q, std::span<const double> eps,
                          const SolverConfig& config = {});

/// ||f - B u_n||_(V_m)* evaluated from the solved residual representative.
double discrete_dual_residual_norm(const MixedSolution& solution, const AssembledOperator& op,
                                   const Sampler& sampler);

struct BestApproximation {
  Eigen::VectorXd coeffs;
  int iterations = 0;
  double gradient_norm = 0.0;
  /// sqrt(g^T H^-1 g / F) at the last iterate; the stopping quantity.
  double decrement = 0.0;
};

struct BestLpConfig {
  /// Tolerance on the relative Newton decrement.
  double tol = 1e-10;
  int max_iters = 100;
  /// Absolute regularisation of |u - w|.
  double epsilon = 1e-10;
  /// Exponents visited before the target (empty: automatic).
  std::vector<double> continuation;
};

/// Minimiser of int ((u - w)^2 + eps^2)^(p/2) over w in a continuous P1
/// space, by damped Newton with continuation from p = 2.
BestApproximation best_lp_approximation(const ScalarFn& u_exact, std::span<const double> discontinuities,
                                        const PolySpace1D& space, double p, const BestLpConfig& config = {});

/// ||u_exact - u_h||_rho over the space's domain.
double error_norm(const ScalarFn& u_exact, std::span<const double> discontinuities, std::span<const double> singular,
                  const Space1D& space, std::span<const double> coeffs, double rho);

/// Exact solution beta . grad u = 0, u = g on the inflow boundary, by tracing.
double exact_solution_2d(const Problem2D& problem, int t, Vec2 p);

/// ||u - u_h||_rho for piecewise-constant u_h and the traced exact solution
/// of a source-free, reaction-free 2-D problem.
double error_norm_2d(const Problem2D& problem, std::span<const double> coeffs, double rho);

}  // namespace ddmres
