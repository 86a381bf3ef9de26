#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddmres/problem.hpp"
#include "ddmres/spaces.hpp"

namespace ddmres {

enum class OptimalBasisKind {
  Dual,   ///< v_j with -(beta v_j)' = chi_{T_j}
  Nodal,  ///< local combinations with value 1 at one node
};

/// Optimal test space of the piecewise constants for mu = 0 in 1-D,
/// S = {v : -(beta v)' in P0, v = 0 on the outflow boundary}.
///
/// The interval splits into maximal runs of elements where beta has one sign;
/// beta may vanish only at mesh nodes. In a run [a, b] with beta > 0,
/// beta v_j = |T_j cap [x, b]|; with beta < 0, beta v_j = -|T_j cap [a, x]|.
class OptimalTestSpace1D final : public Space1D {
public:
  SpaceKind kind() const noexcept override { return SpaceKind::OptimalTest1D; }
  const Mesh1D& mesh() const noexcept override { return mesh_; }
  std::size_t dof_count() const noexcept override { return mesh_.num_elements(); }
  int degree() const noexcept override { return constant_beta_ ? 1 : -1; }
  std::string name() const override;
  void local(std::size_t e, std::span<const double> pts, LocalBasis& out) const override;

  OptimalBasisKind basis_kind() const noexcept { return kind_; }
  /// Sign of beta on each element (+1 or -1).
  std::span<const int> element_sign() const noexcept { return sign_; }
  /// Indices of nodes where beta vanishes.
  std::span<const std::size_t> stagnation_nodes() const noexcept { return stagnation_; }

  /// Dual basis function j and its derivative at x in element e.
  double dual_value(std::size_t j, std::size_t e, double x) const;
  double dual_derivative(std::size_t j, std::size_t e, double x) const;

  /// Matrix C with nodal_i = sum_j C(i, j) dual_j.
  Eigen::MatrixXd nodal_to_dual() const;

  friend OptimalTestSpace1D optimal_basis_1d(const Mesh1D&, ScalarFn, ScalarFn, OptimalBasisKind);

private:
  OptimalTestSpace1D(Mesh1D mesh, ScalarFn beta, ScalarFn dbeta, OptimalBasisKind kind);
  // nodal_i = c_i (dual_i / h_i - dual_{partner_i} / h_partner), partner -1 if none
  std::vector<int> partner_;
  std::vector<double> nodal_scale_;
  std::vector<std::size_t> region_begin_, region_end_;  // element range of the run containing e

  Mesh1D mesh_;
  ScalarFn beta_, dbeta_;
  OptimalBasisKind kind_;
  std::vector<int> sign_;
  std::vector<std::size_t> stagnation_;
  bool constant_beta_ = false;
};

/// Builds the optimal test space. Throws BetaVanishesInsideElement when beta
/// changes sign inside an element and InvalidArgument when a run would need
/// unbounded functions (beta vanishing at the upstream end of a run).
OptimalTestSpace1D optimal_basis_1d(const Mesh1D& mesh, ScalarFn beta, ScalarFn dbeta,
                                    OptimalBasisKind kind = OptimalBasisKind::Dual);

/// Builds phi_T for every triangle T of a flow-aligned mesh: phi_T is linear on
/// each triangle, continuous across flow-crossing faces, zero on the outflow
/// boundary and satisfies -beta . grad phi_T = [K = T] on every K. Throws
/// CycleDetected, and InconsistentTrace when outflow traces over-determine a
/// triangle.
P1ConfSpace2D build_p1conf_basis(const TriMesh2D& mesh, Exec exec = Exec::Parallel);

/// Largest |-beta_K . grad phi_T|_K - [K = T]| over all basis pieces.
double p1conf_adjoint_defect(const P1ConfSpace2D& space);

struct CompatibilityReport {
  /// inf_w sup_v b(w, v) / (||w||_2 ||v||_V) at q = 2.
  double inf_sup = 0.0;
  double gamma_B = 0.0;
  bool gamma_available = false;
  bool singular = false;
  bool ok = false;
  std::size_t trial_dofs = 0;
  std::size_t test_dofs = 0;
  std::string note;
};

/// Discrete inf-sup constant of (P0 trial, test) at q = 2 from the smallest
/// generalised eigenvalue of B^T G^-1 B against the P0 mass matrix, compared
/// with 0.95 gamma_B.
CompatibilityReport verify_compatibility(const Problem1D& problem, const PolySpace1D& trial, const Space1D& test,
                                         TestNormKind norm = TestNormKind::AdjointGraph);

/// CSV dump `basis,element,x,value` sampled at `samples_per_element` points.
void write_basis_csv(std::ostream& out, const Space1D& space, int samples_per_element = 8);
/// CSV dump `basis,element,v0,v1,v2` of a P1-conf space.
void write_basis_csv(std::ostream& out, const P1ConfSpace2D& space);

}  // namespace ddmres
