#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddmres/mesh.hpp"
#include "ddmres/quadrature.hpp"

namespace ddmres {

enum class SpaceKind { P0, P1Cont1D, PkCont1D, RefinedP1, OptimalTest1D, P0_2D, P1Conf2D };

std::string_view to_string(SpaceKind k) noexcept;

/// Endpoints at which every basis function vanishes.
struct EndpointConstraint {
  bool left = false;
  bool right = false;
};

/// Values and first derivatives of the basis functions active on one element,
/// at a set of points. values(i, j) belongs to point i and dofs[j].
struct LocalBasis {
  std::vector<int> dofs;
  Eigen::MatrixXd values;
  Eigen::MatrixXd derivs;
};

/// Finite-dimensional space of functions on a 1-D mesh.
class Space1D {
public:
  virtual ~Space1D() = default;

  virtual SpaceKind kind() const noexcept = 0;
  /// Mesh on which the functions are elementwise smooth.
  virtual const Mesh1D& mesh() const noexcept = 0;
  virtual std::size_t dof_count() const noexcept = 0;
  /// Polynomial degree per element, or -1 for non-polynomial functions.
  virtual int degree() const noexcept = 0;
  virtual std::string name() const = 0;

  /// Fills `out` with the dofs nonzero on element e of mesh() and their
  /// values and derivatives at `pts` (which must lie in that element).
  virtual void local(std::size_t e, std::span<const double> pts, LocalBasis& out) const = 0;

  /// Point evaluation. Throws OutOfDomain outside the mesh.
  double value(std::size_t dof, double x) const;
  double derivative(std::size_t dof, double x) const;
  /// Value of sum_j c_j phi_j at x.
  double evaluate(std::span<const double> coeffs, double x) const;
};

/// Continuous (or, for degree 0, discontinuous) piecewise polynomials.
///
/// Degree k >= 1 uses Lagrange bases on the Gauss-Lobatto points of each
/// element glued at the mesh nodes; node j of element e has global index
/// e * k + j before removing constrained endpoints.
class PolySpace1D final : public Space1D {
public:
  static PolySpace1D p0(Mesh1D mesh);
  static PolySpace1D p1(Mesh1D mesh, EndpointConstraint c = {});
  static PolySpace1D pk(Mesh1D mesh, int k, EndpointConstraint c = {});
  /// P1 on the mesh obtained by `level` uniform refinements.
  static PolySpace1D refined_p1(const Mesh1D& mesh, int level, EndpointConstraint c = {});

  SpaceKind kind() const noexcept override { return kind_; }
  const Mesh1D& mesh() const noexcept override { return mesh_; }
  std::size_t dof_count() const noexcept override { return dof_count_; }
  int degree() const noexcept override { return k_; }
  std::string name() const override;
  void local(std::size_t e, std::span<const double> pts, LocalBasis& out) const override;

  EndpointConstraint constraint() const noexcept { return constraint_; }
  int refinement_level() const noexcept { return level_; }
  /// Global position of dof d (nodal spaces) or element midpoint (P0).
  double dof_point(std::size_t d) const;
  /// Maps unconstrained node indices to dofs, -1 for constrained nodes.
  std::span<const int> node_to_dof() const noexcept { return node_to_dof_; }
  /// Reference nodes of the element basis on [-1, 1].
  std::span<const double> reference_nodes() const noexcept { return ref_nodes_; }

private:
  PolySpace1D(SpaceKind kind, Mesh1D mesh, int k, EndpointConstraint c, int level);

  SpaceKind kind_;
  Mesh1D mesh_;
  int k_;
  EndpointConstraint constraint_;
  int level_;
  std::vector<double> ref_nodes_;
  std::vector<int> node_to_dof_;
  std::vector<int> dof_to_node_;
  std::size_t dof_count_ = 0;
};

/// Integration mesh for a pair of spaces: the finer of the two meshes, which
/// must be nested. Throws InvalidArgument otherwise.
const Mesh1D& common_refinement(const Space1D& a, const Space1D& b);

/// Piecewise-constant functions on a triangulation, one dof per triangle.
class P0Space2D {
public:
  explicit P0Space2D(const TriMesh2D& mesh) : mesh_(&mesh) {}
  const TriMesh2D& mesh() const noexcept { return *mesh_; }
  std::size_t dof_count() const noexcept { return mesh_->num_triangles(); }

private:
  const TriMesh2D* mesh_;
};

/// Elementwise-linear functions stored as vertex-value triples per triangle.
/// Continuity across faces is a property of the data, checked by
/// max_trace_jump(); the constructor in optimal_test produces the
/// graph-conforming space.
class P1ConfSpace2D {
public:
  struct Piece {
    int element = -1;
    std::array<double, 3> values{};
  };
  struct Entry {
    int dof = -1;
    std::array<double, 3> values{};
  };

  P1ConfSpace2D(const TriMesh2D& mesh, std::vector<std::vector<Piece>> by_basis);

  const TriMesh2D& mesh() const noexcept { return *mesh_; }
  std::size_t dof_count() const noexcept { return by_basis_.size(); }
  std::span<const Piece> basis(std::size_t dof) const { return by_basis_[dof]; }
  std::span<const Entry> on_element(std::size_t t) const { return by_element_[t]; }
  std::size_t nonzeros() const noexcept;

  double value(std::size_t dof, int t, const std::array<double, 3>& bary) const;
  Vec2 gradient(std::size_t dof, int t) const;

  /// Largest jump of the trace of any basis function across faces of the
  /// given class (interior faces only).
  double max_trace_jump(FaceClass cls) const;
  /// Largest |value| of any basis function on outflow boundary faces.
  double max_outflow_trace() const;

private:
  const TriMesh2D* mesh_;
  std::vector<std::vector<Piece>> by_basis_;
  std::vector<std::vector<Entry>> by_element_;
};

/// Gradient of the linear function with the given vertex values on triangle t.
Vec2 linear_gradient(const TriMesh2D& mesh, int t, const std::array<double, 3>& values);

/// Lagrange polynomials through `nodes`: values and derivatives at x.
void lagrange_eval(std::span<const double> nodes, double x, std::span<double> values, std::span<double> derivs);

/// Projection onto continuous degree-k piecewise polynomials that interpolates
/// at mesh nodes and preserves element means: on each element the linear
/// interpolant plus a multiple of (x - x_l)(x - x_r).
class FortinOperator1D {
public:
  /// Throws DegreeTooLow for k < 2.
  FortinOperator1D(Mesh1D mesh, int k);

  const Mesh1D& mesh() const noexcept { return mesh_; }
  int degree() const noexcept { return k_; }

  /// Bubble coefficients alpha_e; element means are taken with adaptive
  /// quadrature unless `gauss_points` > 0, in which case that Gauss rule is used.
  std::vector<double> bubble_coefficients(const ScalarFn& v, int gauss_points = 0) const;

  /// Coefficients of Pi v in `target`, which must be PkCont of the same mesh
  /// and degree. Values at constrained nodes are dropped.
  Eigen::VectorXd apply(const ScalarFn& v, const PolySpace1D& target, int gauss_points = 0) const;

  /// Mesh-independent boundedness constant 6 / (q + 1)^(1/q).
  static double boundedness_constant(double q);

private:
  Mesh1D mesh_;
  int k_;
};

}  // namespace ddmres
