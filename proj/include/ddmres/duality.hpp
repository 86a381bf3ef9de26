#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ddmres/problem.hpp"

namespace ddmres {

struct DualityMapConfig {
  double q = 2.0;
  /// Regularisation: |v| is replaced by sqrt(v^2 + epsilon^2).
  double epsilon = 0.0;
  TestNormKind norm = TestNormKind::AdjointGraph;
};

/// (sum_i w_i (v_i^2 + eps^2)^(q/2))^(1/q), computed with scaling so that
/// q = 101 neither overflows nor underflows.
double lq_norm(std::span<const double> v, std::span<const double> w, double q, double epsilon = 0.0);

/// Pointwise duality map N^(2-q) (v^2 + eps^2)^((q-2)/2) v with N the
/// regularised L^q norm. J_q(0) = 0. Throws SingularNormalization if v is
/// nonzero but its norm is not representable.
std::vector<double> jq_value(std::span<const double> v, std::span<const double> w, double q, double epsilon = 0.0);

/// Duality map of the test norm on a sampled test space.
///
/// The norm has one L^q piece per sampled operator (V and D for the adjoint
/// graph norm, D alone for the derivative norm) combined in l^2:
/// ||r||^2 = sum_k N_k(P_k r)^2. The map is the gradient of the potential
/// Phi(r) = ||r||^2 / 2 and equals sum_k P_k^T w J_q(P_k r).
class TestNormMap {
public:
  TestNormMap(const Sampler& sampler, double q);

  double q() const noexcept { return q_; }
  Eigen::Index dofs() const noexcept { return sampler_->dofs(); }
  std::size_t pieces() const noexcept { return pieces_.size(); }
  const RowSparseMatrix& piece(std::size_t k) const { return *pieces_.at(k); }
  const Eigen::VectorXd& weights() const noexcept { return sampler_->w; }

  /// Absolute regularisation per piece.
  void set_epsilon(std::vector<double> eps);
  /// eps_k = eps_rel * max(||P_k r||_inf, tiny).
  void set_relative_epsilon(const Eigen::VectorXd& r, double eps_rel);
  std::span<const double> epsilon() const noexcept { return eps_; }

  double norm(const Eigen::VectorXd& r) const;
  double potential(const Eigen::VectorXd& r) const;
  /// Coefficients <J_V(r), psi_j>.
  Eigen::VectorXd apply(const Eigen::VectorXd& r) const;

  /// Hessian of the potential as K0 - U diag(sigma) U^T, with K0 sparse
  /// symmetric and one rank-one column per piece. With `full` false the
  /// normalisation factors are frozen and U is empty.
  struct Hessian {
    SparseMatrix K0;
    Eigen::MatrixXd U;
    Eigen::VectorXd sigma;
    Eigen::MatrixXd dense() const;
  };
  Hessian hessian(const Eigen::VectorXd& r, bool full = true) const;

  /// Gram matrix of the q = 2 norm.
  SparseMatrix gram() const;

private:
  const Sampler* sampler_;
  std::vector<const RowSparseMatrix*> pieces_;
  double q_;
  std::vector<double> eps_;
};

/// <J_V(r), psi_v> for the adjoint graph norm.
double jv_residual_form(const Eigen::VectorXd& r, Eigen::Index v, const Sampler& sampler, const DualityMapConfig& config);
/// <J_q(r'), psi_v'> for the derivative norm.
double jv_1d_form(const Eigen::VectorXd& r, Eigen::Index v, const Sampler& sampler, const DualityMapConfig& config);
/// Symmetric Jacobian d<J_V(r), psi_j>/dr_i (dense).
Eigen::MatrixXd jv_jacobian(const Eigen::VectorXd& r, const Sampler& sampler, const DualityMapConfig& config);

}  // namespace ddmres
