#include "ddmres/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <boost/math/tools/roots.hpp>

#include "ddmres/error.hpp"

namespace ddmres {

double default_eps_rel(double q) {
  if (q <= 2.0) return 1e-8;
  return 1e-10;
}

std::vector<double> continuation_path(double q_target, const SolverConfig& config) {
  require(q_target > 1.0 && std::isfinite(q_target), ErrorCode::InvalidArgument, "target exponent must lie in (1, inf)");
  std::vector<double> path;
  if (!config.continuation.empty()) {
    for (double p : config.continuation) {
      require(p > 1.0 && std::isfinite(p), ErrorCode::InvalidArgument, "continuation exponents must lie in (1, inf)");
      path.push_back(p / (p - 1.0));
    }
    if (std::abs(path.back() - q_target) > 1e-14 * q_target) path.push_back(q_target);
    return path;
  }
  if (q_target == 2.0) return {2.0};
  const double span = std::abs(std::log(q_target / 2.0));
  const int steps = std::clamp(static_cast<int>(std::ceil(span / std::log(1.4) - 1e-12)), 1, 12);
  for (int i = 1; i <= steps; ++i) path.push_back(2.0 * std::pow(q_target / 2.0, static_cast<double>(i) / steps));
  path.back() = q_target;
  return path;
}

namespace {

// Symmetric positive definite solve with K = K0 - U diag(sigma) U^T + lambda G.
class SpdSolver {
public:
  bool factor(const TestNormMap::Hessian& h, const SparseMatrix& G, double lambda, int dense_threshold) {
    const Eigen::Index m = h.K0.rows();
    dense_ = m <= dense_threshold;
    if (dense_) {
      Eigen::MatrixXd K = h.dense();
      if (lambda > 0.0) K += lambda * Eigen::MatrixXd(G);
      dllt_.compute(K);
      return dllt_.info() == Eigen::Success;
    }
    SparseMatrix K0 = h.K0;
    if (lambda > 0.0) K0 += lambda * G;
    sldlt_.compute(K0);
    if (sldlt_.info() != Eigen::Success || !(sldlt_.vectorD().minCoeff() > 0.0)) return false;
    U_ = h.U;
    if (U_.cols() == 0) return true;
    K0invU_ = sldlt_.solve(U_);
    Eigen::MatrixXd C = h.sigma.cwiseInverse().asDiagonal();
    C -= U_.transpose() * K0invU_;
    cap_.compute(C);
    // K is positive definite iff the capacitance keeps the sign of sigma^-1
    for (Eigen::Index i = 0; i < h.sigma.size(); ++i)
      if (h.sigma[i] > 0.0 && !(C(i, i) > 0.0)) return false;
    return std::abs(cap_.determinant()) > 0.0;
  }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const {
    if (dense_) return dllt_.solve(b);
    Eigen::MatrixXd x = sldlt_.solve(b);
    if (U_.cols() > 0) x += K0invU_ * cap_.solve(U_.transpose() * x);
    return x;
  }

private:
  bool dense_ = true;
  Eigen::LLT<Eigen::MatrixXd> dllt_;
  Eigen::SimplicialLDLT<SparseMatrix> sldlt_;
  Eigen::MatrixXd U_, K0invU_;
  Eigen::PartialPivLU<Eigen::MatrixXd> cap_;
};

// Block elimination for [K B; B^T 0][x; y] = [a; c].
class SaddleSolver {
public:
  SaddleSolver(const SpdSolver& k, const Eigen::MatrixXd& B) : k_(&k), B_(&B) {
    if (B.cols() == 0) return;
    Y_ = k.solve(B);
    const Eigen::MatrixXd S = B.transpose() * Y_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
    const double lmax = eig.eigenvalues().cwiseAbs().maxCoeff();
    const double lmin = eig.eigenvalues().minCoeff();
    if (!(lmax > 0.0) || !(lmin > 1e-12 * lmax)) {
      std::ostringstream msg;
      msg << "trial columns are not separated by the test space (Schur eigenvalue ratio " << (lmax > 0 ? lmin / lmax : 0.0)
          << ")";
      fail(ErrorCode::SingularSystem, msg.str());
    }
    s_.compute(S);
  }

  void solve(const Eigen::VectorXd& a, const Eigen::VectorXd& c, Eigen::VectorXd& x, Eigen::VectorXd& y) const {
    const Eigen::VectorXd z = k_->solve(a);
    if (B_->cols() == 0) {
      x = z;
      y.resize(0);
      return;
    }
    y = s_.solve(B_->transpose() * z - c);
    x = z - Y_ * y;
  }

  Eigen::VectorXd solve_k(const Eigen::VectorXd& a) const { return k_->solve(a); }

  /// K-orthogonal projection onto ker B^T.
  Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    if (B_->cols() == 0) return x;
    return x - Y_ * s_.solve(B_->transpose() * x);
  }

  /// Multiplier y minimising ||g - B y|| in the K^-1 norm.
  Eigen::VectorXd multiplier(const Eigen::VectorXd& g) const {
    if (B_->cols() == 0) return Eigen::VectorXd();
    return s_.solve(Y_.transpose() * g);
  }

private:
  const SpdSolver* k_;
  const Eigen::MatrixXd* B_;
  Eigen::MatrixXd Y_;
  Eigen::LDLT<Eigen::MatrixXd> s_;
};

struct NewtonState {
  Eigen::VectorXd r;
  Eigen::VectorXd u;
  std::vector<Eigen::VectorXd> z;  // sampled representatives (primal form)
};

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

// Newton iteration for J(r) + B u = f, B^T r = 0 at fixed exponent and
// regularisation. Returns the step record.
ContinuationStep newton_stage(const TestNormMap& map, const SparseMatrix& G, const SaddleSolver& gram,
                              const Eigen::MatrixXd& B, const Eigen::VectorXd& f, double fscale, double tol,
                              const SolverConfig& cfg, NewtonState& st) {
  ContinuationStep step;
  step.q = map.q();
  step.epsilon.assign(map.epsilon().begin(), map.epsilon().end());
  const double gram_trace = G.diagonal().sum();

  // Iterates stay in ker B^T: every step is projected G-orthogonally, and u is
  // the multiplier fitting f - J(r) best in the G^-1 norm. The merit is then
  // the dual objective restricted to ker B^T.
  auto merit = [&](const Eigen::VectorXd& r) { return map.potential(r) - f.dot(r); };
  st.r = gram.project(st.r);

  for (int it = 0;; ++it) {
    const Eigen::VectorXd g = f - map.apply(st.r);
    if (B.cols()) st.u = gram.multiplier(g);
    const Eigen::VectorXd F1 = B.cols() ? Eigen::VectorXd(B * st.u - g) : Eigen::VectorXd(-g);
    const Eigen::VectorXd F2 = B.transpose() * st.r;
    step.residual = std::max(inf_norm(F1), inf_norm(F2)) / fscale;
    if (step.residual <= tol) return step;
    if (it >= cfg.max_iters) {
      std::ostringstream msg;
      msg << "no convergence at q = " << map.q() << " after " << it << " iterations (residual " << step.residual
          << ")";
      fail(ErrorCode::NewtonDiverged, msg.str());
    }
    ++step.iterations;

    const TestNormMap::Hessian h = map.hessian(st.r, cfg.full_jacobian);
    const double m0 = merit(st.r);
    const double noise = 1e-13 * (std::abs(map.potential(st.r)) + std::abs(f.dot(st.r)));
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      Eigen::VectorXd dr;
      if (attempt == 0) {
        SpdSolver k;
        bool ok = false;
        const double scale = h.K0.diagonal().sum() / gram_trace;
        for (double lambda = 0.0; lambda < 1e3 * scale; lambda = lambda == 0.0 ? 1e-14 * scale : lambda * 100.0)
          if ((ok = k.factor(h, G, lambda, cfg.dense_threshold))) break;
        if (!ok) continue;
        SaddleSolver kkt(k, B);
        Eigen::VectorXd unused;
        kkt.solve(g, Eigen::VectorXd::Zero(B.cols()), dr, unused);
        dr = gram.project(dr);
      } else {
        // scaled projected gradient: always a descent direction
        ++step.picard_steps;
        dr = gram.project(gram.solve_k(g)) * (gram_trace / h.K0.diagonal().sum());
      }
      const double slope = -g.dot(dr);
      if (!std::isfinite(slope) || slope >= 0.0) continue;
      for (double alpha = 1.0; alpha >= cfg.min_step; alpha *= cfg.backtrack) {
        const Eigen::VectorXd trial = st.r + alpha * dr;
        const double mt = merit(trial);
        if (std::isfinite(mt) && mt <= m0 + 1e-4 * alpha * slope + noise) {
          st.r = gram.project(trial);
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      std::ostringstream msg;
      msg << "line search failed at q = " << map.q() << ", iteration " << it << " (residual " << step.residual << ")";
      fail(ErrorCode::NewtonDiverged, msg.str());
    }
  }
}

// Primal form for q > 2: minimise F(z) = sum_k N_p(z_k)^2 / 2 over
// representatives z_k (one per norm piece, sampled) subject to
// sum_k P_k^T w z_k + B u = f. The multiplier of the constraint is r, and
// J_q(P_k r) = z_k at the optimum. The weights |z|^(p-2) stay bounded by the
// regularisation, while the dual weights |P r|^(q-2) degenerate for large q.
struct PrimalPiece {
  double norm = 0.0;
  Eigen::VectorXd grad;
  Eigen::VectorXd dinv;  // inverse of the diagonal Hessian part
  double rho = 0.0;      // Hessian = diag + rho grad grad^T
  double sm = 0.0;       // rho / (1 + rho grad^T dinv grad)
  Eigen::VectorXd hinv(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd dg = dinv.cwiseProduct(grad);
    return dinv.cwiseProduct(x) - (sm * dg.dot(x)) * dg;
  }
};

double primal_norm(const Eigen::VectorXd& z, const Eigen::VectorXd& w, double p, double eps) {
  double scale = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) scale = std::max(scale, std::hypot(z[i], eps));
  if (scale == 0.0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) sum += w[i] * std::pow(std::hypot(z[i], eps) / scale, p);
  return scale * std::pow(sum, 1.0 / p);
}

PrimalPiece primal_piece(const Eigen::VectorXd& z, const Eigen::VectorXd& w, double p, double eps) {
  PrimalPiece pc;
  pc.norm = primal_norm(z, w, p, eps);
  pc.grad = Eigen::VectorXd::Zero(z.size());
  pc.dinv = w.cwiseInverse();
  if (pc.norm == 0.0) return pc;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double s = std::hypot(z[i], eps);
    const double t = std::pow(s / pc.norm, p - 2.0);
    pc.grad[i] = w[i] * t * z[i];
    pc.dinv[i] = s * s / (w[i] * t * ((p - 1.0) * z[i] * z[i] + eps * eps));
  }
  pc.rho = (2.0 - p) / (pc.norm * pc.norm);
  pc.sm = pc.rho / (1.0 + pc.rho * pc.grad.dot(pc.dinv.cwiseProduct(pc.grad)));
  return pc;
}

ContinuationStep primal_stage(const TestNormMap& map, const SparseMatrix& G, const Eigen::MatrixXd& B,
                              const Eigen::VectorXd& f, double fscale, double tol, double eps_rel,
                              const SolverConfig& cfg, NewtonState& st) {
  const double q = map.q();
  const double p = q / (q - 1.0);
  const std::size_t npc = map.pieces();
  const Eigen::VectorXd& w = map.weights();
  ContinuationStep step;
  step.q = q;
  std::vector<double> eps(npc);
  for (std::size_t k = 0; k < npc; ++k) eps[k] = eps_rel * std::max(inf_norm(st.z[k]), 1e-300);
  step.epsilon = eps;

  auto objective = [&](const std::vector<Eigen::VectorXd>& z) {
    double s = 0.0;
    for (std::size_t k = 0; k < npc; ++k) {
      const double n = primal_norm(z[k], w, p, eps[k]);
      s += 0.5 * n * n;
    }
    return s;
  };

  // Residual: feasibility and orthogonality relative to ||f||_inf, and the
  // Newton decrement sqrt(dz^T H dz / 2F). Checking J_q(P_k r) = z_k instead
  // would amplify rounding in r by q - 1.
  auto constraint_residual = [&]() {
    Eigen::VectorXd feas = (B.cols() ? Eigen::VectorXd(B * st.u) : Eigen::VectorXd::Zero(f.size())) - f;
    for (std::size_t k = 0; k < npc; ++k) feas += map.piece(k).transpose() * w.cwiseProduct(st.z[k]);
    const Eigen::VectorXd F2 = B.transpose() * st.r;
    return std::max(inf_norm(feas), inf_norm(F2)) / fscale;
  };

  for (int it = 0;; ++it) {
    if (it >= cfg.max_iters) {
      std::ostringstream msg;
      msg << "no convergence at q = " << q << " after " << it << " iterations (residual " << step.residual << ")";
      fail(ErrorCode::NewtonDiverged, msg.str());
    }
    ++step.iterations;

    std::vector<PrimalPiece> pcs(npc);
    TestNormMap::Hessian h;
    h.K0.resize(map.dofs(), map.dofs());
    h.U.resize(map.dofs(), static_cast<Eigen::Index>(npc));
    h.sigma.resize(static_cast<Eigen::Index>(npc));
    Eigen::VectorXd a = f - (B.cols() ? Eigen::VectorXd(B * st.u) : Eigen::VectorXd::Zero(f.size()));
    for (std::size_t k = 0; k < npc; ++k) {
      const RowSparseMatrix& P = map.piece(k);
      pcs[k] = primal_piece(st.z[k], w, p, eps[k]);
      const Eigen::VectorXd wd = w.cwiseProduct(w).cwiseProduct(pcs[k].dinv);
      h.K0 += SparseMatrix(P.transpose() * wd.asDiagonal() * P);
      h.U.col(static_cast<Eigen::Index>(k)) = P.transpose() * w.cwiseProduct(pcs[k].dinv.cwiseProduct(pcs[k].grad));
      h.sigma[static_cast<Eigen::Index>(k)] = pcs[k].sm;
      a -= P.transpose() * w.cwiseProduct(st.z[k]);
      a += P.transpose() * w.cwiseProduct(pcs[k].hinv(pcs[k].grad));
    }
    SpdSolver k;
    bool ok = false;
    const double scale = h.K0.diagonal().sum() / G.diagonal().sum();
    for (double lambda = 0.0; lambda < 1e3 * scale; lambda = lambda == 0.0 ? 1e-14 * scale : lambda * 100.0)
      if ((ok = k.factor(h, G, lambda, cfg.dense_threshold))) break;
    if (!ok) fail(ErrorCode::NewtonDiverged, "primal Newton system could not be factorised at q = " + std::to_string(q));
    const SaddleSolver kkt(k, B);
    Eigen::VectorXd lam, du;
    kkt.solve(a, Eigen::VectorXd::Zero(B.cols()), lam, du);

    std::vector<Eigen::VectorXd> dz(npc);
    double slope = 0.0;
    for (std::size_t kk = 0; kk < npc; ++kk) {
      const Eigen::VectorXd Pl = map.piece(kk) * lam;
      dz[kk] = pcs[kk].hinv(w.cwiseProduct(Pl) - pcs[kk].grad);
      slope += pcs[kk].grad.dot(dz[kk]);
    }
    const double f0 = objective(st.z);
    const double decrement = std::sqrt(std::max(0.0, -slope) / std::max(2.0 * f0, 1e-300));
    const double noise = 1e-14 * std::abs(f0);
    bool accepted = false;
    if (std::isfinite(slope)) {
      for (double alpha = 1.0; alpha >= cfg.min_step; alpha *= cfg.backtrack) {
        std::vector<Eigen::VectorXd> trial(npc);
        for (std::size_t kk = 0; kk < npc; ++kk) trial[kk] = st.z[kk] + alpha * dz[kk];
        const double ft = objective(trial);
        if (std::isfinite(ft) && ft <= f0 + 1e-4 * alpha * std::min(slope, 0.0) + noise) {
          st.z = std::move(trial);
          if (B.cols()) st.u += alpha * du;
          st.r = lam;
          accepted = true;
          if (alpha == 1.0) {
            step.residual = std::max(constraint_residual(), decrement);
            if (step.residual <= tol) return step;
          }
          break;
        }
      }
    }
    if (!accepted) {
      std::ostringstream msg;
      msg << "line search failed at q = " << q << ", iteration " << it << " (residual " << step.residual << ")";
      fail(ErrorCode::NewtonDiverged, msg.str());
    }
  }
}

std::string describe_path(const std::vector<ContinuationStep>& path) {
  std::ostringstream s;
  s << "continuation:";
  for (const auto& p : path) s << " q=" << p.q << "(" << p.iterations << " it, res " << p.residual << ")";
  return s.str();
}

// Linear q = 2 solve followed by continuation to q_target. With `fixed_eps`
// the regularisation is held at the given values instead of following r.
MixedSolution run_path(const Eigen::MatrixXd& B, const Eigen::VectorXd& f, const Sampler& sampler, double q_target,
                       const SolverConfig& cfg, std::span<const double> fixed_eps) {
  const Eigen::Index m = sampler.dofs();
  require(f.size() == m && B.rows() == m, ErrorCode::InvalidArgument, "operator and test space sizes differ");
  require(m >= B.cols(), ErrorCode::InvalidArgument, "test space is smaller than the trial space");
  MixedSolution sol;
  sol.q = q_target;
  sol.r = Eigen::VectorXd::Zero(m);
  sol.u = Eigen::VectorXd::Zero(B.cols());
  const double fscale = inf_norm(f);

  TestNormMap linear(sampler, 2.0);
  const SparseMatrix G = linear.gram();
  TestNormMap::Hessian gram_h;
  gram_h.K0 = G;
  SpdSolver gram_k;
  require(gram_k.factor(gram_h, G, 0.0, cfg.dense_threshold), ErrorCode::SingularGram,
          "test Gram matrix is not positive definite");
  const SaddleSolver gram(gram_k, B);
  {
    if (fscale > 0.0) gram.solve(f, Eigen::VectorXd::Zero(B.cols()), sol.r, sol.u);
    ContinuationStep first;
    first.q = 2.0;
    first.epsilon.assign(linear.pieces(), 0.0);
    sol.diagnostics.continuation_path.push_back(first);
  }
  sol.epsilon.assign(linear.pieces(), 0.0);
  if (fscale == 0.0) return sol;
  // f in the range of B: r = 0 solves the system for every q, and the maps
  // at q > 2 have no curvature there
  if (B.cols() > 0 && inf_norm(f - B * sol.u) <= 1e-13 * fscale) {
    sol.r.setZero();
    sol.diagnostics.orthogonality = 0.0;
    return sol;
  }

  if (q_target != 2.0) {
    NewtonState st{sol.r, sol.u, {}};
    const auto path = continuation_path(q_target, cfg);
    for (std::size_t i = 0; i < path.size(); ++i) {
      const double q = path[i];
      const bool last = i + 1 == path.size();
      TestNormMap map(sampler, q);
      const double eps_rel = cfg.eps_rel > 0.0 ? cfg.eps_rel : default_eps_rel(q);
      const bool primal = q > 2.0 && fixed_eps.empty() && cfg.full_jacobian;
      if (!fixed_eps.empty())
        map.set_epsilon({fixed_eps.begin(), fixed_eps.end()});
      else if (!primal)
        map.set_relative_epsilon(st.r, eps_rel);
      const double tol = last ? cfg.newton_tol : std::max(cfg.newton_tol, 1e-6);
      try {
        if (primal) {
          if (st.z.empty()) {
            // representatives of the current r at the previous exponent
            TestNormMap prev(sampler, i == 0 ? 2.0 : path[i - 1]);
            for (std::size_t k = 0; k < map.pieces(); ++k) {
              const Eigen::VectorXd y = map.piece(k) * st.r;
              const auto j = jq_value({y.data(), static_cast<std::size_t>(y.size())},
                                      {sampler.w.data(), static_cast<std::size_t>(sampler.w.size())}, prev.q(), 0.0);
              st.z.push_back(Eigen::Map<const Eigen::VectorXd>(j.data(), y.size()));
            }
          }
          // smoothing continuation: |z|^(p-2) is resolved down to eps gradually
          const double e0 = std::max(eps_rel, 1e-2);
          ContinuationStep total;
          total.q = q;
          for (double e = e0;; e = std::max(e * 1e-2, eps_rel)) {
            const bool final_eps = e <= eps_rel;
            const ContinuationStep s = primal_stage(map, G, B, f, fscale, final_eps ? tol : 1e-6, e, cfg, st);
            total.iterations += s.iterations;
            total.residual = s.residual;
            total.epsilon = s.epsilon;
            if (final_eps || !last) break;
          }
          sol.diagnostics.continuation_path.push_back(total);
          map.set_epsilon(std::vector<double>(map.pieces(), 0.0));
        } else {
          st.z.clear();
          sol.diagnostics.continuation_path.push_back(newton_stage(map, G, gram, B, f, fscale, tol, cfg, st));
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NewtonDiverged) throw;
        fail(ErrorCode::NewtonDiverged, std::string(e.what()) + "; " + describe_path(sol.diagnostics.continuation_path));
      }
      sol.epsilon.assign(map.epsilon().begin(), map.epsilon().end());
    }
    sol.r = st.r;
    sol.u = st.u;
  }

  const Eigen::VectorXd F2 = B.transpose() * sol.r;
  if (q_target == 2.0) {
    const Eigen::VectorXd F1 = linear.apply(sol.r) + B * sol.u - f;
    sol.diagnostics.final_residual = std::max(inf_norm(F1), inf_norm(F2)) / fscale;
  } else {
    sol.diagnostics.final_residual = sol.diagnostics.continuation_path.back().residual;
  }
  sol.diagnostics.orthogonality = inf_norm(F2) / fscale;
  for (const auto& s : sol.diagnostics.continuation_path) sol.diagnostics.iterations += s.iterations;
  return sol;
}

}  // namespace

MixedSolution solve_mixed(const AssembledOperator& op, const Sampler& sampler, double q, const SolverConfig& config) {
  const Eigen::MatrixXd B(op.B);
  return run_path(B, op.f, sampler, q, config, {});
}

MixedSolution solve_mixed(const Problem1D& problem, const Space1D& trial, const Space1D& test,
                          const SolverConfig& config) {
  validate(problem, trial.mesh());
  require(test.dof_count() >= trial.dof_count(), ErrorCode::InvalidArgument,
          "test space dimension must be at least the trial dimension");
  const AssembledOperator op = assemble(problem, trial, test, config.exec);
  int points = config.quadrature_points;
  if (points <= 0) points = test.degree() < 0 ? 12 : (problem.q() == 2.0 ? test.degree() + 2 : 2 * test.degree() + 4);
  const Sampler sampler = sample_test_space(problem, test, config.norm, points, config.exec);
  return solve_mixed(op, sampler, problem.q(), config);
}

Eigen::VectorXd solve_petrov_galerkin(const AssembledOperator& op) {
  require(op.B.rows() == op.B.cols(), ErrorCode::InvalidArgument, "Petrov-Galerkin needs equal trial and test dimensions");
  SparseMatrix B = op.B;
  B.makeCompressed();
  Eigen::SparseLU<SparseMatrix> lu;
  lu.compute(B);
  require(lu.info() == Eigen::Success, ErrorCode::SingularSystem, "Petrov-Galerkin matrix is singular");
  Eigen::VectorXd u = lu.solve(op.f);
  require(lu.info() == Eigen::Success && u.allFinite(), ErrorCode::SingularSystem, "Petrov-Galerkin solve failed");
  return u;
}

Eigen::VectorXd solve_petrov_galerkin(const Problem1D& problem, const Space1D& trial, const Space1D& optimal_test,
                                      Exec exec) {
  return solve_petrov_galerkin(assemble(problem, trial, optimal_test, exec));
}

Eigen::VectorXd solve_petrov_galerkin(const Problem2D& problem, const P0Space2D& trial, const P1ConfSpace2D& test,
                                      Exec exec) {
  return solve_petrov_galerkin(assemble(problem, trial, test, exec));
}

double discrete_dual_norm(const Eigen::VectorXd& l, const Sampler& sampler, double q, std::span<const double> eps,
                          const SolverConfig& config) {
  const Eigen::MatrixXd B(sampler.dofs(), 0);
  const MixedSolution s = run_path(B, l, sampler, q, config, eps);
  TestNormMap map(sampler, q);
  map.set_epsilon(s.epsilon);
  return std::sqrt(std::max(0.0, 2.0 * (l.dot(s.r) - map.potential(s.r))));
}

double discrete_dual_residual_norm(const MixedSolution& solution, const AssembledOperator& op,
                                   const Sampler& sampler) {
  TestNormMap map(sampler, solution.q);
  map.set_epsilon(solution.epsilon);
  const Eigen::VectorXd l = op.f - op.B * solution.u;
  return std::sqrt(std::max(0.0, 2.0 * (l.dot(solution.r) - map.potential(solution.r))));
}

// ---------------------------------------------------------------------------
// Best L^p approximation and error norms

namespace {

// Zeros of f on (a, b) located by sign changes on a uniform sample.
std::vector<double> sampled_roots(const ScalarFn& f, double a, double b, int samples) {
  std::vector<double> roots;
  double x0 = a, f0 = f(a + 1e-14 * (b - a));
  for (int i = 1; i <= samples; ++i) {
    const double x1 = i == samples ? b : a + (b - a) * i / samples;
    const double f1 = f(i == samples ? b - 1e-14 * (b - a) : x1);
    if (f1 == 0.0 && i < samples) {
      roots.push_back(x1);
    } else if ((f0 < 0.0 && f1 > 0.0) || (f0 > 0.0 && f1 < 0.0)) {
      boost::uintmax_t iters = 200;
      auto tolf = [](double l, double r) { return std::abs(r - l) <= 4e-16 * std::max(std::abs(l), std::abs(r)) + 1e-300; };
      const auto [lo, hi] = boost::math::tools::toms748_solve(f, x0, x1, f0, f1, tolf, iters);
      roots.push_back(0.5 * (lo + hi));
    }
    x0 = x1;
    f0 = f1;
  }
  return roots;
}

// Composite rule on [a, b] split at discontinuities and graded toward the
// zeros of `err` and the listed singular points.
PointRule error_rule(const ScalarFn& err, double a, double b, std::span<const double> discontinuities,
                     std::span<const double> singular, int samples) {
  std::vector<double> cuts{a};
  for (double d : discontinuities)
    if (d > a && d < b) cuts.push_back(d);
  for (double s : singular)
    if (s > a && s < b) cuts.push_back(s);
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  std::vector<double> special(singular.begin(), singular.end());
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (!(cuts[i + 1] > cuts[i])) continue;
    const double l = cuts[i], r = cuts[i + 1];
    const auto roots = sampled_roots(err, l, r, samples);
    special.insert(special.end(), roots.begin(), roots.end());
    // zeros sitting on the ends are not seen as sign changes
    const double el = std::abs(err(l + 1e-14 * (r - l))), er = std::abs(err(r - 1e-14 * (r - l)));
    const double scale = std::max({el, er, std::abs(err(0.5 * (l + r)))});
    if (el <= 1e-6 * scale) special.push_back(l);
    if (er <= 1e-6 * scale) special.push_back(r);
  }
  return composite_rule(a, b, discontinuities, special, 10);
}

}  // namespace

BestApproximation best_lp_approximation(const ScalarFn& u_exact, std::span<const double> discontinuities,
                                        const PolySpace1D& space, double p, const BestLpConfig& config) {
  require(p > 1.0 && std::isfinite(p), ErrorCode::InvalidArgument, "best approximation needs p in (1, inf)");
  require(space.degree() == 1, ErrorCode::InvalidArgument, "best approximation expects a continuous P1 space");
  const Mesh1D& mesh = space.mesh();
  const Eigen::Index n = static_cast<Eigen::Index>(space.dof_count());

  struct Local {
    std::vector<int> dofs;
    std::vector<double> w, e, u;
    Eigen::MatrixXd phi;
  };
  auto sample = [&](const Eigen::VectorXd& c, double pp, bool with_roots) {
    std::vector<Local> out(mesh.num_elements());
    LocalBasis lb;
    for (std::size_t el = 0; el < mesh.num_elements(); ++el) {
      const double a = mesh.node(el), b = mesh.node(el + 1);
      auto uh = [&](double x) {
        const double pt[1] = {x};
        space.local(el, pt, lb);
        double s = 0.0;
        for (std::size_t j = 0; j < lb.dofs.size(); ++j) s += c[lb.dofs[j]] * lb.values(0, j);
        return s;
      };
      const ScalarFn err = [&](double x) { return u_exact(x) - uh(x); };
      const PointRule rule = with_roots && pp != 2.0 ? error_rule(err, a, b, discontinuities, {}, 16)
                                                     : composite_rule(a, b, discontinuities, {}, 10);
      space.local(el, rule.x, lb);
      Local& L = out[el];
      L.dofs = lb.dofs;
      L.phi = lb.values;
      L.w = rule.w;
      L.e.resize(rule.x.size());
      L.u.resize(rule.x.size());
      for (std::size_t q = 0; q < rule.x.size(); ++q) {
        double s = 0.0;
        for (std::size_t j = 0; j < lb.dofs.size(); ++j) s += c[lb.dofs[j]] * lb.values(q, j);
        L.u[q] = u_exact(rule.x[q]);
        L.e[q] = L.u[q] - s;
      }
    }
    return out;
  };


  std::vector<double> path = config.continuation;
  if (path.empty()) {
    // p - 1 halves (or doubles) per step
    const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(std::log2(p - 1.0)) - 1e-12)));
    for (int i = 1; i <= steps; ++i) path.push_back(1.0 + std::pow(p - 1.0, static_cast<double>(i) / steps));
  }
  if (path.back() != p) path.push_back(p);

  BestApproximation res;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  // p = 2 start: the L^2 projection
  path.insert(path.begin(), 2.0);
  for (std::size_t stage = 0; stage < path.size(); ++stage) {
    const double pp = path[stage];
    const bool last = stage + 1 == path.size();
    // smoothing continuation in eps; intermediate exponents stay smooth
    for (double eps = std::max(config.epsilon, pp == 2.0 ? config.epsilon : 1e-2);;
         eps = std::max(eps * 1e-2, config.epsilon)) {
      const bool final_eps = eps <= config.epsilon;
      const double tol = last && final_eps ? config.tol : std::max(config.tol, 1e-8);
      for (int it = 0;; ++it) {
        // one rule per iteration, so the line search compares like with like
        const auto s = sample(c, pp, true);
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
        for (const Local& L : s)
          for (std::size_t q = 0; q < L.w.size(); ++q) {
            const double e = L.e[q];
            const double s2 = e * e + eps * eps;
            const double g = -pp * std::pow(s2, 0.5 * pp - 1.0) * e * L.w[q];
            const double hq = pp * std::pow(s2, 0.5 * pp - 2.0) * ((pp - 1.0) * e * e + eps * eps) * L.w[q];
            for (std::size_t i = 0; i < L.dofs.size(); ++i) {
              grad[L.dofs[i]] += g * L.phi(q, i);
              for (std::size_t j = 0; j < L.dofs.size(); ++j) H(L.dofs[i], L.dofs[j]) += hq * L.phi(q, i) * L.phi(q, j);
            }
          }
        res.gradient_norm = grad.lpNorm<Eigen::Infinity>();
        if (res.gradient_norm == 0.0) break;
        if (it >= config.max_iters)
          fail(ErrorCode::NewtonDiverged, "best approximation did not converge at p = " + std::to_string(pp) +
                                              " (gradient " + std::to_string(res.gradient_norm) + ")");
        Eigen::LLT<Eigen::MatrixXd> llt(H);
        Eigen::VectorXd dc;
        double shift = 0.0;
        while (true) {
          if (shift > 0.0) llt.compute(H + shift * Eigen::MatrixXd::Identity(n, n));
          if (llt.info() == Eigen::Success) {
            dc = llt.solve(-grad);
            if (dc.allFinite() && grad.dot(dc) < 0.0) break;
          }
          shift = shift == 0.0 ? 1e-14 * H.diagonal().cwiseAbs().maxCoeff() : shift * 100.0;
        }
        auto functional = [&](const Eigen::VectorXd& coeffs) {
          double v = 0.0;
          for (const Local& L : s)
            for (std::size_t q = 0; q < L.w.size(); ++q) {
              double uh = 0.0;
              for (std::size_t j = 0; j < L.dofs.size(); ++j) uh += coeffs[L.dofs[j]] * L.phi(q, j);
              const double e = L.u[q] - uh;
              v += L.w[q] * std::pow(e * e + eps * eps, 0.5 * pp);
            }
          return v;
        };
        const double f0 = functional(c);
        const double slope = grad.dot(dc);
        // Newton decrement: the gradient itself carries rounding amplified by
        // eps^(p-2) where the error vanishes identically
        res.decrement = std::sqrt(std::max(0.0, -slope) / std::max(f0, 1e-300));
        if (res.decrement <= tol) {
          c += dc;
          break;
        }
        ++res.iterations;
        bool accepted = false;
        for (double alpha = 1.0; alpha >= 1e-10; alpha *= 0.5) {
          const Eigen::VectorXd trial = c + alpha * dc;
          if (functional(trial) <= f0 + 1e-4 * alpha * slope + 1e-15 * std::abs(f0)) {
            c = trial;
            accepted = true;
            break;
          }
        }
        if (!accepted)
          fail(ErrorCode::NewtonDiverged, "best approximation line search failed at p = " + std::to_string(pp) +
                                              " (gradient " + std::to_string(res.gradient_norm) + ")");
      }
      if (final_eps || !last) break;
    }
  }
  res.coeffs = c;
  return res;
}

double error_norm(const ScalarFn& u_exact, std::span<const double> discontinuities, std::span<const double> singular,
                  const Space1D& space, std::span<const double> coeffs, double rho) {
  require(rho >= 1.0 && std::isfinite(rho), ErrorCode::InvalidArgument, "error exponent must lie in [1, inf)");
  require(coeffs.size() == space.dof_count(), ErrorCode::InvalidArgument, "coefficient vector has the wrong length");
  const Mesh1D& mesh = space.mesh();
  LocalBasis lb;
  double total = 0.0;
  for (std::size_t el = 0; el < mesh.num_elements(); ++el) {
    const double a = mesh.node(el), b = mesh.node(el + 1);
    auto uh = [&](double x) {
      const double pt[1] = {x};
      space.local(el, pt, lb);
      double s = 0.0;
      for (std::size_t j = 0; j < lb.dofs.size(); ++j) s += coeffs[lb.dofs[j]] * lb.values(0, j);
      return s;
    };
    const ScalarFn err = [&](double x) { return u_exact(x) - uh(x); };
    const PointRule rule = error_rule(err, a, b, discontinuities, singular, 8);
    space.local(el, rule.x, lb);
    for (std::size_t q = 0; q < rule.x.size(); ++q) {
      double s = 0.0;
      for (std::size_t j = 0; j < lb.dofs.size(); ++j) s += coeffs[lb.dofs[j]] * lb.values(q, j);
      total += rule.w[q] * std::pow(std::abs(u_exact(rule.x[q]) - s), rho);
    }
  }
  return std::pow(total, 1.0 / rho);
}

// ---------------------------------------------------------------------------
// 2-D exact solution and errors

double exact_solution_2d(const Problem2D& problem, int t, Vec2 p) {
  require(problem.mesh != nullptr, ErrorCode::InvalidArgument, "problem has no mesh");
  return problem.inflow(trace_to_inflow(*problem.mesh, t, p).point);
}

namespace {

// Inflow boundary parametrised by accumulated inflow flux.
class InflowChart {
public:
  explicit InflowChart(const TriMesh2D& mesh) : mesh_(&mesh) {
    const auto tags = classify_faces(mesh);
    std::map<int, std::vector<int>> at_vertex;
    std::vector<int> faces;
    for (int f = 0; f < static_cast<int>(mesh.num_faces()); ++f)
      if (tags[f] == FaceClass::Inflow) {
        faces.push_back(f);
        for (int v : mesh.face(f).v) at_vertex[v].push_back(f);
      }
    std::vector<bool> used(mesh.num_faces(), false);
    double sigma = 0.0;
    auto walk = [&](int f, int entry) {
      while (f >= 0 && !used[f]) {
        used[f] = true;
        const Face& face = mesh.face(f);
        const int exit = face.v[0] == entry ? face.v[1] : face.v[0];
        Segment s;
        s.face = f;
        s.start = mesh.vertex(entry);
        s.dir = mesh.vertex(exit) - s.start;
        s.flux = std::abs(dot(mesh.beta(face.tri[0]), face.normal)) * face.length;
        s.sigma0 = sigma;
        sigma += s.flux;
        index_[f] = segments_.size();
        segments_.push_back(s);
        int next = -1;
        for (int g : at_vertex[exit])
          if (!used[g]) next = g;
        entry = exit;
        f = next;
      }
      sigma += 1.0;  // gap between chains
    };
    // chains start at vertices touching a single inflow face
    for (int f : faces)
      for (int v : mesh.face(f).v)
        if (!used[f] && at_vertex[v].size() == 1) walk(f, v);
    for (int f : faces)
      if (!used[f]) walk(f, mesh.face(f).v[0]);
  }

  double sigma(int face, Vec2 p) const {
    const Segment& s = segments_[index_.at(face)];
    const double t = std::clamp(dot(p - s.start, s.dir) / dot(s.dir, s.dir), 0.0, 1.0);
    return s.sigma0 + t * s.flux;
  }

  Vec2 point(double sigma) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), sigma,
                               [](double v, const Segment& s) { return v < s.sigma0; });
    const Segment& s = it == segments_.begin() ? segments_.front() : *(it - 1);
    const double t = std::clamp((sigma - s.sigma0) / s.flux, 0.0, 1.0);
    return s.start + t * s.dir;
  }

  std::vector<double> breaks() const {
    std::vector<double> b;
    for (const Segment& s : segments_) b.push_back(s.sigma0);
    return b;
  }

  /// sigma of a boundary point, or NaN when it does not lie on the inflow boundary.
  double locate(Vec2 p) const {
    for (const Segment& s : segments_) {
      const Vec2 d = p - s.start;
      const double len2 = dot(s.dir, s.dir);
      const double t = dot(d, s.dir) / len2;
      if (t >= -1e-12 && t <= 1.0 + 1e-12 && std::abs(cross(s.dir, d)) <= 1e-12 * len2) return s.sigma0 + t * s.flux;
    }
    return std::numeric_limits<double>::quiet_NaN();
  }

private:
  struct Segment {
    int face = -1;
    Vec2 start, dir;
    double flux = 0.0;
    double sigma0 = 0.0;
  };
  const TriMesh2D* mesh_;
  std::vector<Segment> segments_;
  std::map<int, std::size_t> index_;
};

}  // namespace

double error_norm_2d(const Problem2D& problem, std::span<const double> coeffs, double rho) {
  require(problem.mesh != nullptr, ErrorCode::InvalidArgument, "problem has no mesh");
  require(rho >= 1.0 && std::isfinite(rho), ErrorCode::InvalidArgument, "error exponent must lie in [1, inf)");
  const TriMesh2D& mesh = *problem.mesh;
  require(coeffs.size() == mesh.num_triangles(), ErrorCode::InvalidArgument, "one coefficient per triangle expected");
  const InflowChart chart(mesh);
  std::vector<double> sigma_breaks = chart.breaks();
  for (const Vec2& b : problem.inflow_breaks) {
    const double s = chart.locate(b);
    if (std::isfinite(s)) sigma_breaks.push_back(s);
  }
  std::sort(sigma_breaks.begin(), sigma_breaks.end());
  const ScalarFn g = [&](double s) { return problem.inflow(chart.point(s)); };

  const std::array<std::array<double, 3>, 3> probes{{{4.0 / 6, 1.0 / 6, 1.0 / 6},
                                                      {1.0 / 6, 4.0 / 6, 1.0 / 6},
                                                      {1.0 / 6, 1.0 / 6, 4.0 / 6}}};
  double total = 0.0;
  for (int t = 0; t < static_cast<int>(mesh.num_triangles()); ++t) {
    // affine flux coordinate of the characteristic foot on t
    Eigen::Matrix3d A;
    Eigen::Vector3d s;
    for (int i = 0; i < 3; ++i) {
      const Vec2 p = mesh.point(t, probes[i]);
      const CharacteristicFoot foot = trace_to_inflow(mesh, t, p);
      A.row(i) << 1.0, p.x, p.y;
      s[i] = chart.sigma(foot.boundary_face, foot.point);
    }
    const Eigen::Vector3d coef = A.partialPivLu().solve(s);
    std::array<double, 3> sv{};
    for (int i = 0; i < 3; ++i) {
      const Vec2 v = mesh.vertex(mesh.triangle(t)[i]);
      sv[i] = coef[0] + coef[1] * v.x + coef[2] * v.y;
    }
    std::sort(sv.begin(), sv.end());
    const double s0 = sv[0], s1 = sv[1], s2 = sv[2], area = mesh.area(t);
    const double c = coeffs[t];
    if (!(s2 - s0 > 1e-14 * (1.0 + std::abs(s2)))) {
      total += area * std::pow(std::abs(g(0.5 * (s0 + s2)) - c), rho);
      continue;
    }
    auto density = [&](double x) {
      if (x < s1) return s1 > s0 ? 2.0 * area * (x - s0) / ((s2 - s0) * (s1 - s0)) : 0.0;
      return s2 > s1 ? 2.0 * area * (s2 - x) / ((s2 - s0) * (s2 - s1)) : 0.0;
    };
    std::vector<double> cuts{s1};
    for (double b : sigma_breaks)
      if (b > s0 && b < s2) cuts.push_back(b);
    const ScalarFn err = [&](double x) { return g(x) - c; };
    const PointRule rule = error_rule(err, s0, s2, cuts, {}, 8);
    for (std::size_t q = 0; q < rule.x.size(); ++q)
      total += rule.w[q] * density(rule.x[q]) * std::pow(std::abs(g(rule.x[q]) - c), rho);
  }
  return std::pow(total, 1.0 / rho);
}

}  // namespace ddmres
