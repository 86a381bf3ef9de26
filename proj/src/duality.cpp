#include "ddmres/duality.hpp"

#include <algorithm>
#include <cmath>

#include "ddmres/error.hpp"

namespace ddmres {

namespace {

constexpr double kTiny = 1e-300;

struct PieceState {
  double scale = 0.0;  // max_i sqrt(v_i^2 + eps^2)
  double norm = 0.0;   // regularised L^q norm
};

PieceState piece_state(std::span<const double> v, std::span<const double> w, double q, double eps) {
  PieceState st;
  for (double x : v) st.scale = std::max(st.scale, std::hypot(x, eps));
  if (st.scale == 0.0) return st;
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) sum += w[i] * std::pow(std::hypot(v[i], eps) / st.scale, q);
  st.norm = st.scale * std::pow(sum, 1.0 / q);
  return st;
}

}  // namespace

double lq_norm(std::span<const double> v, std::span<const double> w, double q, double epsilon) {
  require(v.size() == w.size(), ErrorCode::InvalidArgument, "values and weights differ in length");
  require(q > 1.0 && std::isfinite(q), ErrorCode::InvalidArgument, "exponent must lie in (1, inf)");
  return piece_state(v, w, q, epsilon).norm;
}

std::vector<double> jq_value(std::span<const double> v, std::span<const double> w, double q, double epsilon) {
  require(v.size() == w.size(), ErrorCode::InvalidArgument, "values and weights differ in length");
  require(q > 1.0 && std::isfinite(q), ErrorCode::InvalidArgument, "exponent must lie in (1, inf)");
  require(epsilon >= 0.0, ErrorCode::InvalidArgument, "regularisation must be >= 0");
  const PieceState st = piece_state(v, w, q, epsilon);
  std::vector<double> out(v.size(), 0.0);
  if (st.scale == 0.0) return out;
  require(st.norm > 0.0 && std::isfinite(st.norm), ErrorCode::SingularNormalization,
          "L^q norm of a nonzero function is not representable");
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::pow(std::hypot(v[i], epsilon) / st.norm, q - 2.0) * v[i];
  return out;
}

// ---------------------------------------------------------------------------

TestNormMap::TestNormMap(const Sampler& sampler, double q) : sampler_(&sampler), q_(q) {
  require(q > 1.0 && std::isfinite(q), ErrorCode::InvalidArgument, "exponent must lie in (1, inf)");
  if (sampler.norm == TestNormKind::AdjointGraph) pieces_.push_back(&sampler.V);
  pieces_.push_back(&sampler.D);
  eps_.assign(pieces_.size(), 0.0);
}

void TestNormMap::set_epsilon(std::vector<double> eps) {
  require(eps.size() == pieces_.size(), ErrorCode::InvalidArgument, "one regularisation value per norm piece");
  for (double e : eps) require(e >= 0.0, ErrorCode::InvalidArgument, "regularisation must be >= 0");
  eps_ = std::move(eps);
}

void TestNormMap::set_relative_epsilon(const Eigen::VectorXd& r, double eps_rel) {
  for (std::size_t k = 0; k < pieces_.size(); ++k) {
    const Eigen::VectorXd y = *pieces_[k] * r;
    eps_[k] = eps_rel * std::max(y.lpNorm<Eigen::Infinity>(), 1e-30);
  }
}

double TestNormMap::potential(const Eigen::VectorXd& r) const {
  double s = 0.0;
  const auto w = std::span<const double>(sampler_->w.data(), static_cast<std::size_t>(sampler_->w.size()));
  for (std::size_t k = 0; k < pieces_.size(); ++k) {
    const Eigen::VectorXd y = *pieces_[k] * r;
    const double n = piece_state({y.data(), static_cast<std::size_t>(y.size())}, w, q_, eps_[k]).norm;
    s += 0.5 * n * n;
  }
  return s;
}

double TestNormMap::norm(const Eigen::VectorXd& r) const { return std::sqrt(2.0 * potential(r)); }

Eigen::VectorXd TestNormMap::apply(const Eigen::VectorXd& r) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dofs());
  const auto w = std::span<const double>(sampler_->w.data(), static_cast<std::size_t>(sampler_->w.size()));
  for (std::size_t k = 0; k < pieces_.size(); ++k) {
    const Eigen::VectorXd y = *pieces_[k] * r;
    const auto j = jq_value({y.data(), static_cast<std::size_t>(y.size())}, w, q_, eps_[k]);
    const Eigen::VectorXd wj = sampler_->w.cwiseProduct(Eigen::Map<const Eigen::VectorXd>(j.data(), y.size()));
    g += pieces_[k]->transpose() * wj;
  }
  return g;
}

TestNormMap::Hessian TestNormMap::hessian(const Eigen::VectorXd& r, bool full) const {
  Hessian h;
  const Eigen::Index m = dofs();
  h.K0.resize(m, m);
  std::vector<Eigen::VectorXd> cols;
  std::vector<double> sig;
  const auto w = std::span<const double>(sampler_->w.data(), static_cast<std::size_t>(sampler_->w.size()));
  for (std::size_t k = 0; k < pieces_.size(); ++k) {
    const RowSparseMatrix& P = *pieces_[k];
    const Eigen::VectorXd y = P * r;
    const double eps = eps_[k];
    const PieceState st = piece_state({y.data(), static_cast<std::size_t>(y.size())}, w, q_, eps);
    Eigen::VectorXd d(y.size());
    Eigen::VectorXd g(y.size());
    if (st.scale == 0.0) {
      // J_q is linear only at q = 2; elsewhere the zero piece adds no curvature
      d.setConstant(q_ == 2.0 ? 1.0 : 0.0);
      g.setZero();
    } else {
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double s = std::hypot(y[i], eps);
        const double t = std::pow(s / st.norm, q_ - 2.0);
        const double a = s > 0.0 ? ((q_ - 1.0) * y[i] * y[i] + eps * eps) / (s * s) : 1.0;
        d[i] = t * a;
        g[i] = t * y[i];
      }
    }
    d = d.cwiseProduct(sampler_->w);
    h.K0 += SparseMatrix(P.transpose() * d.asDiagonal() * P);
    if (full && q_ != 2.0 && st.norm > 0.0) {
      cols.push_back(P.transpose() * sampler_->w.cwiseProduct(g));
      sig.push_back((q_ - 2.0) / (st.norm * st.norm));
    }
  }
  h.U.resize(m, static_cast<Eigen::Index>(cols.size()));
  h.sigma.resize(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    h.U.col(static_cast<Eigen::Index>(c)) = cols[c];
    h.sigma[static_cast<Eigen::Index>(c)] = sig[c];
  }
  return h;
}

Eigen::MatrixXd TestNormMap::Hessian::dense() const {
  Eigen::MatrixXd H = Eigen::MatrixXd(K0);
  if (U.cols() > 0) H -= U * sigma.asDiagonal() * U.transpose();
  return H;
}

SparseMatrix TestNormMap::gram() const {
  SparseMatrix G(dofs(), dofs());
  for (const RowSparseMatrix* P : pieces_) G += SparseMatrix(P->transpose() * sampler_->w.asDiagonal() * *P);
  return G;
}

// ---------------------------------------------------------------------------

namespace {

TestNormMap make_map(const Sampler& sampler, const DualityMapConfig& config) {
  require(sampler.norm == config.norm, ErrorCode::InvalidArgument, "sampler and duality map use different norms");
  TestNormMap map(sampler, config.q);
  map.set_epsilon(std::vector<double>(map.pieces(), config.epsilon));
  return map;
}

}  // namespace

double jv_residual_form(const Eigen::VectorXd& r, Eigen::Index v, const Sampler& sampler,
                        const DualityMapConfig& config) {
  require(config.norm == TestNormKind::AdjointGraph, ErrorCode::InvalidArgument, "form needs the adjoint graph norm");
  require(v >= 0 && v < sampler.dofs(), ErrorCode::InvalidArgument, "test index out of range");
  return make_map(sampler, config).apply(r)[v];
}

double jv_1d_form(const Eigen::VectorXd& r, Eigen::Index v, const Sampler& sampler, const DualityMapConfig& config) {
  require(config.norm == TestNormKind::DerivativeOnly, ErrorCode::InvalidArgument, "form needs the derivative norm");
  require(v >= 0 && v < sampler.dofs(), ErrorCode::InvalidArgument, "test index out of range");
  return make_map(sampler, config).apply(r)[v];
}

Eigen::MatrixXd jv_jacobian(const Eigen::VectorXd& r, const Sampler& sampler, const DualityMapConfig& config) {
  return make_map(sampler, config).hessian(r, true).dense();
}

}  // namespace ddmres
