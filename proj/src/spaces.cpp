#include "ddmres/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ddmres/error.hpp"

namespace ddmres {

std::string_view to_string(SpaceKind k) noexcept {
  switch (k) {
    case SpaceKind::P0: return "P0";
    case SpaceKind::P1Cont1D: return "P1Cont1D";
    case SpaceKind::PkCont1D: return "PkCont1D";
    case SpaceKind::RefinedP1: return "RefinedP1";
    case SpaceKind::OptimalTest1D: return "OptimalTest1D";
    case SpaceKind::P0_2D: return "P0_2D";
    case SpaceKind::P1Conf2D: return "P1Conf2D";
  }
  return "?";
}

double Space1D::value(std::size_t dof, double x) const {
  require(dof < dof_count(), ErrorCode::InvalidArgument, "dof index out of range");
  require(mesh().contains(x), ErrorCode::OutOfDomain, "evaluation point " + std::to_string(x) + " outside the mesh");
  LocalBasis lb;
  const double pt[1] = {x};
  local(mesh().locate(x), pt, lb);
  for (std::size_t j = 0; j < lb.dofs.size(); ++j)
    if (lb.dofs[j] == static_cast<int>(dof)) return lb.values(0, j);
  return 0.0;
}

double Space1D::derivative(std::size_t dof, double x) const {
  require(dof < dof_count(), ErrorCode::InvalidArgument, "dof index out of range");
  require(mesh().contains(x), ErrorCode::OutOfDomain, "evaluation point " + std::to_string(x) + " outside the mesh");
  LocalBasis lb;
  const double pt[1] = {x};
  local(mesh().locate(x), pt, lb);
  for (std::size_t j = 0; j < lb.dofs.size(); ++j)
    if (lb.dofs[j] == static_cast<int>(dof)) return lb.derivs(0, j);
  return 0.0;
}

double Space1D::evaluate(std::span<const double> coeffs, double x) const {
  require(coeffs.size() == dof_count(), ErrorCode::InvalidArgument, "coefficient vector has the wrong length");
  require(mesh().contains(x), ErrorCode::OutOfDomain, "evaluation point " + std::to_string(x) + " outside the mesh");
  LocalBasis lb;
  const double pt[1] = {x};
  local(mesh().locate(x), pt, lb);
  double s = 0.0;
  for (std::size_t j = 0; j < lb.dofs.size(); ++j) s += coeffs[lb.dofs[j]] * lb.values(0, j);
  return s;
}

void lagrange_eval(std::span<const double> nodes, double x, std::span<double> values, std::span<double> derivs) {
  const std::size_t n = nodes.size();
  for (std::size_t j = 0; j < n; ++j) {
    double l = 1.0, dl = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      if (m == j) continue;
      const double denom = nodes[j] - nodes[m];
      dl = dl * (x - nodes[m]) / denom + l / denom;
      l *= (x - nodes[m]) / denom;
    }
    values[j] = l;
    derivs[j] = dl;
  }
}

// ---------------------------------------------------------------------------
// PolySpace1D

PolySpace1D::PolySpace1D(SpaceKind kind, Mesh1D mesh, int k, EndpointConstraint c, int level)
    : kind_(kind), mesh_(std::move(mesh)), k_(k), constraint_(c), level_(level) {
  if (k_ == 0) {
    require(!c.left && !c.right, ErrorCode::InvalidArgument, "P0 functions cannot carry endpoint constraints");
    dof_count_ = mesh_.num_elements();
    return;
  }
  require(k_ >= 1, ErrorCode::InvalidArgument, "polynomial degree must be >= 0");
  ref_nodes_ = gauss_lobatto(k_ + 1).points;
  const std::size_t nodes = static_cast<std::size_t>(k_) * mesh_.num_elements() + 1;
  node_to_dof_.assign(nodes, -1);
  for (std::size_t i = 0; i < nodes; ++i) {
    if ((i == 0 && c.left) || (i + 1 == nodes && c.right)) continue;
    node_to_dof_[i] = static_cast<int>(dof_to_node_.size());
    dof_to_node_.push_back(static_cast<int>(i));
  }
  dof_count_ = dof_to_node_.size();
  require(dof_count_ > 0, ErrorCode::InvalidArgument, "space has no free dofs");
}

PolySpace1D PolySpace1D::p0(Mesh1D mesh) { return PolySpace1D(SpaceKind::P0, std::move(mesh), 0, {}, 0); }

PolySpace1D PolySpace1D::p1(Mesh1D mesh, EndpointConstraint c) {
  return PolySpace1D(SpaceKind::P1Cont1D, std::move(mesh), 1, c, 0);
}

PolySpace1D PolySpace1D::pk(Mesh1D mesh, int k, EndpointConstraint c) {
  require(k >= 1, ErrorCode::InvalidArgument, "continuous spaces need degree >= 1");
  return PolySpace1D(k == 1 ? SpaceKind::P1Cont1D : SpaceKind::PkCont1D, std::move(mesh), k, c, 0);
}

PolySpace1D PolySpace1D::refined_p1(const Mesh1D& mesh, int level, EndpointConstraint c) {
  return PolySpace1D(SpaceKind::RefinedP1, refine_uniform_1d(mesh, level), 1, c, level);
}

std::string PolySpace1D::name() const {
  switch (kind_) {
    case SpaceKind::P0: return "P0";
    case SpaceKind::P1Cont1D: return "P1";
    case SpaceKind::RefinedP1: return "RefinedP1(l=" + std::to_string(level_) + ")";
    default: return "P" + std::to_string(k_);
  }
}

double PolySpace1D::dof_point(std::size_t d) const {
  require(d < dof_count_, ErrorCode::InvalidArgument, "dof index out of range");
  if (k_ == 0) return 0.5 * (mesh_.node(d) + mesh_.node(d + 1));
  const std::size_t node = static_cast<std::size_t>(dof_to_node_[d]);
  std::size_t e = node / k_, j = node % k_;
  if (e == mesh_.num_elements()) {
    --e;
    j = k_;
  }
  return mesh_.node(e) + 0.5 * (1.0 + ref_nodes_[j]) * mesh_.element_size(e);
}

void PolySpace1D::local(std::size_t e, std::span<const double> pts, LocalBasis& out) const {
  const std::size_t np = pts.size();
  out.dofs.clear();
  if (k_ == 0) {
    out.dofs.push_back(static_cast<int>(e));
    out.values.setOnes(np, 1);
    out.derivs.setZero(np, 1);
    return;
  }
  const double a = mesh_.node(e), h = mesh_.element_size(e);
  std::vector<int> cols;
  for (int j = 0; j <= k_; ++j) {
    const int d = node_to_dof_[e * k_ + j];
    if (d >= 0) {
      out.dofs.push_back(d);
      cols.push_back(j);
    }
  }
  out.values.resize(np, cols.size());
  out.derivs.resize(np, cols.size());
  std::vector<double> v(k_ + 1), dv(k_ + 1);
  for (std::size_t i = 0; i < np; ++i) {
    const double xi = 2.0 * (pts[i] - a) / h - 1.0;
    lagrange_eval(ref_nodes_, xi, v, dv);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      out.values(i, c) = v[cols[c]];
      out.derivs(i, c) = dv[cols[c]] * 2.0 / h;
    }
  }
}

const Mesh1D& common_refinement(const Space1D& a, const Space1D& b) {
  const Mesh1D& ma = a.mesh();
  const Mesh1D& mb = b.mesh();
  const Mesh1D& fine = ma.num_elements() >= mb.num_elements() ? ma : mb;
  const Mesh1D& coarse = &fine == &ma ? mb : ma;
  const double tol = 1e-12 * (fine.right() - fine.left());
  require(std::abs(fine.left() - coarse.left()) <= tol && std::abs(fine.right() - coarse.right()) <= tol,
          ErrorCode::InvalidArgument, "spaces live on different intervals");
  require(is_nested(coarse, fine, tol), ErrorCode::InvalidArgument, "trial and test meshes are not nested");
  return fine;
}

// ---------------------------------------------------------------------------
// P1ConfSpace2D

Vec2 linear_gradient(const TriMesh2D& mesh, int t, const std::array<double, 3>& values) {
  const auto& tri = mesh.triangle(t);
  const double two_area = 2.0 * mesh.area(t);
  Vec2 g{0.0, 0.0};
  for (int i = 0; i < 3; ++i) {
    const Vec2 a = mesh.vertex(tri[(i + 2) % 3]) - mesh.vertex(tri[(i + 1) % 3]);
    g = g + (values[i] / two_area) * Vec2{-a.y, a.x};
  }
  return g;
}

P1ConfSpace2D::P1ConfSpace2D(const TriMesh2D& mesh, std::vector<std::vector<Piece>> by_basis)
    : mesh_(&mesh), by_basis_(std::move(by_basis)), by_element_(mesh.num_triangles()) {
  for (std::size_t d = 0; d < by_basis_.size(); ++d)
    for (const Piece& p : by_basis_[d]) {
      require(p.element >= 0 && p.element < static_cast<int>(mesh.num_triangles()), ErrorCode::InvalidArgument,
              "basis piece on a missing triangle");
      by_element_[p.element].push_back({static_cast<int>(d), p.values});
    }
}

std::size_t P1ConfSpace2D::nonzeros() const noexcept {
  std::size_t n = 0;
  for (const auto& b : by_basis_) n += b.size();
  return n;
}

double P1ConfSpace2D::value(std::size_t dof, int t, const std::array<double, 3>& bary) const {
  for (const Entry& e : by_element_[t])
    if (e.dof == static_cast<int>(dof))
      return bary[0] * e.values[0] + bary[1] * e.values[1] + bary[2] * e.values[2];
  return 0.0;
}

Vec2 P1ConfSpace2D::gradient(std::size_t dof, int t) const {
  for (const Entry& e : by_element_[t])
    if (e.dof == static_cast<int>(dof)) return linear_gradient(*mesh_, t, e.values);
  return {0.0, 0.0};
}

namespace {

// Value of each basis function of triangle t at global vertex v.
std::map<int, double> vertex_values(const P1ConfSpace2D& s, int t, int v) {
  std::map<int, double> out;
  const auto& tri = s.mesh().triangle(t);
  const int local = static_cast<int>(std::find(tri.begin(), tri.end(), v) - tri.begin());
  for (const auto& e : s.on_element(t)) out[e.dof] = e.values[local];
  return out;
}

}  // namespace

double P1ConfSpace2D::max_trace_jump(FaceClass cls) const {
  const auto tags = classify_faces(*mesh_);
  double jump = 0.0;
  for (std::size_t f = 0; f < mesh_->num_faces(); ++f) {
    const Face& face = mesh_->face(static_cast<int>(f));
    if (face.boundary() || tags[f] != cls) continue;
    for (int v : face.v) {
      auto left = vertex_values(*this, face.tri[0], v);
      auto right = vertex_values(*this, face.tri[1], v);
      for (const auto& [d, val] : left) {
        auto it = right.find(d);
        jump = std::max(jump, std::abs(val - (it == right.end() ? 0.0 : it->second)));
      }
      for (const auto& [d, val] : right)
        if (!left.count(d)) jump = std::max(jump, std::abs(val));
    }
  }
  return jump;
}

double P1ConfSpace2D::max_outflow_trace() const {
  const auto tags = classify_faces(*mesh_);
  double m = 0.0;
  for (std::size_t f = 0; f < mesh_->num_faces(); ++f) {
    if (tags[f] != FaceClass::Outflow) continue;
    const Face& face = mesh_->face(static_cast<int>(f));
    for (int v : face.v)
      for (const auto& [d, val] : vertex_values(*this, face.tri[0], v)) m = std::max(m, std::abs(val));
  }
  return m;
}

// ---------------------------------------------------------------------------
// FortinOperator1D

FortinOperator1D::FortinOperator1D(Mesh1D mesh, int k) : mesh_(std::move(mesh)), k_(k) {
  require(k >= 2, ErrorCode::DegreeTooLow, "the bubble correction needs test degree k >= 2, got " + std::to_string(k));
}

double FortinOperator1D::boundedness_constant(double q) { return 6.0 / std::pow(q + 1.0, 1.0 / q); }

std::vector<double> FortinOperator1D::bubble_coefficients(const ScalarFn& v, int gauss_points) const {
  std::vector<double> alpha(mesh_.num_elements());
  for (std::size_t e = 0; e < mesh_.num_elements(); ++e) {
    const double a = mesh_.node(e), b = mesh_.node(e + 1), h = b - a;
    double mean = 0.0;
    if (gauss_points > 0) {
      const Rule1D& r = gauss_legendre(gauss_points);
      for (std::size_t i = 0; i < r.size(); ++i) mean += r.weights[i] * v(0.5 * (a + b) + 0.5 * h * r.points[i]);
      mean *= 0.5 * h;
    } else {
      mean = integrate_adaptive(v, a, b);
    }
    const double linear = 0.5 * h * (v(a) + v(b));
    alpha[e] = (mean - linear) / (-h * h * h / 6.0);
  }
  return alpha;
}

Eigen::VectorXd FortinOperator1D::apply(const ScalarFn& v, const PolySpace1D& target, int gauss_points) const {
  require(target.degree() == k_ && target.mesh() == mesh_, ErrorCode::InvalidArgument,
          "target space must be continuous degree k on the operator's mesh");
  const auto alpha = bubble_coefficients(v, gauss_points);
  const auto ref = target.reference_nodes();
  const auto node_to_dof = target.node_to_dof();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(target.dof_count()));
  for (std::size_t e = 0; e < mesh_.num_elements(); ++e) {
    const double a = mesh_.node(e), b = mesh_.node(e + 1), h = b - a;
    const double va = v(a), vb = v(b);
    for (int j = 0; j <= k_; ++j) {
      const int d = node_to_dof[e * k_ + j];
      if (d < 0) continue;
      const double x = j == 0 ? a : (j == k_ ? b : a + 0.5 * (1.0 + ref[j]) * h);
      const double lin = va + (vb - va) * (x - a) / h;
      c[d] = lin + alpha[e] * (x - a) * (x - b);
    }
  }
  return c;
}

}  // namespace ddmres
