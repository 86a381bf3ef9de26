#include "ddmres/mesh.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "ddmres/error.hpp"

namespace ddmres {

// ---------------------------------------------------------------------------
// Mesh1D

Mesh1D::Mesh1D(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  require(nodes_.size() >= 2, ErrorCode::InvalidInterval, "a 1-D mesh needs at least two nodes");
  for (std::size_t i = 1; i < nodes_.size(); ++i)
    require(nodes_[i] > nodes_[i - 1], ErrorCode::InvalidInterval,
            "mesh nodes must be strictly increasing (index " + std::to_string(i) + ")");
}

double Mesh1D::max_element_size() const {
  double h = 0.0;
  for (std::size_t e = 0; e < num_elements(); ++e) h = std::max(h, element_size(e));
  return h;
}

std::size_t Mesh1D::locate(double x) const {
  require(contains(x), ErrorCode::OutOfDomain, "point " + std::to_string(x) + " outside mesh");
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
  std::size_t e = static_cast<std::size_t>(it - nodes_.begin());
  e = e == 0 ? 0 : e - 1;
  return std::min(e, num_elements() - 1);
}

Mesh1D uniform_mesh_1d(double a, double b, std::size_t n) {
  require(a < b, ErrorCode::InvalidInterval, "uniform mesh needs a < b");
  require(n >= 1, ErrorCode::InvalidArgument, "uniform mesh needs at least one element");
  std::vector<double> nodes(n + 1);
  for (std::size_t i = 0; i <= n; ++i) nodes[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n);
  nodes.back() = b;
  return Mesh1D(std::move(nodes));
}

Mesh1D refine_uniform_1d(const Mesh1D& mesh, int levels) {
  require(levels >= 0, ErrorCode::InvalidArgument, "refinement level must be >= 0");
  const std::size_t parts = std::size_t{1} << levels;
  std::vector<double> nodes;
  nodes.reserve(mesh.num_elements() * parts + 1);
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const double a = mesh.node(e), b = mesh.node(e + 1);
    for (std::size_t k = 0; k < parts; ++k)
      nodes.push_back(a + (b - a) * static_cast<double>(k) / static_cast<double>(parts));
  }
  nodes.push_back(mesh.right());
  return Mesh1D(std::move(nodes));
}

bool is_nested(const Mesh1D& coarse, const Mesh1D& fine, double tol) {
  for (double x : coarse.nodes()) {
    auto it = std::lower_bound(fine.nodes().begin(), fine.nodes().end(), x - tol);
    if (it == fine.nodes().end() || std::abs(*it - x) > tol) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// TriMesh2D

std::string_view to_string(FaceClass c) noexcept {
  switch (c) {
    case FaceClass::Inflow: return "Inflow";
    case FaceClass::Outflow: return "Outflow";
    case FaceClass::Tangential: return "Tangential";
    case FaceClass::InteriorCrossing: return "InteriorCrossing";
  }
  return "?";
}

TriMesh2D::TriMesh2D(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
                     std::vector<Vec2> element_beta)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)), beta_(std::move(element_beta)) {
  require(!triangles_.empty(), ErrorCode::InvalidArgument, "mesh has no triangles");
  require(beta_.size() == triangles_.size(), ErrorCode::InvalidArgument,
          "one advection vector per triangle is required");
  const int nv = static_cast<int>(vertices_.size());
  areas_.resize(triangles_.size());
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    auto& tri = triangles_[t];
    for (int v : tri)
      require(v >= 0 && v < nv, ErrorCode::InvalidArgument,
              "triangle " + std::to_string(t) + " references a missing vertex");
    double a2 = cross(vertices_[tri[1]] - vertices_[tri[0]], vertices_[tri[2]] - vertices_[tri[0]]);
    if (a2 < 0.0) {
      std::swap(tri[1], tri[2]);
      a2 = -a2;
    }
    const double scale = std::max({norm(vertices_[tri[1]] - vertices_[tri[0]]),
                                   norm(vertices_[tri[2]] - vertices_[tri[0]]), 1e-300});
    require(a2 > 1e-14 * scale * scale, ErrorCode::InvalidArgument,
            "triangle " + std::to_string(t) + " has non-positive area");
    areas_[t] = 0.5 * a2;
  }
  build_faces();
}

void TriMesh2D::build_faces() {
  std::map<std::pair<int, int>, int> index;
  tri_faces_.assign(triangles_.size(), {-1, -1, -1});
  for (int t = 0; t < static_cast<int>(triangles_.size()); ++t) {
    const auto& tri = triangles_[t];
    for (int i = 0; i < 3; ++i) {
      const int a = tri[(i + 1) % 3], b = tri[(i + 2) % 3];
      const auto key = std::minmax(a, b);
      auto [it, inserted] = index.try_emplace({key.first, key.second}, static_cast<int>(faces_.size()));
      if (inserted) {
        Face f;
        f.v = {a, b};
        f.tri = {t, -1};
        f.local = {i, -1};
        const Vec2 d = vertices_[b] - vertices_[a];
        f.length = norm(d);
        f.normal = {d.y / f.length, -d.x / f.length};
        faces_.push_back(f);
      } else {
        Face& f = faces_[it->second];
        require(f.tri[1] < 0, ErrorCode::InvalidArgument, "edge shared by more than two triangles");
        f.tri[1] = t;
        f.local[1] = i;
      }
      tri_faces_[t][i] = it->second;
    }
  }
}

double TriMesh2D::total_area() const {
  double s = 0.0;
  for (double a : areas_) s += a;
  return s;
}

Vec2 TriMesh2D::centroid(int t) const {
  const auto& tri = triangles_[t];
  return (1.0 / 3.0) * (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]);
}

Vec2 TriMesh2D::outward_normal(int t, int i) const {
  const Face& f = faces_[tri_faces_[t][i]];
  return f.tri[0] == t ? f.normal : -1.0 * f.normal;
}

int TriMesh2D::neighbor(int t, int i) const {
  const Face& f = faces_[tri_faces_[t][i]];
  return f.tri[0] == t ? f.tri[1] : f.tri[0];
}

double TriMesh2D::max_edge_length() const {
  double h = 0.0;
  for (const Face& f : faces_) h = std::max(h, f.length);
  return h;
}

FluxSign TriMesh2D::flux_sign(int t, int i) const {
  const Vec2 b = beta_[t];
  const double s = dot(b, outward_normal(t, i));
  if (std::abs(s) <= kZeroFluxTol * norm(b)) return FluxSign::Zero;
  return s < 0.0 ? FluxSign::Negative : FluxSign::Positive;
}

bool TriMesh2D::is_flow_aligned() const {
  for (int t = 0; t < static_cast<int>(triangles_.size()); ++t) {
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < 3; ++i) ++counts[static_cast<int>(flux_sign(t, i)) + 1];
    if (counts[0] != 1 || counts[1] != 1 || counts[2] != 1) return false;
  }
  return true;
}

int TriMesh2D::local_face_with_sign(int t, FluxSign s) const {
  int found = -1;
  for (int i = 0; i < 3; ++i) {
    if (flux_sign(t, i) == s) {
      if (found >= 0) return -1;
      found = i;
    }
  }
  return found;
}

double TriMesh2D::max_normal_flux_jump() const {
  double jump = 0.0;
  for (const Face& f : faces_) {
    if (f.boundary()) continue;
    jump = std::max(jump, std::abs(dot(beta_[f.tri[0]], f.normal) - dot(beta_[f.tri[1]], f.normal)));
  }
  return jump;
}

Vec2 TriMesh2D::point(int t, const std::array<double, 3>& bary) const {
  const auto& tri = triangles_[t];
  return bary[0] * vertices_[tri[0]] + bary[1] * vertices_[tri[1]] + bary[2] * vertices_[tri[2]];
}

int TriMesh2D::locate(Vec2 p, double tol) const {
  for (int t = 0; t < static_cast<int>(triangles_.size()); ++t) {
    const auto& tri = triangles_[t];
    bool inside = true;
    for (int i = 0; i < 3 && inside; ++i) {
      const Vec2 a = vertices_[tri[(i + 1) % 3]], b = vertices_[tri[(i + 2) % 3]];
      inside = cross(b - a, p - a) >= -tol * norm(b - a);
    }
    if (inside) return t;
  }
  return -1;
}

TriMesh2D red_refine_2d(const TriMesh2D& mesh) {
  std::vector<Vec2> vertices(mesh.vertices().begin(), mesh.vertices().end());
  std::vector<int> midpoint(mesh.num_faces());
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const Face& face = mesh.face(static_cast<int>(f));
    midpoint[f] = static_cast<int>(vertices.size());
    vertices.push_back(0.5 * (mesh.vertex(face.v[0]) + mesh.vertex(face.v[1])));
  }
  std::vector<std::array<int, 3>> tris;
  std::vector<Vec2> beta;
  tris.reserve(4 * mesh.num_triangles());
  beta.reserve(4 * mesh.num_triangles());
  for (int t = 0; t < static_cast<int>(mesh.num_triangles()); ++t) {
    const auto& v = mesh.triangle(t);
    // m[i] is the midpoint of the face opposite vertex i
    const int m0 = midpoint[mesh.triangle_face(t, 0)];
    const int m1 = midpoint[mesh.triangle_face(t, 1)];
    const int m2 = midpoint[mesh.triangle_face(t, 2)];
    tris.push_back({v[0], m2, m1});
    tris.push_back({m2, v[1], m0});
    tris.push_back({m1, m0, v[2]});
    tris.push_back({m0, m1, m2});
    for (int k = 0; k < 4; ++k) beta.push_back(mesh.beta(t));
  }
  return TriMesh2D(std::move(vertices), std::move(tris), std::move(beta));
}

std::vector<FaceClass> classify_faces(const TriMesh2D& mesh) {
  std::vector<FaceClass> tags(mesh.num_faces());
  for (int f = 0; f < static_cast<int>(mesh.num_faces()); ++f) {
    const Face& face = mesh.face(f);
    bool zero = true;
    double sign = 0.0;
    for (int side = 0; side < 2; ++side) {
      const int t = face.tri[side];
      if (t < 0) continue;
      const Vec2 b = mesh.beta(t);
      const double s = dot(b, mesh.outward_normal(t, face.local[side]));
      const double mag = norm(b);
      if (std::abs(s) > TriMesh2D::kZeroFluxTol * mag && std::abs(s) <= TriMesh2D::kAmbiguousFluxTol * mag)
        fail(ErrorCode::AmbiguousFace, "face " + std::to_string(f) + " has |beta.n| = " + std::to_string(std::abs(s)) +
                                           " inside the ambiguity band");
      if (std::abs(s) > TriMesh2D::kZeroFluxTol * mag) zero = false;
      if (side == 0) sign = s;
    }
    if (zero)
      tags[f] = FaceClass::Tangential;
    else if (face.boundary())
      tags[f] = sign < 0.0 ? FaceClass::Inflow : FaceClass::Outflow;
    else
      tags[f] = FaceClass::InteriorCrossing;
  }
  return tags;
}

FlowOrder flow_order(const TriMesh2D& mesh) {
  require(mesh.is_flow_aligned(), ErrorCode::InvalidArgument, "flow order needs a flow-aligned mesh");
  const int n = static_cast<int>(mesh.num_triangles());
  FlowOrder result;
  result.downstream.assign(n, -1);
  std::vector<std::vector<int>> upstream(n);
  for (int t = 0; t < n; ++t) {
    const int out = mesh.local_face_with_sign(t, FluxSign::Positive);
    const int d = mesh.neighbor(t, out);
    result.downstream[t] = d;
    if (d >= 0) upstream[d].push_back(t);
  }
  std::deque<int> ready;
  for (int t = 0; t < n; ++t)
    if (result.downstream[t] < 0) ready.push_back(t);
  result.order.reserve(n);
  while (!ready.empty()) {
    const int t = ready.front();
    ready.pop_front();
    result.order.push_back(t);
    for (int u : upstream[t]) ready.push_back(u);
  }
  if (static_cast<int>(result.order.size()) != n)
    fail(ErrorCode::CycleDetected, std::to_string(n - result.order.size()) +
                                       " triangles lie on or behind a closed downstream loop");
  return result;
}

MeshReport check_mesh(const TriMesh2D& mesh, bool require_flow_aligned) {
  MeshReport r;
  r.num_triangles = mesh.num_triangles();
  r.total_area = mesh.total_area();
  for (int t = 0; t < static_cast<int>(mesh.num_triangles()); ++t)
    if (!(mesh.area(t) > 0.0)) r.positive_areas = false;
  if (!r.positive_areas) r.problems.push_back("non-positive triangle area");
  r.max_flux_jump = mesh.max_normal_flux_jump();
  r.flux_continuous = r.max_flux_jump <= 1e-12;
  if (!r.flux_continuous) r.problems.push_back("normal flux jump " + std::to_string(r.max_flux_jump) + " > 1e-12");
  try {
    (void)classify_faces(mesh);
  } catch (const Error& e) {
    r.problems.push_back(e.what());
  }
  r.flow_aligned = mesh.is_flow_aligned();
  if (require_flow_aligned && !r.flow_aligned) r.problems.push_back("mesh is not flow-aligned");
  if (r.flow_aligned) {
    try {
      (void)flow_order(mesh);
      r.has_order = true;
    } catch (const Error& e) {
      r.problems.push_back(e.what());
    }
  }
  return r;
}

namespace {

// Uniform double in [0, 1) from the top 53 bits; mt19937_64 output is fixed by the standard.
double unit_draw(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

Vec2 stream_function_advection(Vec2 p0, Vec2 p1, Vec2 p2, double s0, double s1, double s2) {
  // grad psi from the two edge equations, beta = (-psi_y, psi_x)
  const Vec2 e1 = p1 - p0, e2 = p2 - p0;
  const double det = cross(e1, e2);
  const double d1 = s1 - s0, d2 = s2 - s0;
  const double gx = (d1 * e2.y - d2 * e1.y) / det;
  const double gy = (e1.x * d2 - e2.x * d1) / det;
  return {-gy, gx};
}

}  // namespace

TriMesh2D flow_aligned_channel(int strips, int rows, std::uint64_t seed, double width, double height) {
  require(strips >= 1 && rows >= 1, ErrorCode::InvalidArgument, "channel mesh needs strips, rows >= 1");
  require(width > 0.0 && height > 0.0, ErrorCode::InvalidArgument, "channel mesh needs a positive extent");
  std::mt19937_64 gen(seed);
  const int nx = strips + 1;
  std::vector<Vec2> vertices;
  std::vector<double> psi;
  vertices.reserve(static_cast<std::size_t>(nx) * (rows + 1));
  for (int j = 0; j <= rows; ++j) {
    const double y = height * j / rows;
    std::vector<double> widths(strips, width / strips);
    if (j > 0 && j < rows) {
      double inv_sum = 0.0;
      for (int i = 0; i < strips; ++i) {
        const double vertical = 0.5 + unit_draw(gen);
        widths[i] = 1.0 / vertical;
        inv_sum += widths[i];
      }
      for (double& w : widths) w *= width / inv_sum;
    }
    double x = 0.0;
    for (int i = 0; i <= strips; ++i) {
      const double xi = i == strips ? width : x;
      vertices.push_back({xi, y});
      psi.push_back(width * i / strips);
      if (i < strips) x += widths[i];
    }
  }
  std::vector<std::array<int, 3>> tris;
  std::vector<Vec2> beta;
  auto id = [nx](int i, int j) { return j * nx + i; };
  for (int j = 0; j < rows; ++j) {
    for (int i = 0; i < strips; ++i) {
      const int l0 = id(i, j), r0 = id(i + 1, j), l1 = id(i, j + 1), r1 = id(i + 1, j + 1);
      for (const std::array<int, 3>& t : {std::array<int, 3>{l0, r0, r1}, std::array<int, 3>{l0, r1, l1}}) {
        tris.push_back(t);
        beta.push_back(stream_function_advection(vertices[t[0]], vertices[t[1]], vertices[t[2]], psi[t[0]],
                                                 psi[t[1]], psi[t[2]]));
      }
    }
  }
  return TriMesh2D(std::move(vertices), std::move(tris), std::move(beta));
}

CharacteristicFoot trace_to_inflow(const TriMesh2D& mesh, int t, Vec2 p) {
  CharacteristicFoot foot;
  const int max_segments = static_cast<int>(mesh.num_triangles()) + 1;
  while (true) {
    require(foot.segments <= max_segments, ErrorCode::CycleDetected, "characteristic does not reach the inflow boundary");
    const int in = mesh.local_face_with_sign(t, FluxSign::Negative);
    require(in >= 0, ErrorCode::InvalidArgument, "triangle " + std::to_string(t) + " has no unique inflow face");
    const Face& f = mesh.face(mesh.triangle_face(t, in));
    const Vec2 a = mesh.vertex(f.v[0]), b = mesh.vertex(f.v[1]);
    const Vec2 beta = mesh.beta(t);
    // p - s beta = a + r (b - a)
    const Vec2 ab = b - a;
    const double det = cross(ab, beta);
    double r = cross(p - a, beta) / det;
    r = std::clamp(r, 0.0, 1.0);
    p = a + r * ab;
    ++foot.segments;
    const int next = mesh.neighbor(t, in);
    if (next < 0) {
      foot.point = p;
      foot.boundary_face = mesh.triangle_face(t, in);
      return foot;
    }
    t = next;
  }
}

void write_mesh(std::ostream& out, const TriMesh2D& mesh) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(17);
  out << mesh.num_vertices() << ' ' << mesh.num_triangles() << '\n';
  for (const Vec2& v : mesh.vertices()) out << v.x << ' ' << v.y << '\n';
  for (int t = 0; t < static_cast<int>(mesh.num_triangles()); ++t) {
    const auto& tri = mesh.triangle(t);
    out << tri[0] << ' ' << tri[1] << ' ' << tri[2] << ' ' << mesh.beta(t).x << ' ' << mesh.beta(t).y << '\n';
  }
  out.flags(flags);
  out.precision(prec);
}

TriMesh2D read_mesh(std::istream& in) {
  std::size_t nv = 0, nt = 0;
  require(static_cast<bool>(in >> nv >> nt), ErrorCode::Io, "missing `NV NT` header");
  std::vector<Vec2> vertices(nv);
  for (std::size_t i = 0; i < nv; ++i)
    require(static_cast<bool>(in >> vertices[i].x >> vertices[i].y), ErrorCode::Io,
            "truncated vertex list at vertex " + std::to_string(i));
  std::vector<std::array<int, 3>> tris(nt);
  std::vector<Vec2> beta(nt);
  for (std::size_t t = 0; t < nt; ++t)
    require(static_cast<bool>(in >> tris[t][0] >> tris[t][1] >> tris[t][2] >> beta[t].x >> beta[t].y), ErrorCode::Io,
            "truncated triangle list at triangle " + std::to_string(t));
  return TriMesh2D(std::move(vertices), std::move(tris), std::move(beta));
}

void save_mesh(const std::string& path, const TriMesh2D& mesh) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + path + " for writing");
  write_mesh(out, mesh);
}

TriMesh2D load_mesh(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path);
  return read_mesh(in);
}

}  // namespace ddmres
