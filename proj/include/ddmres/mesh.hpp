#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ddmres {

// ---------------------------------------------------------------------------
// 1-D partitions
// ---------------------------------------------------------------------------

/// Partition x_0 < x_1 < ... < x_n of an interval.
class Mesh1D {
public:
  explicit Mesh1D(std::vector<double> nodes);

  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  std::size_t num_elements() const noexcept { return nodes_.size() - 1; }
  std::span<const double> nodes() const noexcept { return nodes_; }
  double node(std::size_t i) const { return nodes_[i]; }
  double left() const noexcept { return nodes_.front(); }
  double right() const noexcept { return nodes_.back(); }
  double element_size(std::size_t e) const { return nodes_[e + 1] - nodes_[e]; }
  double max_element_size() const;

  /// Element containing x; points on an interior node belong to the element on
  /// their right, the right end belongs to the last element.
  std::size_t locate(double x) const;
  bool contains(double x) const noexcept { return x >= left() && x <= right(); }

  bool operator==(const Mesh1D& other) const = default;

private:
  std::vector<double> nodes_;
};

Mesh1D uniform_mesh_1d(double a, double b, std::size_t n);

/// Bisects every element `levels` times.
Mesh1D refine_uniform_1d(const Mesh1D& mesh, int levels);

/// True when every node of `coarse` is a node of `fine`.
bool is_nested(const Mesh1D& coarse, const Mesh1D& fine, double tol = 1e-13);

// ---------------------------------------------------------------------------
// 2-D triangulations with piecewise-constant advection
// ---------------------------------------------------------------------------

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Edge record. `normal` is the unit normal pointing out of `tri[0]`.
struct Face {
  std::array<int, 2> v{};
  std::array<int, 2> tri{-1, -1};
  std::array<int, 2> local{-1, -1};  ///< local face index inside each triangle
  Vec2 normal;
  double length = 0.0;

  bool boundary() const noexcept { return tri[1] < 0; }
};

enum class FaceClass : std::uint8_t { Inflow, Outflow, Tangential, InteriorCrossing };

std::string_view to_string(FaceClass c) noexcept;

/// Sign of beta . n on a face, relative to |beta|.
enum class FluxSign : std::int8_t { Negative = -1, Zero = 0, Positive = 1 };

/// Triangulation with one constant advection vector per triangle.
///
/// Local face i of a triangle is opposite local vertex i. Triangles are
/// stored counter-clockwise; clockwise input is reoriented.
class TriMesh2D {
public:
  /// Relative tolerance for beta . n = 0.
  static constexpr double kZeroFluxTol = 1e-12;
  /// Between kZeroFluxTol and this bound a face is neither clearly tangential
  /// nor clearly crossing.
  static constexpr double kAmbiguousFluxTol = 1e-9;

  TriMesh2D(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
            std::vector<Vec2> element_beta);

  std::size_t num_vertices() const noexcept { return vertices_.size(); }
  std::size_t num_triangles() const noexcept { return triangles_.size(); }
  std::size_t num_faces() const noexcept { return faces_.size(); }

  std::span<const Vec2> vertices() const noexcept { return vertices_; }
  std::span<const std::array<int, 3>> triangles() const noexcept { return triangles_; }
  std::span<const Face> faces() const noexcept { return faces_; }
  std::span<const Vec2> element_beta() const noexcept { return beta_; }

  Vec2 vertex(int i) const { return vertices_[i]; }
  const std::array<int, 3>& triangle(int t) const { return triangles_[t]; }
  Vec2 beta(int t) const { return beta_[t]; }
  const Face& face(int f) const { return faces_[f]; }
  /// Face index of local face i of triangle t.
  int triangle_face(int t, int i) const { return tri_faces_[t][i]; }
  double area(int t) const { return areas_[t]; }
  double total_area() const;
  Vec2 centroid(int t) const;
  /// Outward unit normal of local face i of triangle t.
  Vec2 outward_normal(int t, int i) const;
  /// Neighbour across local face i, or -1 on the boundary.
  int neighbor(int t, int i) const;
  /// Longest edge in the mesh.
  double max_edge_length() const;

  /// Sign of beta_t . n_t on local face i with the zero band kZeroFluxTol.
  FluxSign flux_sign(int t, int i) const;

  /// Exactly one tangential, one inflow and one outflow face per triangle.
  bool is_flow_aligned() const;

  /// Local index of the unique face with the given sign, or -1.
  int local_face_with_sign(int t, FluxSign s) const;

  /// Largest |[[beta . n_F]]| over interior faces.
  double max_normal_flux_jump() const;

  Vec2 point(int t, const std::array<double, 3>& bary) const;

  /// Triangle containing p (brute force), or -1.
  int locate(Vec2 p, double tol = 1e-12) const;

private:
  void build_faces();

  std::vector<Vec2> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<Vec2> beta_;
  std::vector<Face> faces_;
  std::vector<std::array<int, 3>> tri_faces_;
  std::vector<double> areas_;
};

/// Splits each triangle into four similar children; children inherit beta.
TriMesh2D red_refine_2d(const TriMesh2D& mesh);

/// Tags every face. Throws AmbiguousFace when |beta . n| falls in the band
/// (kZeroFluxTol, kAmbiguousFluxTol] relative to |beta|.
std::vector<FaceClass> classify_faces(const TriMesh2D& mesh);

/// Triangle permutation with every triangle placed after the triangle
/// downstream of it (across its outflow face).
struct FlowOrder {
  std::vector<int> order;
  /// downstream[t] is the neighbour across t's outflow face, -1 on the outflow boundary.
  std::vector<int> downstream;
};

FlowOrder flow_order(const TriMesh2D& mesh);

/// Invariant check report used by `mesh check`.
struct MeshReport {
  bool positive_areas = true;
  double max_flux_jump = 0.0;
  bool flux_continuous = true;
  bool flow_aligned = false;
  bool has_order = false;
  std::size_t num_triangles = 0;
  double total_area = 0.0;
  std::vector<std::string> problems;
  bool ok() const noexcept { return problems.empty(); }
};

MeshReport check_mesh(const TriMesh2D& mesh, bool require_flow_aligned = true);

/// Flow-aligned mesh of (0, width) x (0, height) with beta . n = -1, 0, 0, 1 on
/// bottom, left, right and top.
///
/// The domain is cut into `strips` streamline bands, each split into `rows`
/// quadrilaterals and each quadrilateral into two triangles, one per band
/// edge. Rows are built bottom-up; in each interior row every band draws a
/// vertical advection component in [0.5, 1.5] from a seeded generator and the
/// band widths follow from flux conservation. The advection field is the
/// rotated gradient of the resulting piecewise-linear stream function.
TriMesh2D flow_aligned_channel(int strips, int rows, std::uint64_t seed = 2019, double width = 1.0,
                               double height = 2.0);

/// Foot of the characteristic through p (inside triangle t) on the inflow boundary.
struct CharacteristicFoot {
  Vec2 point;
  int boundary_face = -1;
  int segments = 0;
};

CharacteristicFoot trace_to_inflow(const TriMesh2D& mesh, int t, Vec2 p);

/// Plain-text format: `NV NT`, NV lines `x y`, NT lines `v0 v1 v2 bx by`.
void write_mesh(std::ostream& out, const TriMesh2D& mesh);
TriMesh2D read_mesh(std::istream& in);
void save_mesh(const std::string& path, const TriMesh2D& mesh);
TriMesh2D load_mesh(const std::string& path);

}  // namespace ddmres
