#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tbm {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double length() const { return hi - lo; }
};

using Triangle = std::array<std::size_t, 3>;

// Planar triangulation. Construction validates the triangles, orients them
// counter-clockwise and checks that the mesh is a single edge-connected piece.
class Mesh {
 public:
  Mesh(std::vector<Point> vertices, std::vector<Triangle> triangles);

  std::size_t n_nodes() const { return vertices_.size(); }
  std::size_t n_triangles() const { return triangles_.size(); }

  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const Point& vertex(std::size_t i) const { return vertices_[i]; }
  const Triangle& triangle(std::size_t t) const { return triangles_[t]; }

  double triangle_area(std::size_t t) const;
  Point centroid(std::size_t t) const;
  double total_area() const;

  // Axis-aligned bounding box of all vertices.
  Interval x_extent() const { return x_extent_; }
  Interval y_extent() const { return y_extent_; }

 private:
  std::vector<Point> vertices_;
  std::vector<Triangle> triangles_;
  Interval x_extent_;
  Interval y_extent_;
};

// Per-triangle subdomain labels. Label 1 is the normal area, labels 2..k are
// barrier subdomains.
class SubdomainLabeling {
 public:
  SubdomainLabeling(const Mesh& mesh, std::vector<int> labels, int k);

  // Every triangle in the normal area.
  static SubdomainLabeling all_normal(const Mesh& mesh);

  int k() const { return k_; }
  int label(std::size_t t) const { return labels_[t]; }
  const std::vector<int>& labels() const { return labels_; }

 private:
  std::vector<int> labels_;
  int k_;
};

// A closed polygon (outer ring plus optional holes) tagged with a subdomain
// label. Rings are stored without the repeated closing vertex; the outer ring
// is counter-clockwise and holes are clockwise.
class RegionPolygon {
 public:
  RegionPolygon(std::vector<std::vector<Point>> rings, int label);

  static RegionPolygon rectangle(Interval x, Interval y, int label);

  int label() const { return label_; }
  const std::vector<std::vector<Point>>& rings() const { return rings_; }

  // Even-odd rule over all rings; points on an edge count as inside.
  bool contains(const Point& p) const;
  double area() const;

 private:
  std::vector<std::vector<Point>> rings_;
  int label_;
};

struct MeshWithLabels {
  Mesh mesh;
  SubdomainLabeling labeling;
};

struct RectMeshOptions {
  double max_edge = 1.0;
  double buffer = 0.0;
  std::size_t max_nodes = 4'000'000;
};

MeshWithLabels load_mesh(const std::filesystem::path& path);
MeshWithLabels parse_mesh_json(const std::string& text);
std::string mesh_to_json(const Mesh& mesh, const SubdomainLabeling& labeling);
void save_mesh(const std::filesystem::path& path, const Mesh& mesh,
               const SubdomainLabeling& labeling);

// Regular grid on the rectangle extended by the buffer, each quad split into
// two triangles with alternating diagonals. The grid spacing is fixed by the
// interior rectangle, so interior vertices do not move when the buffer changes.
Mesh generate_rect_mesh(Interval x_range, Interval y_range,
                        const RectMeshOptions& options);

// Label each triangle by the last region containing its centroid; triangles
// outside every region get label 1.
SubdomainLabeling classify_triangles(const Mesh& mesh,
                                     std::span<const RegionPolygon> regions);

std::vector<RegionPolygon> parse_regions_json(const std::string& text);
std::vector<RegionPolygon> load_regions(const std::filesystem::path& path);

struct Barycentric {
  std::size_t triangle = 0;
  std::array<double, 3> weights{};
};

// Uniform bucket grid over triangle bounding boxes for point location.
class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh);

  // Containing triangle with clamped, renormalised weights, or nothing when
  // the point lies outside the mesh. Ties resolve to the lowest triangle index.
  std::optional<Barycentric> locate(const Point& p) const;

 private:
  const Mesh* mesh_;
  double x0_, y0_, cell_w_, cell_h_;
  std::size_t nx_, ny_;
  std::vector<std::size_t> cell_start_;
  std::vector<std::size_t> cell_triangles_;
};

struct Lattice {
  Interval x_range;
  Interval y_range;
  std::size_t nx = 0;
  std::size_t ny = 0;

  std::size_t size() const { return nx * ny; }
  // Row-major with x varying fastest; both endpoints included.
  Point point(std::size_t index) const;
};

class Projector {
 public:
  Projector(Lattice lattice, std::vector<std::optional<Barycentric>> weights,
            std::vector<std::array<std::size_t, 3>> nodes, std::size_t n_nodes);

  const Lattice& lattice() const { return lattice_; }
  std::size_t n_nodes() const { return n_nodes_; }
  bool masked(std::size_t index) const { return !weights_[index].has_value(); }
  const std::optional<Barycentric>& weights(std::size_t index) const {
    return weights_[index];
  }
  const std::array<std::size_t, 3>& support(std::size_t index) const {
    return nodes_[index];
  }

 private:
  Lattice lattice_;
  std::vector<std::optional<Barycentric>> weights_;
  std::vector<std::array<std::size_t, 3>> nodes_;
  std::size_t n_nodes_;
};

struct ProjectedGrid {
  Lattice lattice;
  std::vector<std::optional<double>> values;
};

Projector build_projector(const Mesh& mesh, std::size_t nx, std::size_t ny,
                          Interval x_range, Interval y_range);

ProjectedGrid project_field(const Projector& projector,
                            const Eigen::Ref<const Eigen::VectorXd>& nodal_values);

// CSV with header `x,y,value`; masked points have an empty value field.
std::string grid_to_csv(const ProjectedGrid& grid);
void write_grid_csv(const std::filesystem::path& path, const ProjectedGrid& grid);

// Nearest mesh node to a point that lies inside the mesh.
std::size_t nearest_node(const Mesh& mesh, const PointLocator& locator,
                         const Point& p);

}  // namespace tbm
