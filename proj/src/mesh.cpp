#include "tbm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <utility>

#include <json.hpp>

#include "tbm/error.hpp"
#include "tbm/io.hpp"

namespace tbm {

namespace {

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double signed_area(const std::vector<Point>& ring) {
  double twice = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % ring.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

bool on_segment(const Point& p, const Point& a, const Point& b) {
  const double scale = std::abs(b.x - a.x) + std::abs(b.y - a.y);
  if (std::abs(cross(a, b, p)) > 1e-12 * scale * scale) return false;
  return p.x >= std::min(a.x, b.x) - 1e-12 * scale &&
         p.x <= std::max(a.x, b.x) + 1e-12 * scale &&
         p.y >= std::min(a.y, b.y) - 1e-12 * scale &&
         p.y <= std::max(a.y, b.y) + 1e-12 * scale;
}

int orientation_sign(double v) { return (v > 0.0) - (v < 0.0); }

bool segments_intersect(const Point& p1, const Point& p2, const Point& q1,
                        const Point& q2) {
  const int d1 = orientation_sign(cross(q1, q2, p1));
  const int d2 = orientation_sign(cross(q1, q2, p2));
  const int d3 = orientation_sign(cross(p1, p2, q1));
  const int d4 = orientation_sign(cross(p1, p2, q2));
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  return (d1 == 0 && on_segment(p1, q1, q2)) || (d2 == 0 && on_segment(p2, q1, q2)) ||
         (d3 == 0 && on_segment(q1, p1, p2)) || (d4 == 0 && on_segment(q2, p1, p2));
}

struct DisjointSets {
  std::vector<std::size_t> parent;

  explicit DisjointSets(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

Point parse_point(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ParseError(where + ": expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

// ---------------------------------------------------------------------------
// Mesh

Mesh::Mesh(std::vector<Point> vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  if (vertices_.empty()) throw ValidationError("mesh has no vertices");
  if (triangles_.empty()) throw ValidationError("mesh has no triangles");

  x_extent_ = {std::numeric_limits<double>::infinity(),
               -std::numeric_limits<double>::infinity()};
  y_extent_ = x_extent_;
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    const Point& p = vertices_[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw ValidationError("vertex " + std::to_string(i) + " has non-finite coordinates");
    x_extent_.lo = std::min(x_extent_.lo, p.x);
    x_extent_.hi = std::max(x_extent_.hi, p.x);
    y_extent_.lo = std::min(y_extent_.lo, p.y);
    y_extent_.hi = std::max(y_extent_.hi, p.y);
  }
  const double bbox_area = x_extent_.length() * y_extent_.length();

  const std::size_t n = vertices_.size();
  std::vector<bool> used(n, false);
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    Triangle& tri = triangles_[t];
    for (std::size_t v : tri) {
      if (v >= n)
        throw ValidationError("triangle " + std::to_string(t) + ": vertex index " +
                              std::to_string(v) + " out of range [0, " +
                              std::to_string(n) + ")");
      used[v] = true;
    }
    const double twice = cross(vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]);
    if (!(std::abs(0.5 * twice) >= 1e-14 * bbox_area) || bbox_area <= 0.0)
      throw ValidationError("triangle " + std::to_string(t) + " is degenerate");
    if (twice < 0.0) std::swap(tri[1], tri[2]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!used[i])
      throw ValidationError("vertex " + std::to_string(i) + " is not used by any triangle");
  }

  DisjointSets components(triangles_.size());
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> edge_owner;
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    const Triangle& tri = triangles_[t];
    for (int e = 0; e < 3; ++e) {
      auto key = std::minmax(tri[e], tri[(e + 1) % 3]);
      auto [it, inserted] = edge_owner.emplace(key, t);
      if (!inserted) components.unite(it->second, t);
    }
  }
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    if (components.find(t) != 0)
      throw ValidationError("mesh is disconnected: triangle " + std::to_string(t) +
                            " is not edge-connected to triangle 0");
  }
}

double Mesh::triangle_area(std::size_t t) const {
  const Triangle& tri = triangles_[t];
  return 0.5 * cross(vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]);
}

Point Mesh::centroid(std::size_t t) const {
  const Triangle& tri = triangles_[t];
  const Point& a = vertices_[tri[0]];
  const Point& b = vertices_[tri[1]];
  const Point& c = vertices_[tri[2]];
  return {(a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0};
}

double Mesh::total_area() const {
  double area = 0.0;
  for (std::size_t t = 0; t < triangles_.size(); ++t) area += triangle_area(t);
  return area;
}

// ---------------------------------------------------------------------------
// SubdomainLabeling

SubdomainLabeling::SubdomainLabeling(const Mesh& mesh, std::vector<int> labels, int k)
    : labels_(std::move(labels)), k_(k) {
  if (k_ < 1) throw ValidationError("number of subdomains must be at least 1");
  if (labels_.size() != mesh.n_triangles())
    throw ValidationError("label count " + std::to_string(labels_.size()) +
                          " does not match triangle count " +
                          std::to_string(mesh.n_triangles()));
  for (std::size_t t = 0; t < labels_.size(); ++t) {
    if (labels_[t] < 1 || labels_[t] > k_)
      throw ValidationError("triangle " + std::to_string(t) + ": label " +
                            std::to_string(labels_[t]) + " outside [1, " +
                            std::to_string(k_) + "]");
  }
}

SubdomainLabeling SubdomainLabeling::all_normal(const Mesh& mesh) {
  return SubdomainLabeling(mesh, std::vector<int>(mesh.n_triangles(), 1), 1);
}

// ---------------------------------------------------------------------------
// RegionPolygon

RegionPolygon::RegionPolygon(std::vector<std::vector<Point>> rings, int label)
    : rings_(std::move(rings)), label_(label) {
  if (label_ < 2) throw ValidationError("region labels must be 2 or larger");
  if (rings_.empty()) throw ValidationError("region polygon has no rings");
  for (std::size_t r = 0; r < rings_.size(); ++r) {
    auto& ring = rings_[r];
    if (ring.size() >= 2 && ring.front().x == ring.back().x &&
        ring.front().y == ring.back().y)
      ring.pop_back();
    const std::string where = "region " + std::to_string(label_) + " ring " + std::to_string(r);
    if (ring.size() < 3) throw ValidationError(where + " has fewer than 3 vertices");
    for (const Point& p : ring) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw ValidationError(where + " has non-finite coordinates");
    }
    const std::size_t m = ring.size();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        if (j == i + 1 || (i == 0 && j == m - 1)) continue;
        if (segments_intersect(ring[i], ring[(i + 1) % m], ring[j], ring[(j + 1) % m]))
          throw ValidationError(where + " is self-intersecting (edges " +
                                std::to_string(i) + " and " + std::to_string(j) + ")");
      }
    }
    const double area = signed_area(ring);
    if (area == 0.0) throw ValidationError(where + " has zero area");
    const bool want_ccw = r == 0;
    if ((area > 0.0) != want_ccw) std::reverse(ring.begin(), ring.end());
  }
}

RegionPolygon RegionPolygon::rectangle(Interval x, Interval y, int label) {
  return RegionPolygon({{{x.lo, y.lo}, {x.hi, y.lo}, {x.hi, y.hi}, {x.lo, y.hi}}}, label);
}

bool RegionPolygon::contains(const Point& p) const {
  bool inside = false;
  for (const auto& ring : rings_) {
    const std::size_t m = ring.size();
    for (std::size_t i = 0, j = m - 1; i < m; j = i++) {
      const Point& a = ring[i];
      const Point& b = ring[j];
      if (on_segment(p, a, b)) return true;
      if ((a.y > p.y) != (b.y > p.y) &&
          p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x)
        inside = !inside;
    }
  }
  return inside;
}

double RegionPolygon::area() const {
  double total = 0.0;
  for (const auto& ring : rings_) total += signed_area(ring);
  return total;
}

// ---------------------------------------------------------------------------
// Interchange format

MeshWithLabels parse_mesh_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("mesh file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("mesh file must be a JSON object");
  for (const char* key : {"vertices", "triangles", "labels"}) {
    if (!doc.contains(key) || !doc[key].is_array())
      throw ParseError(std::string("mesh file: missing array '") + key + "'");
  }

  std::vector<Point> vertices;
  vertices.reserve(doc["vertices"].size());
  for (std::size_t i = 0; i < doc["vertices"].size(); ++i)
    vertices.push_back(parse_point(doc["vertices"][i], "vertex " + std::to_string(i)));

  std::vector<Triangle> triangles;
  triangles.reserve(doc["triangles"].size());
  for (std::size_t t = 0; t < doc["triangles"].size(); ++t) {
    const auto& tri = doc["triangles"][t];
    if (!tri.is_array() || tri.size() != 3)
      throw ParseError("triangle " + std::to_string(t) + ": expected [i, j, k]");
    Triangle out{};
    for (int c = 0; c < 3; ++c) {
      if (!tri[c].is_number_integer())
        throw ParseError("triangle " + std::to_string(t) + ": indices must be integers");
      const auto v = tri[c].get<long long>();
      if (v < 0)
        throw ValidationError("triangle " + std::to_string(t) + ": vertex index " +
                              std::to_string(v) + " out of range");
      out[c] = static_cast<std::size_t>(v);
    }
    triangles.push_back(out);
  }

  std::vector<int> labels;
  labels.reserve(doc["labels"].size());
  int k = 1;
  for (std::size_t t = 0; t < doc["labels"].size(); ++t) {
    const auto& l = doc["labels"][t];
    if (!l.is_number_integer())
      throw ParseError("label " + std::to_string(t) + " must be an integer");
    labels.push_back(l.get<int>());
    k = std::max(k, labels.back());
  }

  Mesh mesh(std::move(vertices), std::move(triangles));
  SubdomainLabeling labeling(mesh, std::move(labels), k);
  return {std::move(mesh), std::move(labeling)};
}

MeshWithLabels load_mesh(const std::filesystem::path& path) {
  return parse_mesh_json(read_text_file(path));
}

std::string mesh_to_json(const Mesh& mesh, const SubdomainLabeling& labeling) {
  std::string out = "{\"vertices\":[";
  for (std::size_t i = 0; i < mesh.n_nodes(); ++i) {
    if (i) out += ',';
    out += '[' + format_double(mesh.vertex(i).x) + ',' + format_double(mesh.vertex(i).y) + ']';
  }
  out += "],\"triangles\":[";
  for (std::size_t t = 0; t < mesh.n_triangles(); ++t) {
    if (t) out += ',';
    const Triangle& tri = mesh.triangle(t);
    out += '[' + std::to_string(tri[0]) + ',' + std::to_string(tri[1]) + ',' +
           std::to_string(tri[2]) + ']';
  }
  out += "],\"labels\":[";
  for (std::size_t t = 0; t < mesh.n_triangles(); ++t) {
    if (t) out += ',';
    out += std::to_string(labeling.label(t));
  }
  out += "]}\n";
  return out;
}

void save_mesh(const std::filesystem::path& path, const Mesh& mesh,
               const SubdomainLabeling& labeling) {
  write_text_file(path, mesh_to_json(mesh, labeling));
}

std::vector<RegionPolygon> parse_regions_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("region file is not valid JSON: ") + e.what());
  }
  if (doc.is_object() && doc.contains("regions")) doc = doc["regions"];
  if (!doc.is_array()) throw ParseError("region file must be a list of regions");

  std::vector<RegionPolygon> regions;
  for (std::size_t r = 0; r < doc.size(); ++r) {
    const auto& item = doc[r];
    const std::string where = "region " + std::to_string(r);
    if (!item.is_object() || !item.contains("label") || !item.contains("rings"))
      throw ParseError(where + ": expected {\"label\": q, \"rings\": [...]}");
    if (!item["label"].is_number_integer())
      throw ParseError(where + ": label must be an integer");
    if (!item["rings"].is_array()) throw ParseError(where + ": rings must be a list");
    std::vector<std::vector<Point>> rings;
    for (const auto& ring : item["rings"]) {
      if (!ring.is_array()) throw ParseError(where + ": each ring must be a list of points");
      std::vector<Point> pts;
      for (const auto& p : ring) pts.push_back(parse_point(p, where));
      rings.push_back(std::move(pts));
    }
    regions.emplace_back(std::move(rings), item["label"].get<int>());
  }
  return regions;
}

std::vector<RegionPolygon> load_regions(const std::filesystem::path& path) {
  return parse_regions_json(read_text_file(path));
}

// ---------------------------------------------------------------------------
// Generation and classification

Mesh generate_rect_mesh(Interval x_range, Interval y_range, const RectMeshOptions& options) {
  if (!(options.max_edge > 0.0)) throw ValidationError("max_edge must be positive");
  if (!(options.buffer >= 0.0)) throw ValidationError("buffer must be non-negative");
  if (!(x_range.length() > 0.0) || !(y_range.length() > 0.0))
    throw ValidationError("rectangle must have positive width and height");

  auto cells = [&](double length) {
    return static_cast<long long>(std::max(1.0, std::ceil(length / options.max_edge - 1e-9)));
  };
  const long long cx = cells(x_range.length());
  const long long cy = cells(y_range.length());
  const double hx = x_range.length() / static_cast<double>(cx);
  const double hy = y_range.length() / static_cast<double>(cy);
  const long long bx = static_cast<long long>(std::ceil(options.buffer / hx - 1e-9));
  const long long by = static_cast<long long>(std::ceil(options.buffer / hy - 1e-9));

  const long long nx = cx + 2 * bx + 1;
  const long long ny = cy + 2 * by + 1;
  const double count = static_cast<double>(nx) * static_cast<double>(ny);
  if (count > static_cast<double>(options.max_nodes))
    throw ValidationError("requested resolution needs " + std::to_string(nx * ny) +
                          " nodes, above the cap of " + std::to_string(options.max_nodes));

  std::vector<Point> vertices;
  vertices.reserve(static_cast<std::size_t>(nx * ny));
  for (long long j = -by; j <= cy + by; ++j) {
    for (long long i = -bx; i <= cx + bx; ++i) {
      const double x = i == cx ? x_range.hi : x_range.lo + static_cast<double>(i) * hx;
      const double y = j == cy ? y_range.hi : y_range.lo + static_cast<double>(j) * hy;
      vertices.push_back({x, y});
    }
  }
  auto node = [&](long long i, long long j) {
    return static_cast<std::size_t>((j + by) * nx + (i + bx));
  };
  std::vector<Triangle> triangles;
  triangles.reserve(static_cast<std::size_t>(2 * (nx - 1) * (ny - 1)));
  for (long long j = -by; j < cy + by; ++j) {
    for (long long i = -bx; i < cx + bx; ++i) {
      const std::size_t a = node(i, j), b = node(i + 1, j), c = node(i + 1, j + 1),
                        d = node(i, j + 1);
      if (((i + j) % 2 + 2) % 2 == 0) {
        triangles.push_back({a, b, c});
        triangles.push_back({a, c, d});
      } else {
        triangles.push_back({a, b, d});
        triangles.push_back({b, c, d});
      }
    }
  }
  return Mesh(std::move(vertices), std::move(triangles));
}

SubdomainLabeling classify_triangles(const Mesh& mesh, std::span<const RegionPolygon> regions) {
  int k = 1;
  for (const auto& region : regions) k = std::max(k, region.label());
  std::vector<int> labels(mesh.n_triangles(), 1);
  for (std::size_t t = 0; t < mesh.n_triangles(); ++t) {
    const Point c = mesh.centroid(t);
    for (const auto& region : regions) {
      if (region.contains(c)) labels[t] = region.label();
    }
  }
  return SubdomainLabeling(mesh, std::move(labels), k);
}

// ---------------------------------------------------------------------------
// Point location and projection

PointLocator::PointLocator(const Mesh& mesh) : mesh_(&mesh) {
  const Interval xe = mesh.x_extent();
  const Interval ye = mesh.y_extent();
  const double cells = std::max(1.0, std::sqrt(static_cast<double>(mesh.n_triangles())));
  const double aspect = xe.length() / ye.length();
  nx_ = static_cast<std::size_t>(std::clamp(std::round(cells * std::sqrt(aspect)), 1.0, 4096.0));
  ny_ = static_cast<std::size_t>(std::clamp(std::round(cells / std::sqrt(aspect)), 1.0, 4096.0));
  x0_ = xe.lo;
  y0_ = ye.lo;
  cell_w_ = xe.length() / static_cast<double>(nx_);
  cell_h_ = ye.length() / static_cast<double>(ny_);

  auto cell_range = [&](double lo, double hi, double origin, double width, std::size_t n) {
    auto clampi = [&](double v) {
      return static_cast<std::size_t>(std::clamp(std::floor((v - origin) / width), 0.0,
                                                  static_cast<double>(n - 1)));
    };
    return std::pair{clampi(lo), clampi(hi)};
  };

  std::vector<std::size_t> counts(nx_ * ny_ + 1, 0);
  auto for_cells = [&](std::size_t t, auto&& fn) {
    const Triangle& tri = mesh.triangle(t);
    double xlo = mesh.vertex(tri[0]).x, xhi = xlo, ylo = mesh.vertex(tri[0]).y, yhi = ylo;
    for (int c = 1; c < 3; ++c) {
      xlo = std::min(xlo, mesh.vertex(tri[c]).x);
      xhi = std::max(xhi, mesh.vertex(tri[c]).x);
      ylo = std::min(ylo, mesh.vertex(tri[c]).y);
      yhi = std::max(yhi, mesh.vertex(tri[c]).y);
    }
    const double pad_x = 1e-9 * xe.length(), pad_y = 1e-9 * ye.length();
    auto [i0, i1] = cell_range(xlo - pad_x, xhi + pad_x, x0_, cell_w_, nx_);
    auto [j0, j1] = cell_range(ylo - pad_y, yhi + pad_y, y0_, cell_h_, ny_);
    for (std::size_t j = j0; j <= j1; ++j)
      for (std::size_t i = i0; i <= i1; ++i) fn(j * nx_ + i);
  };
  for (std::size_t t = 0; t < mesh.n_triangles(); ++t)
    for_cells(t, [&](std::size_t cell) { ++counts[cell + 1]; });
  std::partial_sum(counts.begin(), counts.end(), counts.begin());
  cell_start_ = counts;
  cell_triangles_.resize(counts.back());
  std::vector<std::size_t> fill(counts.begin(), counts.end() - 1);
  for (std::size_t t = 0; t < mesh.n_triangles(); ++t)
    for_cells(t, [&](std::size_t cell) { cell_triangles_[fill[cell]++] = t; });
}

std::optional<Barycentric> PointLocator::locate(const Point& p) const {
  const Interval xe = mesh_->x_extent();
  const Interval ye = mesh_->y_extent();
  const double slack_x = 1e-12 * xe.length(), slack_y = 1e-12 * ye.length();
  if (p.x < xe.lo - slack_x || p.x > xe.hi + slack_x || p.y < ye.lo - slack_y ||
      p.y > ye.hi + slack_y)
    return std::nullopt;
  const auto i = static_cast<std::size_t>(
      std::clamp(std::floor((p.x - x0_) / cell_w_), 0.0, static_cast<double>(nx_ - 1)));
  const auto j = static_cast<std::size_t>(
      std::clamp(std::floor((p.y - y0_) / cell_h_), 0.0, static_cast<double>(ny_ - 1)));
  const std::size_t cell = j * nx_ + i;
  for (std::size_t k = cell_start_[cell]; k < cell_start_[cell + 1]; ++k) {
    const std::size_t t = cell_triangles_[k];
    const Triangle& tri = mesh_->triangle(t);
    const Point& a = mesh_->vertex(tri[0]);
    const Point& b = mesh_->vertex(tri[1]);
    const Point& c = mesh_->vertex(tri[2]);
    const double twice = cross(a, b, c);
    std::array<double, 3> w{cross(p, b, c) / twice, cross(p, c, a) / twice,
                            cross(p, a, b) / twice};
    constexpr double tol = 1e-10;
    if (w[0] < -tol || w[1] < -tol || w[2] < -tol) continue;
    for (double& v : w) v = std::max(v, 0.0);
    const double sum = w[0] + w[1] + w[2];
    for (double& v : w) v /= sum;
    return Barycentric{t, w};
  }
  return std::nullopt;
}

Point Lattice::point(std::size_t index) const {
  const std::size_t i = index % nx;
  const std::size_t j = index / nx;
  auto coord = [](const Interval& range, std::size_t k, std::size_t n) {
    if (k + 1 == n) return range.hi;
    return range.lo + range.length() * static_cast<double>(k) / static_cast<double>(n - 1);
  };
  return {coord(x_range, i, nx), coord(y_range, j, ny)};
}

Projector::Projector(Lattice lattice, std::vector<std::optional<Barycentric>> weights,
                     std::vector<std::array<std::size_t, 3>> nodes, std::size_t n_nodes)
    : lattice_(lattice), weights_(std::move(weights)), nodes_(std::move(nodes)),
      n_nodes_(n_nodes) {}

Projector build_projector(const Mesh& mesh, std::size_t nx, std::size_t ny, Interval x_range,
                          Interval y_range) {
  if (nx < 2 || ny < 2) throw ValidationError("projector lattice needs nx, ny >= 2");
  Lattice lattice{x_range, y_range, nx, ny};
  PointLocator locator(mesh);
  std::vector<std::optional<Barycentric>> weights(lattice.size());
  std::vector<std::array<std::size_t, 3>> nodes(lattice.size(), {0, 0, 0});
  for (std::size_t idx = 0; idx < lattice.size(); ++idx) {
    weights[idx] = locator.locate(lattice.point(idx));
    if (weights[idx]) nodes[idx] = mesh.triangle(weights[idx]->triangle);
  }
  return Projector(lattice, std::move(weights), std::move(nodes), mesh.n_nodes());
}

ProjectedGrid project_field(const Projector& projector,
                            const Eigen::Ref<const Eigen::VectorXd>& nodal_values) {
  if (static_cast<std::size_t>(nodal_values.size()) != projector.n_nodes())
    throw ValidationError("nodal vector has length " + std::to_string(nodal_values.size()) +
                          ", mesh has " + std::to_string(projector.n_nodes()) + " nodes");
  ProjectedGrid grid{projector.lattice(), {}};
  grid.values.resize(projector.lattice().size());
  for (std::size_t idx = 0; idx < grid.values.size(); ++idx) {
    const auto& w = projector.weights(idx);
    if (!w) continue;
    const auto& support = projector.support(idx);
    double v = 0.0;
    for (int c = 0; c < 3; ++c) v += w->weights[c] * nodal_values[static_cast<Eigen::Index>(support[c])];
    grid.values[idx] = v;
  }
  return grid;
}

std::string grid_to_csv(const ProjectedGrid& grid) {
  std::string out = "x,y,value\n";
  for (std::size_t idx = 0; idx < grid.values.size(); ++idx) {
    const Point p = grid.lattice.point(idx);
    out += format_double(p.x);
    out += ',';
    out += format_double(p.y);
    out += ',';
    if (grid.values[idx]) out += format_double(*grid.values[idx]);
    out += '\n';
  }
  return out;
}

void write_grid_csv(const std::filesystem::path& path, const ProjectedGrid& grid) {
  write_text_file(path, grid_to_csv(grid));
}

std::size_t nearest_node(const Mesh& mesh, const PointLocator& locator, const Point& p) {
  if (!locator.locate(p))
    throw ValidationError("point (" + format_double(p.x) + ", " + format_double(p.y) +
                          ") lies outside the mesh");
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mesh.n_nodes(); ++i) {
    const double dx = mesh.vertex(i).x - p.x, dy = mesh.vertex(i).y - p.y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

}  // namespace tbm
