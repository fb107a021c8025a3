#include "tbm/fem.hpp"

#include <cmath>
#include <string>

#include "tbm/error.hpp"

namespace tbm {

FemMatrices assemble(const Mesh& mesh, const SubdomainLabeling& labeling) {
  if (labeling.labels().size() != mesh.n_triangles())
    throw ValidationError("labeling does not match mesh");
  const auto n = static_cast<Eigen::Index>(mesh.n_nodes());
  const int k = labeling.k();
  const double area_floor =
      1e-14 * mesh.x_extent().length() * mesh.y_extent().length();

  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> mass;
  std::vector<std::vector<Triplet>> stiffness(static_cast<std::size_t>(k));
  std::vector<Triplet> stiffness_total;
  mass.reserve(9 * mesh.n_triangles());
  stiffness_total.reserve(9 * mesh.n_triangles());

  FemMatrices fem;
  fem.C_tilde.assign(static_cast<std::size_t>(k), Eigen::VectorXd::Zero(n));
  fem.C_tilde_total = Eigen::VectorXd::Zero(n);

  for (std::size_t t = 0; t < mesh.n_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    const double area = mesh.triangle_area(t);
    if (!(area >= area_floor))
      throw ValidationError("triangle " + std::to_string(t) + " is degenerate");
    const auto q = static_cast<std::size_t>(labeling.label(t) - 1);

    // Gradient of barycentric coordinate c is the rotated opposite edge / (2A).
    double gx[3], gy[3];
    for (int c = 0; c < 3; ++c) {
      const Point& b = mesh.vertex(tri[(c + 1) % 3]);
      const Point& e = mesh.vertex(tri[(c + 2) % 3]);
      gx[c] = (b.y - e.y) / (2.0 * area);
      gy[c] = (e.x - b.x) / (2.0 * area);
    }
    for (int a = 0; a < 3; ++a) {
      const auto ia = static_cast<Eigen::Index>(tri[a]);
      fem.C_tilde[q][ia] += area / 3.0;
      fem.C_tilde_total[ia] += area / 3.0;
      for (int b = 0; b < 3; ++b) {
        const auto ib = static_cast<Eigen::Index>(tri[b]);
        const double g = area * (gx[a] * gx[b] + gy[a] * gy[b]);
        mass.emplace_back(ia, ib, area / 12.0 * (a == b ? 2.0 : 1.0));
        stiffness[q].emplace_back(ia, ib, g);
        stiffness_total.emplace_back(ia, ib, g);
      }
    }
  }

  fem.C.resize(n, n);
  fem.C.setFromTriplets(mass.begin(), mass.end());
  fem.G.resize(static_cast<std::size_t>(k));
  for (int q = 0; q < k; ++q) {
    auto& g = fem.G[static_cast<std::size_t>(q)];
    g.resize(n, n);
    g.setFromTriplets(stiffness[static_cast<std::size_t>(q)].begin(),
                      stiffness[static_cast<std::size_t>(q)].end());
  }
  fem.G_total.resize(n, n);
  fem.G_total.setFromTriplets(stiffness_total.begin(), stiffness_total.end());
  return fem;
}

std::vector<double> total_area_per_subdomain(const FemMatrices& fem) {
  std::vector<double> areas;
  areas.reserve(fem.C_tilde.size());
  for (const auto& ct : fem.C_tilde) areas.push_back(ct.sum());
  return areas;
}

}  // namespace tbm
