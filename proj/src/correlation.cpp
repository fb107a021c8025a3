#include "tbm/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tbm/error.hpp"

namespace tbm {

CorrelationField correlation_from_node(const Factorization& factor,
                                       const Eigen::VectorXd& marginal_sd,
                                       const Mesh& mesh, std::size_t node) {
  const auto n = factor.n();
  if (node >= static_cast<std::size_t>(n) || mesh.n_nodes() != static_cast<std::size_t>(n))
    throw ValidationError("reference node " + std::to_string(node) + " is out of range [0, " +
                          std::to_string(n) + ")");
  if (marginal_sd.size() != n) throw ValidationError("marginal sd vector has the wrong length");
  const auto id = static_cast<Eigen::Index>(node);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  e[id] = 1.0;
  const Eigen::VectorXd column = factor.solve(e);

  CorrelationField field;
  field.node = node;
  field.reference = mesh.vertex(node);
  field.values = column.array() / (marginal_sd.array() * marginal_sd[id]);
  field.values[id] = 1.0;
  return field;
}

CorrelationField correlation_from_node(const SparseSymmetric& Q, const Mesh& mesh,
                                       std::size_t node) {
  if (node >= static_cast<std::size_t>(Q.n()))
    throw ValidationError("reference node " + std::to_string(node) + " is out of range [0, " +
                          std::to_string(Q.n()) + ")");
  const Factorization factor = factorize(Q);
  return correlation_from_node(factor, marginal_sd(factor), mesh, node);
}

namespace {

DistCorrCurve build_curve(const CorrelationField& field, const Projector& projector,
                          const SubdomainLabeling* labeling, std::optional<int> restrict_to) {
  if (static_cast<Eigen::Index>(projector.n_nodes()) != field.values.size())
    throw ValidationError("projector and correlation field refer to different meshes");
  DistCorrCurve curve;
  const Lattice& lattice = projector.lattice();
  for (std::size_t idx = 0; idx < lattice.size(); ++idx) {
    const auto& w = projector.weights(idx);
    if (!w) continue;
    if (restrict_to && labeling->label(w->triangle) != *restrict_to) continue;
    const auto& support = projector.support(idx);
    double value = 0.0;
    for (int c = 0; c < 3; ++c)
      value += w->weights[static_cast<std::size_t>(c)] *
               field.values[static_cast<Eigen::Index>(support[static_cast<std::size_t>(c)])];
    const Point p = lattice.point(idx);
    curve.distance.push_back(std::hypot(p.x - field.reference.x, p.y - field.reference.y));
    curve.correlation.push_back(value);
  }
  return curve;
}

}  // namespace

DistCorrCurve dist_corr_curve(const CorrelationField& field, const Projector& projector,
                              const SubdomainLabeling& labeling, std::optional<int> restrict_to) {
  return build_curve(field, projector, &labeling, restrict_to);
}

DistCorrCurve dist_corr_curve(const CorrelationField& field, const Projector& projector) {
  return build_curve(field, projector, nullptr, std::nullopt);
}

BinnedCurve bin_curve(const DistCorrCurve& curve, double bin_width) {
  if (!(bin_width > 0.0)) throw ValidationError("bin width must be positive");
  double max_d = 0.0;
  for (double d : curve.distance) max_d = std::max(max_d, d);
  const auto n_bins = static_cast<std::size_t>(max_d / bin_width) + 1;
  std::vector<double> sum(n_bins, 0.0);
  std::vector<std::size_t> count(n_bins, 0);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const auto b = static_cast<std::size_t>(curve.distance[i] / bin_width);
    sum[b] += curve.correlation[i];
    ++count[b];
  }
  BinnedCurve out;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    out.distance.push_back((static_cast<double>(b) + 0.5) * bin_width);
    out.correlation.push_back(sum[b] / static_cast<double>(count[b]));
  }
  return out;
}

std::optional<double> crossing_distance(const DistCorrCurve& curve, double level, double bin_width) {
  const BinnedCurve binned = bin_curve(curve, bin_width);
  for (std::size_t i = 1; i < binned.distance.size(); ++i) {
    const double c0 = binned.correlation[i - 1], c1 = binned.correlation[i];
    if (c0 >= level && c1 < level) {
      const double f = (c0 - level) / (c0 - c1);
      return binned.distance[i - 1] + f * (binned.distance[i] - binned.distance[i - 1]);
    }
  }
  return std::nullopt;
}

std::vector<PanelCell> correlation_panel(const Mesh& mesh, const FemMatrices& fem,
                                         std::span<const HyperParams> hp_list,
                                         std::span<const std::size_t> nodes,
                                         const Projector& projector) {
  if (nodes.empty())
    throw ValidationError("no reference nodes given; valid node indices are [0, " +
                          std::to_string(mesh.n_nodes()) + ")");
  for (std::size_t node : nodes)
    if (node >= mesh.n_nodes())
      throw ValidationError("reference node " + std::to_string(node) + " is out of range [0, " +
                            std::to_string(mesh.n_nodes()) + ")");
  std::vector<PanelCell> cells;
  std::shared_ptr<const CholeskySymbolic> symbolic;
  for (std::size_t h = 0; h < hp_list.size(); ++h) {
    const SparseSymmetric Q = assemble_Q(fem, hp_list[h]);
    const Factorization factor = symbolic ? Factorization(Q, symbolic) : Factorization(Q);
    symbolic = factor.symbolic_ptr();
    const Eigen::VectorXd sd = marginal_sd(factor);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      PanelCell cell;
      cell.hp_index = h;
      cell.node_index = k;
      cell.field = correlation_from_node(factor, sd, mesh, nodes[k]);
      cell.grid = project_field(projector, cell.field.values);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::vector<std::filesystem::path> write_panel(const std::filesystem::path& dir,
                                               std::span<const PanelCell> cells) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& cell : cells) {
    const auto path = dir / panel_file_name(cell);
    write_grid_csv(path, cell.grid);
    written.push_back(path);
  }
  return written;
}

}  // namespace tbm
