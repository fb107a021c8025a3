#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tbm/fem.hpp"
#include "tbm/gmrf.hpp"
#include "tbm/mesh.hpp"
#include "tbm/precision.hpp"

namespace tbm {

// Correlation of every node with a reference node under N(0, Q^{-1}).
struct CorrelationField {
  std::size_t node = 0;
  Point reference;
  Eigen::VectorXd values;
};

// Distance from the reference point paired with projected correlation, one
// entry per unmasked lattice point. Not binned or sorted.
struct DistCorrCurve {
  std::vector<double> distance;
  std::vector<double> correlation;

  std::size_t size() const { return distance.size(); }
};

CorrelationField correlation_from_node(const SparseSymmetric& Q, const Mesh& mesh,
                                       std::size_t node);

// Reuses a factorization and its marginal standard deviations.
CorrelationField correlation_from_node(const Factorization& factor,
                                       const Eigen::VectorXd& marginal_sd,
                                       const Mesh& mesh, std::size_t node);

// restrict_to keeps only lattice points whose containing triangle carries the
// given label.
DistCorrCurve dist_corr_curve(const CorrelationField& field, const Projector& projector,
                              const SubdomainLabeling& labeling,
                              std::optional<int> restrict_to = std::nullopt);
DistCorrCurve dist_corr_curve(const CorrelationField& field, const Projector& projector);

// Mean correlation per distance bin [i w, (i+1) w); empty bins are dropped.
struct BinnedCurve {
  std::vector<double> distance;  // bin centre
  std::vector<double> correlation;
};
BinnedCurve bin_curve(const DistCorrCurve& curve, double bin_width);

// First distance at which the binned curve falls below level, linearly
// interpolated between bin centres; nothing if it never does.
std::optional<double> crossing_distance(const DistCorrCurve& curve, double level, double bin_width);

inline constexpr std::size_t kDefaultLatticeSize = 300;

struct PanelCell {
  std::size_t hp_index = 0;
  std::size_t node_index = 0;
  CorrelationField field;
  ProjectedGrid grid;
};

// One cell per (hyperparameter setting, reference node), hyperparameters
// outermost.
std::vector<PanelCell> correlation_panel(const Mesh& mesh, const FemMatrices& fem,
                                         std::span<const HyperParams> hp_list,
                                         std::span<const std::size_t> nodes,
                                         const Projector& projector);

inline std::string panel_file_name(const PanelCell& cell) {
  return "corr_" + std::to_string(cell.hp_index) + "_" + std::to_string(cell.node_index) + ".csv";
}

// Writes corr_<hp>_<node>.csv per cell and returns the paths written.
std::vector<std::filesystem::path> write_panel(const std::filesystem::path& dir,
                                               std::span<const PanelCell> cells);

}  // namespace tbm
