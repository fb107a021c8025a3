#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tbm/fem.hpp"
#include "tbm/gmrf.hpp"
#include "tbm/mesh.hpp"
#include "tbm/precision.hpp"

namespace tbm {

// Point observations and the barycentric observation matrix A (m x n).
struct ObservationSet {
  std::vector<Point> locations;
  Eigen::VectorXd values;  // empty for point patterns
  SparseMatrix A;

  std::size_t size() const { return locations.size(); }
};

// Throws ValidationError naming the first location outside the mesh.
ObservationSet make_observations(const Mesh& mesh, const PointLocator& locator,
                                 std::vector<Point> locations, Eigen::VectorXd values = {});

// Uniform points over the triangles carrying one of the given labels.
std::vector<Point> random_locations(const Mesh& mesh, const SubdomainLabeling& labeling,
                                    const std::set<int>& labels, std::size_t count,
                                    RandomSource& rng);

// Same, restricted to the rectangle x_range x y_range (rejection sampling).
std::vector<Point> random_locations(const Mesh& mesh, const SubdomainLabeling& labeling,
                                    const std::set<int>& labels, Interval x_range, Interval y_range,
                                    std::size_t count, RandomSource& rng);

// y = A u + noise_sd * eps with u ~ N(0, Q(hp)^{-1}). The latent draw is
// written to field when given.
ObservationSet simulate_gaussian(const Mesh& mesh, const FemMatrices& fem, const HyperParams& hp,
                                 double noise_sd, const std::vector<Point>& locations,
                                 RandomSource& rng, Eigen::VectorXd* field = nullptr);

// P(value < u) = alpha for the range, P(value > u) = alpha for standard deviations.
struct PcPrior {
  double u = 1.0;
  double alpha = 0.5;
};

struct PcPriors {
  PcPrior range{1.0, 0.5};
  PcPrior sigma{1.0, 0.1};
  PcPrior noise{1.0, 0.1};

  void validate() const;
};

double pc_range_density(const PcPrior& prior, double range);
double pc_sigma_density(const PcPrior& prior, double sigma);

// Log prior density of theta = (log sigma_u, log range[, log sigma_y]),
// including the Jacobian of the log transform.
double pc_prior_logdensity(const PcPriors& priors, std::span<const double> theta);

// Exact log p(y | theta) for theta = (log sigma_u, log range, log sigma_y);
// adds the log prior when priors are given.
double log_marginal_gaussian(const FemMatrices& fem, std::span<const double> theta,
                             std::span<const double> fractions, const ObservationSet& obs,
                             const std::optional<PcPriors>& priors = std::nullopt);

struct OptimizerStep {
  int iteration = 0;
  double objective = 0.0;  // best log posterior so far
  std::vector<double> theta;
};

struct FitResult {
  std::string model;
  std::vector<double> fractions;
  std::vector<std::string> theta_names;
  std::vector<double> theta;
  std::vector<std::optional<double>> theta_sd;  // empty when the curvature is not negative definite
  double log_posterior = 0.0;
  double log_evidence = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<OptimizerStep> trace;
  // Latent field at the MAP: nodal posterior mean and sd. For point
  // patterns these refer to the log-intensity beta0 + u.
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  std::optional<double> beta0;
  std::optional<double> beta0_sd;
  bool inner_converged = true;

  double sigma_u() const;
  double range() const;
  std::optional<double> sigma_y() const;
};

struct NelderMeadOptions {
  double initial_step = 0.5;
  double diameter_tolerance = 1e-5;
  int max_iterations = 500;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<OptimizerStep> trace;
};

// Minimises f; non-finite values are treated as +infinity.
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::vector<double> x0, const NelderMeadOptions& options = {});

// MAP over theta = (log sigma_u, log range, log sigma_y) with Laplace
// curvature at the mode.
FitResult fit_gaussian(const FemMatrices& fem, std::span<const double> fractions,
                       const ObservationSet& obs, const PcPriors& priors,
                       std::vector<double> init, const NelderMeadOptions& options = {});

// w_i = sum of area/3 over incident triangles whose label is included.
Eigen::VectorXd lgcp_weights(const Mesh& mesh, const SubdomainLabeling& labeling,
                             const std::set<int>& integration_labels);

struct LgcpOptions {
  double intercept_precision = 1e-3;
  double gradient_tolerance = 1e-8;  // relative to the largest term in the gradient
  double relative_tolerance = 1e-8;
  int max_newton_iterations = 100;
  int max_halvings = 50;
  NelderMeadOptions outer;
};

// Posterior mode of (beta0, u) given theta, from Newton iterations on the
// penalised Poisson log-likelihood.
struct LgcpMode {
  double beta0 = 0.0;
  Eigen::VectorXd u;
  double objective = 0.0;  // penalised log-likelihood at the mode
  double log_laplace = 0.0;
  bool converged = false;
  int iterations = 0;
  Eigen::VectorXd gradient;  // (d/du, d/dbeta0) at the mode
};

class LgcpProblem {
 public:
  LgcpProblem(const Mesh& mesh, const FemMatrices& fem, const SubdomainLabeling& labeling,
              std::span<const double> fractions, std::vector<Point> events,
              const std::set<int>& integration_labels, const LgcpOptions& options = {});

  std::size_t n_events() const { return events_.size(); }
  const Eigen::VectorXd& weights() const { return weights_; }

  // Penalised log-likelihood and its gradient (u first, beta0 last).
  double objective(double beta0, const Eigen::VectorXd& u, const SparseSymmetric& Q) const;
  Eigen::VectorXd gradient(double beta0, const Eigen::VectorXd& u, const SparseSymmetric& Q) const;

  SparseSymmetric precision(double sigma_u, double range) const;
  LgcpMode find_mode(const SparseSymmetric& Q, double beta0, Eigen::VectorXd u) const;
  SparseSymmetric negative_hessian(double beta0, const Eigen::VectorXd& u, const SparseSymmetric& Q) const;

 private:
  const Mesh* mesh_;
  PrecisionAssembler assembler_;
  std::vector<Point> events_;
  SparseMatrix A_;
  Eigen::VectorXd event_counts_;  // A^T 1
  Eigen::VectorXd weights_;
  LgcpOptions options_;
};

FitResult fit_lgcp(const Mesh& mesh, const FemMatrices& fem, const SubdomainLabeling& labeling,
                   std::span<const double> fractions, std::vector<Point> events,
                   const PcPriors& priors, std::vector<double> init,
                   const std::set<int>& integration_labels = {1}, const LgcpOptions& options = {});

// Inhomogeneous Poisson events with log-intensity given at the nodes and
// interpolated linearly, over the triangles carrying the given labels.
std::vector<Point> simulate_events(const Mesh& mesh, const SubdomainLabeling& labeling,
                                   const Eigen::VectorXd& log_intensity,
                                   const std::set<int>& labels, RandomSource& rng);

std::string fit_result_json(const FitResult& result);

}  // namespace tbm
