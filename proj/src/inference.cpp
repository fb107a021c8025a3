#include "tbm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "tbm/error.hpp"
#include "tbm/io.hpp"

namespace tbm {

namespace {

using Index = Eigen::Index;
constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

SparseMatrix barycentric_matrix(const Mesh& mesh, const PointLocator& locator,
                                const std::vector<Point>& points) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(points.size() * 3);
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto bc = locator.locate(points[k]);
    if (!bc)
      throw ValidationError("location " + std::to_string(k) + " (" + format_double(points[k].x) + ", " +
                            format_double(points[k].y) + ") lies outside the mesh");
    const Triangle& tri = mesh.triangle(bc->triangle);
    for (int c = 0; c < 3; ++c)
      if (bc->weights[static_cast<std::size_t>(c)] != 0.0)
        trip.emplace_back(static_cast<Index>(k), static_cast<Index>(tri[static_cast<std::size_t>(c)]),
                          bc->weights[static_cast<std::size_t>(c)]);
  }
  SparseMatrix A(static_cast<Index>(points.size()), static_cast<Index>(mesh.n_nodes()));
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

SparseSymmetric add_lower(const SparseMatrix& a, const SparseMatrix& b) {
  const SparseMatrix sum = a + b;
  return SparseSymmetric::from_lower(SparseMatrix(sum.triangularView<Eigen::Lower>()));
}

double log_det_dense_spd(const Eigen::MatrixXd& m, bool& ok) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  ok = llt.info() == Eigen::Success;
  if (!ok) return 0.0;
  double s = 0.0;
  for (Index i = 0; i < m.rows(); ++i) s += 2.0 * std::log(llt.matrixL()(i, i));
  return s;
}

// Central finite-difference Hessian.
Eigen::MatrixXd fd_hessian(const std::function<double(std::span<const double>)>& f,
                           const std::vector<double>& x, double h) {
  const std::size_t d = x.size();
  Eigen::MatrixXd H(static_cast<Index>(d), static_cast<Index>(d));
  const double f0 = f(x);
  auto at = [&](std::size_t i, double di, std::size_t j, double dj) {
    std::vector<double> y = x;
    y[i] += di;
    y[j] += dj;
    return f(y);
  };
  for (std::size_t i = 0; i < d; ++i) {
    H(static_cast<Index>(i), static_cast<Index>(i)) = (at(i, h, i, 0) - 2.0 * f0 + at(i, -h, i, 0)) / (h * h);
    for (std::size_t j = 0; j < i; ++j) {
      const double v = (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) / (4.0 * h * h);
      H(static_cast<Index>(i), static_cast<Index>(j)) = v;
      H(static_cast<Index>(j), static_cast<Index>(i)) = v;
    }
  }
  return H;
}

// Fills theta_sd and log_evidence from the curvature of the log posterior.
void laplace_summary(const std::function<double(std::span<const double>)>& log_post, FitResult& fit) {
  constexpr double kStep = 5e-3;
  const Eigen::MatrixXd negH = -fd_hessian(log_post, fit.theta, kStep);
  bool ok = false;
  const double logdet = log_det_dense_spd(negH, ok);
  const auto d = static_cast<double>(fit.theta.size());
  fit.theta_sd.assign(fit.theta.size(), std::nullopt);
  if (ok) {
    const Eigen::MatrixXd cov = negH.inverse();
    for (std::size_t i = 0; i < fit.theta.size(); ++i)
      fit.theta_sd[i] = std::sqrt(cov(static_cast<Index>(i), static_cast<Index>(i)));
    fit.log_evidence = fit.log_posterior + 0.5 * d * kLog2Pi - 0.5 * logdet;
  } else {
    fit.log_evidence = fit.log_posterior;
  }
}

}  // namespace

ObservationSet make_observations(const Mesh& mesh, const PointLocator& locator,
                                 std::vector<Point> locations, Eigen::VectorXd values) {
  if (values.size() != 0 && static_cast<std::size_t>(values.size()) != locations.size())
    throw ValidationError("observation values and locations differ in length");
  for (Index i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i])) throw ValidationError("observation " + std::to_string(i) + " is not finite");
  ObservationSet obs;
  obs.A = barycentric_matrix(mesh, locator, locations);
  obs.locations = std::move(locations);
  obs.values = std::move(values);
  return obs;
}

std::vector<Point> random_locations(const Mesh& mesh, const SubdomainLabeling& labeling,
                                    const std::set<int>& labels, std::size_t count,
                                    RandomSource& rng) {
  // Area-weighted triangle choice, then a uniform point in the triangle.
  std::vector<double> cumulative;
  std::vector<std::size_t> tris;
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.n_triangles(); ++t) {
    if (!labels.contains(labeling.label(t))) continue;
    total += mesh.triangle_area(t);
    cumulative.push_back(total);
    tris.push_back(t);
  }
  if (count > 0 && tris.empty()) throw ValidationError("no triangles carry the requested labels");
  std::vector<Point> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double target = rng.uniform() * total;
    const auto pos = std::min<std::size_t>(
        static_cast<std::size_t>(std::lower_bound(cumulative.begin(), cumulative.end(), target) - cumulative.begin()),
        tris.size() - 1);
    const Triangle& tri = mesh.triangle(tris[pos]);
    double r1 = rng.uniform(), r2 = rng.uniform();
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const Point& a = mesh.vertex(tri[0]);
    const Point& b = mesh.vertex(tri[1]);
    const Point& c = mesh.vertex(tri[2]);
    out.push_back({a.x + r1 * (b.x - a.x) + r2 * (c.x - a.x), a.y + r1 * (b.y - a.y) + r2 * (c.y - a.y)});
  }
  return out;
}

std::vector<Point> random_locations(const Mesh& mesh, const SubdomainLabeling& labeling,
                                    const std::set<int>& labels, Interval x_range, Interval y_range,
                                    std::size_t count, RandomSource& rng) {
  std::vector<Point> out;
  out.reserve(count);
  const std::size_t max_draws = 10000 * std::max<std::size_t>(count, 1);
  for (std::size_t draws = 0; out.size() < count; ++draws) {
    if (draws == max_draws)
      throw ValidationError("the rectangle holds almost none of the labelled area");
    const Point p = random_locations(mesh, labeling, labels, 1, rng).front();
    if (p.x >= x_range.lo && p.x <= x_range.hi && p.y >= y_range.lo && p.y <= y_range.hi) out.push_back(p);
  }
  return out;
}

ObservationSet simulate_gaussian(const Mesh& mesh, const FemMatrices& fem, const HyperParams& hp,
                                 double noise_sd, const std::vector<Point>& locations,
                                 RandomSource& rng, Eigen::VectorXd* field) {
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ValidationError("noise sd must be finite and nonnegative");
  const PointLocator locator(mesh);
  ObservationSet obs = make_observations(mesh, locator, locations);
  const Factorization f = factorize(assemble_Q(fem, hp));
  const Eigen::VectorXd u = f.sample(rng, 1).col(0);
  Eigen::VectorXd y = obs.A * u;
  if (noise_sd > 0.0)
    for (Index i = 0; i < y.size(); ++i) y[i] += noise_sd * rng.normal();
  obs.values = std::move(y);
  if (field) *field = u;
  return obs;
}

void PcPriors::validate() const {
  for (const PcPrior* p : {&range, &sigma, &noise}) {
    if (!(p->u > 0.0) || !std::isfinite(p->u)) throw ValidationError("prior threshold must be positive");
    if (!(p->alpha > 0.0 && p->alpha < 1.0)) throw ValidationError("prior probability must lie in (0, 1)");
  }
}

double pc_range_density(const PcPrior& prior, double range) {
  if (!(range > 0.0)) return 0.0;
  const double lambda = -std::log(prior.alpha) * std::sqrt(prior.u);
  return std::exp(std::log(0.5 * lambda) - 1.5 * std::log(range) - lambda / std::sqrt(range));
}

double pc_sigma_density(const PcPrior& prior, double sigma) {
  if (!(sigma >= 0.0)) return 0.0;
  const double lambda = -std::log(prior.alpha) / prior.u;
  return lambda * std::exp(-lambda * sigma);
}

double pc_prior_logdensity(const PcPriors& priors, std::span<const double> theta) {
  if (theta.size() != 2 && theta.size() != 3) throw ValidationError("theta must have 2 or 3 components");
  const double log_sigma = theta[0], log_range = theta[1];
  const double lr = -std::log(priors.range.alpha) * std::sqrt(priors.range.u);
  const double ls = -std::log(priors.sigma.alpha) / priors.sigma.u;
  // log pi(r) + log r  and  log pi(sigma) + log sigma
  double lp = std::log(0.5 * lr) - 0.5 * log_range - lr * std::exp(-0.5 * log_range);
  lp += std::log(ls) - ls * std::exp(log_sigma) + log_sigma;
  if (theta.size() == 3) {
    const double ln = -std::log(priors.noise.alpha) / priors.noise.u;
    lp += std::log(ln) - ln * std::exp(theta[2]) + theta[2];
  }
  return lp;
}

namespace {

// Reuses the fraction basis and symbolic analysis across theta.
class GaussianModel {
 public:
  GaussianModel(const FemMatrices& fem, std::span<const double> fractions, const ObservationSet& obs)
      : assembler_(fem, fractions), obs_(&obs) {
    if (obs.values.size() != static_cast<Index>(obs.size()))
      throw ValidationError("observations have no values");
    if (obs.A.cols() != fem.n()) throw ValidationError("observation matrix does not match the mesh");
    AtA_ = SparseMatrix(obs.A.transpose() * obs.A);
    Aty_ = obs.A.transpose() * obs.values;
  }

  struct Evaluation {
    double log_marginal = 0.0;
    Eigen::VectorXd mean;
    std::optional<Factorization> posterior;
  };

  Evaluation evaluate(std::span<const double> theta, bool keep_posterior) {
    const double sigma_u = std::exp(theta[0]), range = std::exp(theta[1]), sigma_y = std::exp(theta[2]);
    const SparseSymmetric Q = assembler_.assemble(sigma_u, range);
    const Factorization fQ = symbolic_ ? Factorization(Q, symbolic_) : Factorization(Q);
    symbolic_ = fQ.symbolic_ptr();
    const double inv_var = 1.0 / (sigma_y * sigma_y);
    const SparseSymmetric Qpost = add_lower(Q.matrix(), SparseMatrix(AtA_ * inv_var));
    Factorization fP(Qpost, symbolic_);
    const auto m = static_cast<double>(obs_->size());

    Evaluation ev;
    ev.mean = fP.solve(Aty_ * inv_var);
    const double resid = (obs_->values - obs_->A * ev.mean).squaredNorm();
    const double quad = ev.mean.dot(Q.matrix() * ev.mean);
    ev.log_marginal = -0.5 * m * kLog2Pi - m * theta[2] - 0.5 * resid * inv_var + 0.5 * fQ.log_det() -
                      0.5 * quad - 0.5 * fP.log_det();
    if (keep_posterior) ev.posterior.emplace(std::move(fP));
    return ev;
  }

 private:
  PrecisionAssembler assembler_;
  const ObservationSet* obs_;
  SparseMatrix AtA_;
  Eigen::VectorXd Aty_;
  std::shared_ptr<const CholeskySymbolic> symbolic_;
};

}  // namespace

double log_marginal_gaussian(const FemMatrices& fem, std::span<const double> theta,
                             std::span<const double> fractions, const ObservationSet& obs,
                             const std::optional<PcPriors>& priors) {
  if (theta.size() != 3) throw ValidationError("theta must be (log sigma_u, log range, log sigma_y)");
  GaussianModel model(fem, fractions, obs);
  double value = model.evaluate(theta, false).log_marginal;
  if (priors) value += pc_prior_logdensity(*priors, theta);
  return value;
}

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::vector<double> x0, const NelderMeadOptions& options) {
  const std::size_t d = x0.size();
  auto eval = [&](const std::vector<double>& x) {
    const double v = f(x);
    return std::isfinite(v) ? v : kInf;
  };
  std::vector<std::vector<double>> simplex{x0};
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> x = x0;
    x[i] += options.initial_step;
    simplex.push_back(std::move(x));
  }
  std::vector<double> values;
  for (const auto& x : simplex) values.push_back(eval(x));

  NelderMeadResult res;
  std::vector<std::size_t> order(d + 1);
  for (int it = 0;; ++it) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const auto& best = simplex[order[0]];
    double diameter = 0.0;
    for (std::size_t k = 1; k <= d; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += std::pow(simplex[order[k]][i] - best[i], 2);
      diameter = std::max(diameter, std::sqrt(s));
    }
    res.trace.push_back({it, values[order[0]], best});
    res.iterations = it;
    if (diameter < options.diameter_tolerance) {
      res.converged = true;
      break;
    }
    if (it >= options.max_iterations) break;

    const std::size_t worst = order[d];
    std::vector<double> centroid(d, 0.0);
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t i = 0; i < d; ++i) centroid[i] += simplex[order[k]][i] / static_cast<double>(d);
    auto towards = [&](double coef) {
      std::vector<double> x(d);
      for (std::size_t i = 0; i < d; ++i) x[i] = centroid[i] + coef * (simplex[worst][i] - centroid[i]);
      return x;
    };
    const auto xr = towards(-1.0);
    const double fr = eval(xr);
    if (fr < values[order[0]]) {
      const auto xe = towards(-2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        values[worst] = fe;
      } else {
        simplex[worst] = xr;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[order[d - 1]]) {
      simplex[worst] = xr;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < values[worst];
    const auto xc = towards(outside ? -0.5 : 0.5);
    const double fc = eval(xc);
    if (fc < (outside ? fr : values[worst])) {
      simplex[worst] = xc;
      values[worst] = fc;
      continue;
    }
    for (std::size_t k = 1; k <= d; ++k) {
      auto& x = simplex[order[k]];
      for (std::size_t i = 0; i < d; ++i) x[i] = best[i] + 0.5 * (x[i] - best[i]);
      values[order[k]] = eval(x);
    }
  }
  res.x = simplex[order[0]];
  res.value = values[order[0]];
  return res;
}

double FitResult::sigma_u() const { return std::exp(theta.at(0)); }
double FitResult::range() const { return std::exp(theta.at(1)); }
std::optional<double> FitResult::sigma_y() const {
  if (theta.size() < 3) return std::nullopt;
  return std::exp(theta[2]);
}

FitResult fit_gaussian(const FemMatrices& fem, std::span<const double> fractions,
                       const ObservationSet& obs, const PcPriors& priors,
                       std::vector<double> init, const NelderMeadOptions& options) {
  priors.validate();
  if (init.size() != 3) throw ValidationError("initial theta must be (log sigma_u, log range, log sigma_y)");
  HyperParams{1.0, 1.0, std::vector<double>(fractions.begin(), fractions.end())}.validate(fem.k());
  GaussianModel model(fem, fractions, obs);
  auto log_post = [&](std::span<const double> theta) {
    for (double v : theta)
      if (!std::isfinite(v) || std::abs(v) > 12.0) return -kInf;
    try {
      return model.evaluate(theta, false).log_marginal + pc_prior_logdensity(priors, theta);
    } catch (const NumericalError&) {
      return -kInf;
    }
  };
  const NelderMeadResult nm = nelder_mead([&](std::span<const double> t) { return -log_post(t); }, init, options);

  FitResult fit;
  fit.fractions.assign(fractions.begin(), fractions.end());
  fit.theta_names = {"log_sigma_u", "log_range", "log_sigma_y"};
  fit.theta = nm.x;
  fit.converged = nm.converged;
  fit.iterations = nm.iterations;
  fit.trace = nm.trace;
  for (auto& step : fit.trace) step.objective = -step.objective;
  fit.log_posterior = -nm.value;
  if (!std::isfinite(fit.log_posterior)) throw NumericalError("log posterior is not finite at any simplex vertex");
  auto ev = model.evaluate(fit.theta, true);
  fit.mean = ev.mean;
  fit.sd = marginal_sd(*ev.posterior);
  laplace_summary(log_post, fit);
  return fit;
}

Eigen::VectorXd lgcp_weights(const Mesh& mesh, const SubdomainLabeling& labeling,
                             const std::set<int>& integration_labels) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Index>(mesh.n_nodes()));
  for (std::size_t t = 0; t < mesh.n_triangles(); ++t) {
    if (!integration_labels.contains(labeling.label(t))) continue;
    const double a = mesh.triangle_area(t) / 3.0;
    for (std::size_t v : mesh.triangle(t)) w[static_cast<Index>(v)] += a;
  }
  return w;
}

LgcpProblem::LgcpProblem(const Mesh& mesh, const FemMatrices& fem, const SubdomainLabeling& labeling,
                         std::span<const double> fractions, std::vector<Point> events,
                         const std::set<int>& integration_labels, const LgcpOptions& options)
    : mesh_(&mesh), assembler_(fem, fractions), events_(std::move(events)), options_(options) {
  if (integration_labels.empty()) throw ValidationError("no integration labels given");
  const PointLocator locator(mesh);
  for (std::size_t k = 0; k < events_.size(); ++k) {
    const auto bc = locator.locate(events_[k]);
    if (!bc || !integration_labels.contains(labeling.label(bc->triangle)))
      throw ValidationError("event " + std::to_string(k) + " (" + format_double(events_[k].x) + ", " +
                            format_double(events_[k].y) + ") lies outside the integration domain");
  }
  A_ = barycentric_matrix(mesh, locator, events_);
  event_counts_ = A_.transpose() * Eigen::VectorXd::Ones(A_.rows());
  weights_ = lgcp_weights(mesh, labeling, integration_labels);
}

SparseSymmetric LgcpProblem::precision(double sigma_u, double range) const {
  return assembler_.assemble(sigma_u, range);
}

double LgcpProblem::objective(double beta0, const Eigen::VectorXd& u, const SparseSymmetric& Q) const {
  const double m = static_cast<double>(events_.size());
  double integral = 0.0;
  for (Index i = 0; i < u.size(); ++i)
    if (weights_[i] > 0.0) integral += weights_[i] * std::exp(beta0 + u[i]);
  if (!std::isfinite(integral)) return -kInf;
  return m * beta0 + event_counts_.dot(u) - integral - 0.5 * u.dot(Q.matrix() * u) -
         0.5 * options_.intercept_precision * beta0 * beta0;
}

Eigen::VectorXd LgcpProblem::gradient(double beta0, const Eigen::VectorXd& u, const SparseSymmetric& Q) const {
  const Index n = u.size();
  const Eigen::VectorXd we = weights_.array() * (beta0 + u.array()).exp();
  Eigen::VectorXd g(n + 1);
  g.head(n) = event_counts_ - we - Q.matrix() * u;
  g[n] = static_cast<double>(events_.size()) - we.sum() - options_.intercept_precision * beta0;
  return g;
}

SparseSymmetric LgcpProblem::negative_hessian(double beta0, const Eigen::VectorXd& u,
                                              const SparseSymmetric& Q) const {
  const Index n = u.size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(Q.matrix().nonZeros() / 2 + 2 * n + 1));
  for (Index j = 0; j < n; ++j)
    for (SparseMatrix::InnerIterator it(Q.matrix(), j); it; ++it)
      if (it.row() >= j) trip.emplace_back(it.row(), j, it.value());
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (weights_[i] <= 0.0) continue;
    const double we = weights_[i] * std::exp(beta0 + u[i]);
    total += we;
    trip.emplace_back(i, i, we);
    trip.emplace_back(n, i, we);
  }
  trip.emplace_back(n, n, total + options_.intercept_precision);
  SparseMatrix lower(n + 1, n + 1);
  lower.setFromTriplets(trip.begin(), trip.end());
  return SparseSymmetric::from_lower(lower);
}

LgcpMode LgcpProblem::find_mode(const SparseSymmetric& Q, double beta0, Eigen::VectorXd u) const {
  const Index n = u.size();
  LgcpMode mode;
  double value = objective(beta0, u, Q);
  if (!std::isfinite(value)) {
    beta0 = 0.0;
    u.setZero();
    value = objective(beta0, u, Q);
  }
  double rel_change = kInf;
  Eigen::VectorXd g = gradient(beta0, u, Q);
  // The gradient is a difference of terms of this size, so an absolute
  // tolerance below their rounding error could never be met.
  auto small = [&](const Eigen::VectorXd& grad) {
    const Eigen::VectorXd we = weights_.array() * (beta0 + u.array()).exp();
    const double scale = std::max({1.0, event_counts_.lpNorm<Eigen::Infinity>(), we.lpNorm<Eigen::Infinity>(),
                                   (Q.matrix() * u).lpNorm<Eigen::Infinity>(), static_cast<double>(events_.size())});
    return grad.lpNorm<Eigen::Infinity>() <= options_.gradient_tolerance * scale;
  };
  for (int it = 0; it < options_.max_newton_iterations; ++it) {
    mode.iterations = it;
    if (rel_change < options_.relative_tolerance && small(g)) {
      mode.converged = true;
      break;
    }
    const Factorization H = factorize(negative_hessian(beta0, u, Q));
    const Eigen::VectorXd step = H.solve(g);
    double t = 1.0;
    bool accepted = false;
    double candidate = value;
    for (int h = 0; h <= options_.max_halvings; ++h, t *= 0.5) {
      candidate = objective(beta0 + t * step[n], u + t * step.head(n), Q);
      if (std::isfinite(candidate) && candidate >= value) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    beta0 += t * step[n];
    u += t * step.head(n);
    rel_change = std::abs(candidate - value) / (std::abs(value) + 1.0);
    value = candidate;
    g = gradient(beta0, u, Q);
  }
  if (!mode.converged && rel_change < options_.relative_tolerance && small(g))
    mode.converged = true;

  const Factorization H = factorize(negative_hessian(beta0, u, Q));
  const Factorization fQ = factorize(Q);
  mode.beta0 = beta0;
  mode.u = std::move(u);
  mode.objective = value;
  mode.gradient = std::move(g);
  mode.log_laplace = value + 0.5 * fQ.log_det() + 0.5 * std::log(options_.intercept_precision) - 0.5 * H.log_det();
  return mode;
}

FitResult fit_lgcp(const Mesh& mesh, const FemMatrices& fem, const SubdomainLabeling& labeling,
                   std::span<const double> fractions, std::vector<Point> events,
                   const PcPriors& priors, std::vector<double> init,
                   const std::set<int>& integration_labels, const LgcpOptions& options) {
  priors.validate();
  if (init.size() != 2) throw ValidationError("initial theta must be (log sigma_u, log range)");
  HyperParams{1.0, 1.0, std::vector<double>(fractions.begin(), fractions.end())}.validate(fem.k());
  const LgcpProblem problem(mesh, fem, labeling, fractions, std::move(events), integration_labels, options);
  const Index n = fem.n();
  const double area = problem.weights().sum();
  if (!(area > 0.0)) throw ValidationError("integration domain has zero area");
  const double m = static_cast<double>(problem.n_events());

  double warm_beta = std::log(std::max(m, 1.0) / area);
  Eigen::VectorXd warm_u = Eigen::VectorXd::Zero(n);
  bool all_inner_converged = true;
  auto mode_at = [&](std::span<const double> theta) {
    const SparseSymmetric Q = problem.precision(std::exp(theta[0]), std::exp(theta[1]));
    LgcpMode mode = problem.find_mode(Q, warm_beta, warm_u);
    return mode;
  };
  auto log_post = [&](std::span<const double> theta) {
    for (double v : theta)
      if (!std::isfinite(v) || std::abs(v) > 12.0) return -kInf;
    try {
      const LgcpMode mode = mode_at(theta);
      if (!mode.converged) all_inner_converged = false;
      warm_beta = mode.beta0;
      warm_u = mode.u;
      return mode.log_laplace + pc_prior_logdensity(priors, theta);
    } catch (const NumericalError&) {
      return -kInf;
    }
  };
  const NelderMeadResult nm =
      nelder_mead([&](std::span<const double> t) { return -log_post(t); }, init, options.outer);

  FitResult fit;
  fit.fractions.assign(fractions.begin(), fractions.end());
  fit.theta_names = {"log_sigma_u", "log_range"};
  fit.theta = nm.x;
  fit.converged = nm.converged;
  fit.iterations = nm.iterations;
  fit.trace = nm.trace;
  for (auto& step : fit.trace) step.objective = -step.objective;
  fit.log_posterior = -nm.value;
  if (!std::isfinite(fit.log_posterior)) throw NumericalError("Laplace objective is not finite at any simplex vertex");

  const SparseSymmetric Q = problem.precision(fit.sigma_u(), fit.range());
  const LgcpMode mode = problem.find_mode(Q, warm_beta, warm_u);
  fit.inner_converged = mode.converged && all_inner_converged;
  const Factorization H = factorize(problem.negative_hessian(mode.beta0, mode.u, Q));
  const SelectedInverse inv = H.selected_inverse();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n + 1);
  e[n] = 1.0;
  const Eigen::VectorXd col_beta = H.solve(e);
  const Eigen::VectorXd diag = inv.diagonal();
  fit.mean = (mode.u.array() + mode.beta0).matrix();
  fit.sd.resize(n);
  for (Index i = 0; i < n; ++i) fit.sd[i] = std::sqrt(std::max(0.0, diag[i] + diag[n] + 2.0 * col_beta[i]));
  fit.beta0 = mode.beta0;
  fit.beta0_sd = std::sqrt(diag[n]);

  warm_beta = mode.beta0;
  warm_u = mode.u;
  laplace_summary(log_post, fit);
  return fit;
}

std::vector<Point> simulate_events(const Mesh& mesh, const SubdomainLabeling& labeling,
                                   const Eigen::VectorXd& log_intensity,
                                   const std::set<int>& labels, RandomSource& rng) {
  if (log_intensity.size() != static_cast<Index>(mesh.n_nodes()))
    throw ValidationError("log-intensity vector does not match the mesh");
  std::vector<Point> out;
  // Thinning per triangle: the linear log-intensity peaks at a vertex.
  for (std::size_t t = 0; t < mesh.n_triangles(); ++t) {
    if (!labels.contains(labeling.label(t))) continue;
    const Triangle& tri = mesh.triangle(t);
    double peak = -kInf;
    for (std::size_t v : tri) peak = std::max(peak, log_intensity[static_cast<Index>(v)]);
    const double bound = std::exp(peak);
    std::poisson_distribution<long> count(bound * mesh.triangle_area(t));
    const long k = count(rng.engine());
    for (long j = 0; j < k; ++j) {
      double r1 = rng.uniform(), r2 = rng.uniform();
      if (r1 + r2 > 1.0) {
        r1 = 1.0 - r1;
        r2 = 1.0 - r2;
      }
      const double w0 = 1.0 - r1 - r2;
      const double eta = w0 * log_intensity[static_cast<Index>(tri[0])] +
                         r1 * log_intensity[static_cast<Index>(tri[1])] +
                         r2 * log_intensity[static_cast<Index>(tri[2])];
      if (rng.uniform() * bound > std::exp(eta)) continue;
      const Point& a = mesh.vertex(tri[0]);
      const Point& b = mesh.vertex(tri[1]);
      const Point& c = mesh.vertex(tri[2]);
      out.push_back({w0 * a.x + r1 * b.x + r2 * c.x, w0 * a.y + r1 * b.y + r2 * c.y});
    }
  }
  return out;
}

std::string fit_result_json(const FitResult& r) {
  using nlohmann::ordered_json;
  auto number = [](std::optional<double> v) -> ordered_json {
    if (v && std::isfinite(*v)) return *v;
    return nullptr;
  };
  ordered_json j;
  j["model"] = r.model;
  j["fractions"] = r.fractions;
  ordered_json theta = ordered_json::object(), sd = ordered_json::object();
  for (std::size_t i = 0; i < r.theta.size(); ++i) {
    theta[r.theta_names[i]] = r.theta[i];
    sd[r.theta_names[i]] = i < r.theta_sd.size() ? number(r.theta_sd[i]) : ordered_json(nullptr);
  }
  j["theta_map"] = theta;
  j["theta_sd"] = sd;
  ordered_json hp = ordered_json::object();
  hp["sigma_u"] = r.sigma_u();
  hp["range"] = r.range();
  if (r.sigma_y()) hp["sigma_y"] = *r.sigma_y();
  j["hyperparameters"] = hp;
  if (r.beta0) j["beta0"] = {{"mean", *r.beta0}, {"sd", number(r.beta0_sd)}};
  j["log_posterior"] = number(r.log_posterior);
  j["log_evidence"] = number(r.log_evidence);
  j["converged"] = r.converged;
  j["inner_converged"] = r.inner_converged;
  j["iterations"] = r.iterations;
  ordered_json trace = ordered_json::array();
  for (const auto& step : r.trace) trace.push_back({{"iteration", step.iteration}, {"log_posterior", number(step.objective)}, {"theta", step.theta}});
  j["trace"] = trace;
  return j.dump(2) + "\n";
}

}  // namespace tbm
