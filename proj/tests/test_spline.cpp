#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "tbm/error.hpp"
#include "tbm/spline.hpp"

using namespace tbm;

namespace {

struct Sample {
  std::vector<double> x, y;
};

Sample noisy_sine(std::size_t n, std::uint64_t seed, double noise = 0.1) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> e(0.0, noise);
  Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u(gen);
    s.x.push_back(x);
    s.y.push_back(std::sin(6.0 * x) + e(gen));
  }
  return s;
}

// Evaluates segment j directly from its coefficients.
double segment_value(const SmoothingSpline& s, std::size_t j, double x, int order) {
  const double t = x - s.knots[j];
  switch (order) {
    case 0: return s.a[j] + s.b[j] * t + s.c[j] * std::pow(t, 2) + s.d[j] * std::pow(t, 3);
    case 1: return s.b[j] + 2.0 * s.c[j] * t + 3.0 * s.d[j] * std::pow(t, 2);
    default: return 2.0 * s.c[j] + 6.0 * s.d[j] * t;
  }
}

// Dense smoother and GCV for distinct, sorted x.
double dense_gcv(const std::vector<double>& x, const std::vector<double>& y, double lambda) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n - 2), R = Eigen::MatrixXd::Zero(n - 2, n - 2);
  for (Eigen::Index j = 1; j + 1 < n; ++j) {
    const double h0 = x[j] - x[j - 1], h1 = x[j + 1] - x[j];
    Q(j - 1, j - 1) = 1.0 / h0;
    Q(j, j - 1) = -1.0 / h0 - 1.0 / h1;
    Q(j + 1, j - 1) = 1.0 / h1;
    R(j - 1, j - 1) = (h0 + h1) / 3.0;
    if (j + 1 < n - 1) R(j - 1, j) = R(j, j - 1) = h1 / 6.0;
  }
  const Eigen::MatrixXd K = Q * R.inverse() * Q.transpose();
  const Eigen::MatrixXd S = (Eigen::MatrixXd::Identity(n, n) + lambda * K).inverse();
  const Eigen::VectorXd yy = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  const double rss = (yy - S * yy).squaredNorm();
  const double denom = 1.0 - S.trace() / static_cast<double>(n);
  return rss / static_cast<double>(n) / (denom * denom);
}

}  // namespace

TEST_CASE("linear data is reproduced for any smoothing") {
  std::vector<double> x{0.0, 0.3, 0.35, 1.0, 1.7, 2.0, 3.5};
  std::vector<double> y;
  for (double v : x) y.push_back(2.0 * v - 1.0);
  for (std::optional<double> lambda : {std::optional<double>(0.0), std::optional<double>(1.0),
                                       std::optional<double>(1e6), std::optional<double>()}) {
    const SmoothingSpline s = fit_smoothing_spline(x, y, lambda);
    for (double v : {0.0, 0.15, 0.325, 1.35, 2.75, 3.5}) CHECK(std::abs(eval_spline(s, v) - (2.0 * v - 1.0)) < 1e-8);
  }
}

TEST_CASE("lambda zero interpolates") {
  const Sample d = noisy_sine(40, 1);
  const SmoothingSpline s = fit_smoothing_spline(d.x, d.y, 0.0);
  for (std::size_t i = 0; i < d.x.size(); ++i) CHECK(std::abs(eval_spline(s, d.x[i]) - d.y[i]) <= 1e-8);
}

TEST_CASE("very large lambda approaches the least-squares line") {
  const Sample d = noisy_sine(60, 2);
  const double n = static_cast<double>(d.x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    sx += d.x[i];
    sy += d.y[i];
    sxx += d.x[i] * d.x[i];
    sxy += d.x[i] * d.y[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  const SmoothingSpline s = fit_smoothing_spline(d.x, d.y, 1e10);
  const double x0 = s.lower();
  CHECK(std::abs(eval_spline_derivative(s, 0.5, 1) - slope) < 1e-3);
  CHECK(std::abs(eval_spline(s, x0) - (intercept + slope * x0)) < 1e-3);
}

TEST_CASE("continuity and natural end conditions") {
  const Sample d = noisy_sine(50, 3);
  const SmoothingSpline s = fit_smoothing_spline(d.x, d.y);
  const std::size_t n = s.knots.size();
  for (std::size_t j = 0; j + 2 < n; ++j) {
    const double xk = s.knots[j + 1];
    for (int order = 0; order < 3; ++order)
      CHECK(std::abs(segment_value(s, j, xk, order) - segment_value(s, j + 1, xk, order)) <= 1e-8);
  }
  CHECK(std::abs(segment_value(s, 0, s.knots[0], 2)) <= 1e-12);
  CHECK(std::abs(segment_value(s, n - 2, s.knots[n - 1], 2)) <= 1e-8);
}

TEST_CASE("evaluation agrees with direct coefficient evaluation") {
  const Sample d = noisy_sine(30, 4);
  const SmoothingSpline s = fit_smoothing_spline(d.x, d.y, 1e-4);
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(s.lower(), s.upper());
  for (int k = 0; k < 100; ++k) {
    const double x0 = u(gen);
    std::size_t j = 0;
    while (j + 2 < s.knots.size() && s.knots[j + 1] <= x0) ++j;
    CHECK(std::abs(eval_spline(s, x0) - segment_value(s, j, x0, 0)) <= 1e-10);
  }
  CHECK(eval_spline(s, s.knots[3]) == doctest::Approx(s.a[3]).epsilon(1e-14));
  CHECK_THROWS_AS(eval_spline(s, s.upper() + 1e-9), ValidationError);
  CHECK_THROWS_AS(eval_spline(s, s.lower() - 1e-9), ValidationError);
  // Linear continuation outside the knot range.
  const double slope = eval_spline_derivative(s, s.upper(), 1);
  CHECK(eval_spline_extrapolated(s, s.upper() + 0.5) ==
        doctest::Approx(eval_spline(s, s.upper()) + 0.5 * slope).epsilon(1e-12));
}

TEST_CASE("fitted spline is a local minimiser of the criterion") {
  const Sample d = noisy_sine(25, 5);
  const SmoothingSpline s = fit_smoothing_spline(d.x, d.y, 1e-3);
  const double J = penalized_criterion(s, d.x, d.y);
  // Any spline is determined by its knot values; perturb them one at a time.
  for (std::size_t i = 0; i < s.knots.size(); ++i)
    for (double delta : {1e-4, -1e-4}) {
      std::vector<double> values = s.a;
      values[i] += delta;
      SmoothingSpline moved = fit_smoothing_spline(s.knots, values, 0.0);
      moved.lambda = s.lambda;
      CHECK(penalized_criterion(moved, d.x, d.y) >= J - 1e-12);
    }
}

TEST_CASE("GCV selection agrees with a dense smoother") {
  Sample d = noisy_sine(30, 6, 0.2);
  std::vector<std::size_t> order(d.x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d.x[a] < d.x[b]; });
  std::vector<double> xs, ys;
  for (std::size_t i : order) {
    xs.push_back(d.x[i]);
    ys.push_back(d.y[i]);
  }
  const SmoothingSpline s = fit_smoothing_spline(xs, ys);
  CHECK(s.gcv == doctest::Approx(dense_gcv(xs, ys, s.lambda)).epsilon(1e-8));
  const double log_l = std::log10(s.lambda);
  for (double step = -2.0; step <= 2.0; step += 0.05)
    CHECK(dense_gcv(xs, ys, std::pow(10.0, log_l + step)) >= s.gcv * (1.0 - 1e-6));
}

TEST_CASE("tied x values are averaged") {
  const std::vector<double> x{0, 1, 1, 2, 3, 4, 4, 4};
  const std::vector<double> y{0, 1, 3, 1, 0, 2, 4, 6};
  const SmoothingSpline tied = fit_smoothing_spline(x, y, 0.1);
  const SmoothingSpline averaged = fit_smoothing_spline(std::vector<double>{0, 1, 2, 3, 4},
                                                        std::vector<double>{0, 2, 1, 0, 4}, 0.1);
  REQUIRE(tied.knots.size() == 5);
  for (double v : {0.0, 0.5, 1.7, 3.9}) CHECK(eval_spline(tied, v) == doctest::Approx(eval_spline(averaged, v)));
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(fit_smoothing_spline(std::vector<double>{0, 1, 2}, std::vector<double>{0, 1, 2}), ValidationError);
  CHECK_THROWS_AS(fit_smoothing_spline(std::vector<double>{0, 1, 1, 2}, std::vector<double>{0, 1, 2, 3}), ValidationError);
  CHECK_THROWS_AS(fit_smoothing_spline(std::vector<double>{0, 1, NAN, 2, 3}, std::vector<double>{0, 1, 2, 3, 4}), ValidationError);
  CHECK_THROWS_AS(fit_smoothing_spline(std::vector<double>{0, 1, 2, 3}, std::vector<double>{0, 1, 2}), ValidationError);
  CHECK_THROWS_AS(fit_smoothing_spline(std::vector<double>{0, 1, 2, 3}, std::vector<double>{0, 1, 2, 3}, -1.0), ValidationError);
}
