#pragma once

#include <optional>
#include <span>
#include <vector>

namespace tbm {

// Natural cubic smoothing spline. On [x_j, x_{j+1}]
//   S_j(x) = a_j + b_j (x - x_j) + c_j (x - x_j)^2 + d_j (x - x_j)^3.
struct SmoothingSpline {
  std::vector<double> knots;
  std::vector<double> a, b, c, d;  // one entry per knot; the last describes the right end
  double lambda = 0.0;
  double gcv = 0.0;  // criterion value at lambda (0 when lambda was given)

  double lower() const { return knots.front(); }
  double upper() const { return knots.back(); }
};

// Minimises sum (y_i - f(x_i))^2 + lambda * int f''^2. x values closer than
// 1e-6 times the interquartile range are merged and their y averaged. Without
// lambda, it is chosen by generalised cross-validation.
SmoothingSpline fit_smoothing_spline(std::span<const double> x, std::span<const double> y,
                                     std::optional<double> lambda = std::nullopt);

// Throws ValidationError outside [lower, upper].
double eval_spline(const SmoothingSpline& spline, double x0);
// Continues linearly beyond the end knots (the natural end conditions make
// the second derivative vanish there).
double eval_spline_extrapolated(const SmoothingSpline& spline, double x0);

double eval_spline_derivative(const SmoothingSpline& spline, double x0, int order);

// Penalised criterion of the spline against data.
double penalized_criterion(const SmoothingSpline& spline, std::span<const double> x,
                           std::span<const double> y);

}  // namespace tbm
