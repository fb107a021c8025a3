#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tbm/correlation.hpp"
#include "tbm/spline.hpp"

namespace tbm {

inline constexpr double kRangeCorrelation = 0.13;
inline constexpr double kDefaultReferenceCorrelation = 0.5;

struct CalibrationOptions {
  // Points with correlation <= min_correlation are dropped, as is everything
  // farther out than the nearest point with correlation <= tail_correlation.
  double min_correlation = 0.0;
  double tail_correlation = 0.01;
  double s_lower = 1.01;
  double s_upper = 20.0;
  double ratio_tolerance = 1e-6;
  int max_iterations = 200;
  std::optional<double> lambda;  // GCV when empty
};

// Spline of distance as a function of correlation, fitted to a trimmed
// distance-correlation curve.
SmoothingSpline fit_distance_spline(const DistCorrCurve& curve, const CalibrationOptions& options = {});

struct TransparencySpec {
  double c0 = 0.0;
  double t = 0.0;
  double s = 0.0;
  double p_b = 0.0;
  double ratio = 0.0;  // achieved distance ratio at c0
  int iterations = 0;
};

// Distance ratio at c0 between the spline scaled by s and the original.
double scaled_ratio(const SmoothingSpline& distance_spline, double s, double c0);

TransparencySpec calibrate(const SmoothingSpline& distance_spline, double c0, double t,
                           const CalibrationOptions& options = {});
TransparencySpec calibrate(const DistCorrCurve& curve, double c0, double t,
                           const CalibrationOptions& options = {});

struct TransparencyRow {
  double t = 0.0;
  double c0 = 0.0;
  std::optional<TransparencySpec> spec;
  std::string status;  // "ok" or the error message
};

// Calibrates every (c0, t) pair against one stationary correlation field
// (all range fractions 1) from the given reference node. Rows run over c0
// outermost. Cell failures are recorded in the row status.
std::vector<TransparencyRow> transparency_table(const Mesh& mesh, const FemMatrices& fem,
                                                const HyperParams& hp, std::size_t node,
                                                const Projector& projector,
                                                std::span<const double> c0_list,
                                                std::span<const double> t_list,
                                                const CalibrationOptions& options = {});

std::vector<TransparencyRow> transparency_table(const SmoothingSpline& distance_spline,
                                                std::span<const double> c0_list,
                                                std::span<const double> t_list,
                                                const CalibrationOptions& options = {});

// Header `t,c0,s,p_b,status`.
std::string transparency_csv(std::span<const TransparencyRow> rows);

}  // namespace tbm
