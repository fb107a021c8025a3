#include "tbm/transparency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tbm/error.hpp"
#include "tbm/io.hpp"

namespace tbm {

SmoothingSpline fit_distance_spline(const DistCorrCurve& curve, const CalibrationOptions& options) {
  double cutoff = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < curve.size(); ++i)
    if (curve.correlation[i] <= options.tail_correlation) cutoff = std::min(cutoff, curve.distance[i]);
  std::vector<double> corr, dist;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve.correlation[i] <= options.min_correlation || curve.distance[i] > cutoff) continue;
    corr.push_back(curve.correlation[i]);
    dist.push_back(curve.distance[i]);
  }
  return fit_smoothing_spline(corr, dist, options.lambda);
}

double scaled_ratio(const SmoothingSpline& spline, double s, double c0) {
  return eval_spline_extrapolated(spline, s * c0) / eval_spline(spline, c0);
}

TransparencySpec calibrate(const SmoothingSpline& spline, double c0, double t,
                           const CalibrationOptions& options) {
  if (!(c0 > 0.0 && c0 < 1.0)) throw ValidationError("c0 must lie in (0, 1)");
  if (!(t > 0.0 && t < 1.0)) throw ValidationError("t must lie in (0, 1)");
  if (c0 < spline.lower() || c0 > spline.upper() || kRangeCorrelation < spline.lower())
    throw ValidationError("correlation " + format_double(std::min(c0, kRangeCorrelation)) +
                          " lies outside the fitted curve [" + format_double(spline.lower()) + ", " +
                          format_double(spline.upper()) + "]");

  auto f = [&](double s) { return scaled_ratio(spline, s, c0) - t; };
  double lo = options.s_lower, hi = options.s_upper;
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) hi = lo;
  if (fhi == 0.0) lo = hi;
  if ((flo > 0.0) == (fhi > 0.0) && flo != 0.0 && fhi != 0.0)
    throw NumericalError("no sign change for s in [" + format_double(lo) + ", " + format_double(hi) +
                         "]: ratio(" + format_double(lo) + ") = " + format_double(flo + t) +
                         ", ratio(" + format_double(hi) + ") = " + format_double(fhi + t));
  int it = 0;
  double mid = 0.5 * (lo + hi), fmid = f(mid);
  while (std::abs(fmid) > options.ratio_tolerance) {
    if (++it > options.max_iterations)
      throw NumericalError("bisection did not converge after " + std::to_string(options.max_iterations) +
                           " iterations");
    if ((fmid > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
    }
    mid = 0.5 * (lo + hi);
    fmid = f(mid);
  }
  TransparencySpec spec;
  spec.c0 = c0;
  spec.t = t;
  spec.s = mid;
  spec.ratio = fmid + t;
  spec.iterations = it;
  spec.p_b = scaled_ratio(spline, mid, kRangeCorrelation);
  return spec;
}

TransparencySpec calibrate(const DistCorrCurve& curve, double c0, double t,
                           const CalibrationOptions& options) {
  return calibrate(fit_distance_spline(curve, options), c0, t, options);
}

std::vector<TransparencyRow> transparency_table(const SmoothingSpline& spline,
                                                std::span<const double> c0_list,
                                                std::span<const double> t_list,
                                                const CalibrationOptions& options) {
  if (c0_list.empty()) throw ValidationError("c0 list is empty");
  if (t_list.empty()) throw ValidationError("t list is empty");
  std::vector<TransparencyRow> rows;
  for (double c0 : c0_list)
    for (double t : t_list) {
      TransparencyRow row{t, c0, std::nullopt, "ok"};
      try {
        row.spec = calibrate(spline, c0, t, options);
      } catch (const Error& e) {
        row.status = e.what();
      }
      rows.push_back(std::move(row));
    }
  return rows;
}

std::vector<TransparencyRow> transparency_table(const Mesh& mesh, const FemMatrices& fem,
                                                const HyperParams& hp, std::size_t node,
                                                const Projector& projector,
                                                std::span<const double> c0_list,
                                                std::span<const double> t_list,
                                                const CalibrationOptions& options) {
  if (c0_list.empty()) throw ValidationError("c0 list is empty");
  if (t_list.empty()) throw ValidationError("t list is empty");
  const HyperParams stationary{hp.sigma_u, hp.range, stationary_fractions(fem.k())};
  const CorrelationField field = correlation_from_node(assemble_Q(fem, stationary), mesh, node);
  const SmoothingSpline spline = fit_distance_spline(dist_corr_curve(field, projector), options);
  return transparency_table(spline, c0_list, t_list, options);
}

std::string transparency_csv(std::span<const TransparencyRow> rows) {
  std::string out = "t,c0,s,p_b,status\n";
  for (const auto& row : rows) {
    out += format_double(row.t) + "," + format_double(row.c0) + ",";
    if (row.spec) out += format_double(row.spec->s) + "," + format_double(row.spec->p_b);
    else out += ",";
    std::string status = row.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out += "," + status + "\n";
  }
  return out;
}

}  // namespace tbm
