#include <doctest.h>

#include <cmath>

#include "tbm/error.hpp"
#include "tbm/transparency.hpp"

using namespace tbm;

namespace {

// Stationary field with range 1 on a coarse square mesh.
const DistCorrCurve& stationary_curve() {
  static const DistCorrCurve curve = [] {
    const Mesh mesh = generate_rect_mesh({-3, 3}, {-3, 3}, {0.125, 0.0});
    const FemMatrices fem = assemble(mesh, SubdomainLabeling::all_normal(mesh));
    const PointLocator locator(mesh);
    const auto field = correlation_from_node(assemble_Q(fem, HyperParams{1.0, 1.0, {1.0}}), mesh,
                                             nearest_node(mesh, locator, {0, 0}));
    return dist_corr_curve(field, build_projector(mesh, 150, 150, {-2.3, 2.3}, {-2.3, 2.3}));
  }();
  return curve;
}

const std::vector<double> kT{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

}  // namespace

TEST_CASE("trimming keeps a functional distance curve") {
  const SmoothingSpline s = fit_distance_spline(stationary_curve());
  CHECK(s.lower() > 0.01 - 1e-3);
  CHECK(s.upper() <= 1.0);
  CHECK(s.lower() < kRangeCorrelation);
  // Distance decreases as correlation grows.
  CHECK(eval_spline(s, 0.13) > eval_spline(s, 0.5));
  CHECK(eval_spline(s, 0.5) > eval_spline(s, 0.8));
}

TEST_CASE("at c0 = 0.13 the range fraction equals the transparency") {
  const SmoothingSpline s = fit_distance_spline(stationary_curve());
  for (double t : kT) {
    const TransparencySpec spec = calibrate(s, kRangeCorrelation, t);
    CHECK(std::abs(spec.p_b - t) <= 1e-3);
    CHECK(std::abs(spec.ratio - t) <= 1e-6);
  }
}

TEST_CASE("at c0 = 0.5 the scaling factor is close to 2 - t") {
  const SmoothingSpline s = fit_distance_spline(stationary_curve());
  for (double t : kT) {
    const TransparencySpec spec = calibrate(s, 0.5, t);
    CHECK(std::abs(spec.s - (2.0 - t)) / (2.0 - t) <= 0.10);
  }
}

TEST_CASE("range fraction increases with transparency") {
  const SmoothingSpline s = fit_distance_spline(stationary_curve());
  for (double c0 : {0.13, 0.5, 0.8}) {
    double previous = 0.0;
    for (double t : kT) {
      const TransparencySpec spec = calibrate(s, c0, t);
      CHECK(spec.p_b > previous);
      CHECK(spec.p_b <= 1.0);
      CHECK(spec.s >= 1.01);
      previous = spec.p_b;
    }
  }
}

TEST_CASE("calibration is invariant to the distance unit") {
  DistCorrCurve scaled = stationary_curve();
  for (double& d : scaled.distance) d *= 3.0;
  for (double c0 : {0.5, 0.8}) {
    const TransparencySpec a = calibrate(stationary_curve(), c0, 0.3);
    const TransparencySpec b = calibrate(scaled, c0, 0.3);
    CHECK(std::abs(a.s - b.s) <= 1e-6);
    CHECK(std::abs(a.p_b - b.p_b) <= 1e-6);
    CHECK(std::abs(a.ratio - b.ratio) <= 1e-6);
  }
}

TEST_CASE("infeasible bracket is reported with endpoint ratios") {
  const SmoothingSpline s = fit_distance_spline(stationary_curve());
  CalibrationOptions narrow;
  narrow.s_upper = 1.05;
  try {
    calibrate(s, 0.5, 0.2, narrow);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("ratio(1.01)") != std::string::npos);
  }
  CHECK_THROWS_AS(calibrate(s, 0.5, 1.2), ValidationError);
  CHECK_THROWS_AS(calibrate(s, 0.0, 0.5), ValidationError);
}

TEST_CASE("table records per-cell failures and writes CSV") {
  const SmoothingSpline s = fit_distance_spline(stationary_curve());
  const std::vector<double> c0{0.5, 1.5};
  const std::vector<double> t{0.2};
  const auto rows = transparency_table(s, c0, t);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].status == "ok");
  CHECK(rows[0].spec.has_value());
  CHECK_FALSE(rows[1].spec.has_value());
  CHECK(rows[1].status != "ok");
  const std::string csv = transparency_csv(rows);
  CHECK(csv.rfind("t,c0,s,p_b,status\n", 0) == 0);
  CHECK(csv.find("\n0.2,1.5,,,") != std::string::npos);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == 3);
  CHECK_THROWS_AS(transparency_table(s, c0, std::vector<double>{}), ValidationError);
}
