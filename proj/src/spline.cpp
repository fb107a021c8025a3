#include "tbm/spline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tbm/error.hpp"
#include "tbm/io.hpp"

namespace tbm {

namespace {

struct Data {
  std::vector<double> x;
  std::vector<double> y;
};

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Data merge_ties(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw ValidationError("x and y have different lengths (" + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()) + ")");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw ValidationError("non-finite value at position " + std::to_string(i));
  if (x.size() < 4) throw ValidationError("at least 4 distinct x values are required");

  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> sorted(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) sorted[i] = x[idx[i]];
  double spread = quantile(sorted, 0.75) - quantile(sorted, 0.25);
  if (!(spread > 0.0)) spread = sorted.back() - sorted.front();
  const double tol = 1e-6 * spread;
  const double centre = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());

  Data out;
  long long current = 0;
  double sx = 0.0, sy = 0.0;
  std::size_t count = 0;
  auto flush = [&] {
    if (count == 0) return;
    out.x.push_back(sx / static_cast<double>(count));
    out.y.push_back(sy / static_cast<double>(count));
  };
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const long long key = tol > 0.0 ? std::llround((x[idx[i]] - centre) / tol) : 0;
    if (count > 0 && key != current) {
      flush();
      sx = sy = 0.0;
      count = 0;
    }
    current = key;
    sx += x[idx[i]];
    sy += y[idx[i]];
    ++count;
  }
  flush();
  if (out.x.size() < 4)
    throw ValidationError("at least 4 distinct x values are required, got " + std::to_string(out.x.size()));
  return out;
}

// Symmetric pentadiagonal matrix by its three nonzero diagonals.
struct Band {
  std::vector<double> d0, d1, d2;
  explicit Band(std::size_t m) : d0(m, 0.0), d1(m, 0.0), d2(m, 0.0) {}
};

// Building blocks of the Reinsch form: Q (n x m, m = n - 2) and R (m x m).
struct Reinsch {
  std::vector<double> h;
  std::vector<double> qa, qb, qc;  // column j of Q has rows j, j+1, j+2
  Band R{0};
  Band QtQ{0};
  std::vector<double> Qty;

  explicit Reinsch(const Data& data) {
    const std::size_t n = data.x.size(), m = n - 2;
    h.resize(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) h[i] = data.x[i + 1] - data.x[i];
    qa.resize(m);
    qb.resize(m);
    qc.resize(m);
    R = Band(m);
    QtQ = Band(m);
    Qty.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      qa[j] = 1.0 / h[j];
      qc[j] = 1.0 / h[j + 1];
      qb[j] = -qa[j] - qc[j];
      R.d0[j] = (h[j] + h[j + 1]) / 3.0;
      if (j + 1 < m) R.d1[j] = h[j + 1] / 6.0;
      Qty[j] = qa[j] * data.y[j] + qb[j] * data.y[j + 1] + qc[j] * data.y[j + 2];
    }
    for (std::size_t j = 0; j < m; ++j) {
      QtQ.d0[j] = qa[j] * qa[j] + qb[j] * qb[j] + qc[j] * qc[j];
      if (j + 1 < m) QtQ.d1[j] = qb[j] * qa[j + 1] + qc[j] * qb[j + 1];
      if (j + 2 < m) QtQ.d2[j] = qc[j] * qa[j + 2];
    }
  }

  std::vector<double> Q_times(const std::vector<double>& gamma) const {
    std::vector<double> out(h.size() + 1, 0.0);
    for (std::size_t j = 0; j < gamma.size(); ++j) {
      out[j] += qa[j] * gamma[j];
      out[j + 1] += qb[j] * gamma[j];
      out[j + 2] += qc[j] * gamma[j];
    }
    return out;
  }
};

// B = L D L^T with unit lower L of bandwidth 2.
struct BandLdl {
  std::vector<double> D, l1, l2;

  explicit BandLdl(const Band& B) {
    const std::size_t m = B.d0.size();
    D.assign(m, 0.0);
    l1.assign(m, 0.0);
    l2.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      double di = B.d0[i];
      if (i >= 1) di -= l1[i - 1] * l1[i - 1] * D[i - 1];
      if (i >= 2) di -= l2[i - 2] * l2[i - 2] * D[i - 2];
      if (!(di > 0.0)) throw NumericalError("smoothing system is not positive definite");
      D[i] = di;
      double off = B.d1[i];
      if (i >= 1) off -= l2[i - 1] * l1[i - 1] * D[i - 1];
      l1[i] = off / di;
      l2[i] = B.d2[i] / di;
    }
  }

  std::vector<double> solve(std::vector<double> r) const {
    const std::size_t m = D.size();
    for (std::size_t i = 0; i < m; ++i) {
      if (i >= 1) r[i] -= l1[i - 1] * r[i - 1];
      if (i >= 2) r[i] -= l2[i - 2] * r[i - 2];
    }
    for (std::size_t i = 0; i < m; ++i) r[i] /= D[i];
    for (std::size_t k = m; k-- > 0;) {
      if (k + 1 < m) r[k] -= l1[k] * r[k + 1];
      if (k + 2 < m) r[k] -= l2[k] * r[k + 2];
    }
    return r;
  }

  // Entries of B^{-1} within the band.
  Band inverse_band() const {
    const std::size_t m = D.size();
    Band S(m);
    for (std::size_t k = m; k-- > 0;) {
      const double s11 = k + 1 < m ? S.d0[k + 1] : 0.0;
      const double s12 = k + 2 < m ? S.d1[k + 1] : 0.0;
      const double s22 = k + 2 < m ? S.d0[k + 2] : 0.0;
      if (k + 2 < m) S.d2[k] = -l1[k] * s12 - l2[k] * s22;
      if (k + 1 < m) S.d1[k] = -l1[k] * s11 - l2[k] * s12;
      S.d0[k] = 1.0 / D[k] - l1[k] * S.d1[k] - l2[k] * S.d2[k];
    }
    return S;
  }
};

struct FitState {
  std::vector<double> gamma;  // interior second derivatives
  std::vector<double> g;      // fitted values
  double rss = 0.0;
  double trace_residual = 0.0;  // tr(I - S)
};

FitState fit_at(const Data& data, const Reinsch& rs, double lambda, bool with_trace) {
  const std::size_t m = rs.Qty.size();
  Band B(m);
  for (std::size_t j = 0; j < m; ++j) {
    B.d0[j] = rs.R.d0[j] + lambda * rs.QtQ.d0[j];
    B.d1[j] = rs.R.d1[j] + lambda * rs.QtQ.d1[j];
    B.d2[j] = lambda * rs.QtQ.d2[j];
  }
  const BandLdl ldl(B);
  FitState st;
  st.gamma = ldl.solve(rs.Qty);
  const std::vector<double> Qg = rs.Q_times(st.gamma);
  st.g.resize(data.y.size());
  for (std::size_t i = 0; i < data.y.size(); ++i) {
    st.g[i] = data.y[i] - lambda * Qg[i];
    const double r = data.y[i] - st.g[i];
    st.rss += r * r;
  }
  if (with_trace) {
    const Band S = ldl.inverse_band();
    double tr = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      tr += S.d0[j] * rs.QtQ.d0[j] + 2.0 * S.d1[j] * rs.QtQ.d1[j] + 2.0 * S.d2[j] * rs.QtQ.d2[j];
    st.trace_residual = lambda * tr;
  }
  return st;
}

double gcv_score(const FitState& st, std::size_t n) {
  const double nn = static_cast<double>(n);
  const double denom = st.trace_residual / nn;
  return (st.rss / nn) / (denom * denom);
}

SmoothingSpline build(const Data& data, const FitState& st, double lambda) {
  const std::size_t n = data.x.size();
  std::vector<double> gam(n, 0.0);
  for (std::size_t j = 0; j < st.gamma.size(); ++j) gam[j + 1] = st.gamma[j];
  SmoothingSpline s;
  s.knots = data.x;
  s.lambda = lambda;
  s.a = st.g;
  s.b.assign(n, 0.0);
  s.c.assign(n, 0.0);
  s.d.assign(n, 0.0);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const double h = data.x[j + 1] - data.x[j];
    s.c[j] = gam[j] / 2.0;
    s.d[j] = (gam[j + 1] - gam[j]) / (6.0 * h);
    s.b[j] = (st.g[j + 1] - st.g[j]) / h - h * (2.0 * gam[j] + gam[j + 1]) / 6.0;
  }
  // Right end: slope of the last segment at its end, zero curvature.
  const double h = data.x[n - 1] - data.x[n - 2];
  s.b[n - 1] = s.b[n - 2] + 2.0 * s.c[n - 2] * h + 3.0 * s.d[n - 2] * h * h;
  return s;
}

std::size_t segment(const SmoothingSpline& s, double x0) {
  const auto it = std::upper_bound(s.knots.begin(), s.knots.end(), x0);
  if (it == s.knots.begin()) return 0;
  return std::min(static_cast<std::size_t>(it - s.knots.begin()) - 1, s.knots.size() - 2);
}

}  // namespace

SmoothingSpline fit_smoothing_spline(std::span<const double> x, std::span<const double> y,
                                     std::optional<double> lambda) {
  const Data data = merge_ties(x, y);
  const Reinsch rs(data);
  if (lambda) {
    if (!(*lambda >= 0.0) || !std::isfinite(*lambda))
      throw ValidationError("smoothing parameter must be finite and nonnegative");
    return build(data, fit_at(data, rs, *lambda, false), *lambda);
  }

  // GCV over lambda = scale * 10^rho, coarse grid then golden section.
  double trR = 0.0, trQ = 0.0;
  for (std::size_t j = 0; j < rs.Qty.size(); ++j) {
    trR += rs.R.d0[j];
    trQ += rs.QtQ.d0[j];
  }
  const double scale = trR / trQ;
  const std::size_t n = data.x.size();
  auto score = [&](double rho) {
    return gcv_score(fit_at(data, rs, scale * std::pow(10.0, rho), true), n);
  };
  const double lo = -10.0, hi = 8.0, step = 0.25;
  double best_rho = lo, best = score(lo);
  for (double rho = lo + step; rho <= hi + 1e-12; rho += step) {
    const double v = score(rho);
    if (v < best) {
      best = v;
      best_rho = rho;
    }
  }
  double a = std::max(lo, best_rho - step), b = std::min(hi, best_rho + step);
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = score(c), fd = score(d);
  while (b - a > 1e-4) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = score(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = score(d);
    }
  }
  double rho = 0.5 * (a + b);
  double v = score(rho);
  if (best < v) {
    rho = best_rho;
    v = best;
  }
  const double chosen = scale * std::pow(10.0, rho);
  SmoothingSpline s = build(data, fit_at(data, rs, chosen, false), chosen);
  s.gcv = v;
  return s;
}

double eval_spline_extrapolated(const SmoothingSpline& s, double x0) {
  if (x0 < s.lower()) return s.a.front() + s.b.front() * (x0 - s.lower());
  if (x0 > s.upper()) return s.a.back() + s.b.back() * (x0 - s.upper());
  const std::size_t j = segment(s, x0);
  const double t = x0 - s.knots[j];
  return s.a[j] + t * (s.b[j] + t * (s.c[j] + t * s.d[j]));
}

double eval_spline(const SmoothingSpline& s, double x0) {
  if (!(x0 >= s.lower() && x0 <= s.upper()))
    throw ValidationError("x0 = " + format_double(x0) + " is outside the knot range [" +
                          format_double(s.lower()) + ", " + format_double(s.upper()) + "]");
  return eval_spline_extrapolated(s, x0);
}

double eval_spline_derivative(const SmoothingSpline& s, double x0, int order) {
  if (!(x0 >= s.lower() && x0 <= s.upper()))
    throw ValidationError("x0 = " + format_double(x0) + " is outside the knot range");
  const std::size_t j = segment(s, x0);
  const double t = x0 - s.knots[j];
  switch (order) {
    case 0: return eval_spline(s, x0);
    case 1: return s.b[j] + t * (2.0 * s.c[j] + 3.0 * t * s.d[j]);
    case 2: return 2.0 * s.c[j] + 6.0 * s.d[j] * t;
    case 3: return 6.0 * s.d[j];
    default: throw ValidationError("derivative order must be between 0 and 3");
  }
}

double penalized_criterion(const SmoothingSpline& s, std::span<const double> x,
                           std::span<const double> y) {
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - eval_spline(s, x[i]);
    rss += r * r;
  }
  double roughness = 0.0;
  for (std::size_t j = 0; j + 1 < s.knots.size(); ++j) {
    const double h = s.knots[j + 1] - s.knots[j];
    roughness += 4.0 * s.c[j] * s.c[j] * h + 12.0 * s.c[j] * s.d[j] * h * h +
                 12.0 * s.d[j] * s.d[j] * h * h * h;
  }
  return rss + s.lambda * roughness;
}

}  // namespace tbm
