// Post-processing: energy integrals of a field, log-log decay-rate fits,
// and error metrics between a field and a reference (grid solution or
// analytic formula).
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "wavekin/fvs.hpp"

namespace wavekin::analysis {

/// Midpoint-rule integral of field(t, x) over x in [0, R].
template <class F>
double total_energy(F&& field, double t, double R, int n_cells = 2048) {
  if (!(R > 0) || n_cells < 1)
    throw std::invalid_argument("total_energy: need R > 0 and n_cells >= 1");
  const double h = R / n_cells;
  double acc = 0.0;
  for (int i = 0; i < n_cells; ++i)
    acc += field(t, h * (static_cast<double>(i) + 0.5));
  return acc * h;
}

struct EnergySeries {
  std::vector<double> t;
  std::vector<double> e;
};

template <class F>
EnergySeries energy_series(F&& field, std::span<const double> times, double R,
                           int n_cells = 2048) {
  EnergySeries s;
  s.t.assign(times.begin(), times.end());
  s.e.reserve(times.size());
  for (double t : times) s.e.push_back(total_energy(field, t, R, n_cells));
  return s;
}

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t n_points = 0;
};

/// Least-squares fit of log e = slope log t + intercept over the window
/// t in [t_min, t_max].  Points with non-positive t or e are skipped.
inline SlopeFit decay_slope(std::span<const double> t, std::span<const double> e,
                            double t_min, double t_max) {
  if (t.size() != e.size())
    throw std::invalid_argument("decay_slope: size mismatch");
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_min || t[i] > t_max || t[i] <= 0 || e[i] <= 0) continue;
    const double x = std::log(t[i]), y = std::log(e[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
    ++n;
  }
  if (n < 2) throw std::invalid_argument("decay_slope: fewer than 2 points in window");
  const double nd = static_cast<double>(n);
  const double vxx = sxx - sx * sx / nd;
  const double vyy = syy - sy * sy / nd;
  const double vxy = sxy - sx * sy / nd;
  if (vxx == 0.0) throw std::invalid_argument("decay_slope: degenerate abscissa");
  SlopeFit fit;
  fit.slope = vxy / vxx;
  fit.intercept = (sy - fit.slope * sx) / nd;
  fit.r2 = vyy == 0.0 ? 1.0 : (vxy * vxy) / (vxx * vyy);
  fit.n_points = n;
  return fit;
}

/// max_i |field(t, x_i) - reference(t, x_i)| over the given abscissas.
template <class F, class G>
double sup_error(F&& field, G&& reference, double t, std::span<const double> xs) {
  double worst = 0.0;
  for (double x : xs)
    worst = std::max(worst, std::abs(field(t, x) - reference(t, x)));
  return worst;
}

/// Uniformly spaced abscissas a + (i + 1/2) (b - a) / n, i = 0..n-1.
inline std::vector<double> midpoints(double a, double b, int n) {
  std::vector<double> xs(static_cast<std::size_t>(n));
  const double h = (b - a) / n;
  for (int i = 0; i < n; ++i)
    xs[static_cast<std::size_t>(i)] = a + h * (static_cast<double>(i) + 0.5);
  return xs;
}

/// Piecewise-linear interpolation of (xs, ys) at x, clamped to the end
/// values outside the abscissa range.  xs must be strictly increasing.
inline double interp_linear(std::span<const double> xs, std::span<const double> ys,
                            double x) {
  if (xs.size() != ys.size() || xs.empty())
    throw std::invalid_argument("interp_linear: bad table");
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  const double u = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + u * (ys[hi] - ys[lo]);
}

/// Relative L2 distance between field(t, .) and a grid solution, both
/// sampled at the cell pivots with the cell widths as quadrature weights.
template <class F>
double rel_l2_error(F&& field, double t, const fvs::Grid& grid,
                    std::span<const double> state) {
  if (state.size() != grid.cells())
    throw std::invalid_argument("rel_l2_error: state size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < grid.cells(); ++i) {
    const double d = field(t, grid.pivot[i]) - state[i];
    num += grid.dp[i] * d * d;
    den += grid.dp[i] * state[i] * state[i];
  }
  if (den == 0.0) throw std::invalid_argument("rel_l2_error: zero reference");
  return std::sqrt(num / den);
}

}  // namespace wavekin::analysis
