// Explicit finite-volume scheme for the conservative 3-wave kinetic
// equation on [0, R]: truncated-domain grid, midpoint projection of the
// initial data, flux assembly and time stepping.  Used as the reference
// solver against which the network field is compared.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace wavekin::fvs {

/// Cell grid with faces at i h, except the last face which is pinned to R.
/// When R is an integer multiple of h the grid is uniform and the support
/// predicate in the fluxes reduces to exact integer arithmetic.
struct Grid {
  double h = 0.0;
  double R = 0.0;
  bool uniform = true;
  std::vector<double> face;   // size M + 1, face[0] = 0, face[M] = R
  std::vector<double> pivot;  // size M, cell midpoints
  std::vector<double> dp;     // size M, cell widths

  std::size_t cells() const { return pivot.size(); }
};

inline Grid build_grid(double h, double R) {
  if (!(h > 0) || !(R > 0) || h > R)
    throw std::invalid_argument("build_grid: need 0 < h <= R");
  Grid g;
  g.h = h;
  g.R = R;
  const double ratio = R / h;
  const double rounded = std::round(ratio);
  std::size_t M;
  if (std::abs(ratio - rounded) < 1e-9 * std::max(1.0, ratio) && rounded >= 1) {
    M = static_cast<std::size_t>(rounded);
    g.uniform = true;
  } else {
    M = static_cast<std::size_t>(std::ceil(ratio));
    g.uniform = false;
  }
  g.face.resize(M + 1);
  for (std::size_t i = 0; i < M; ++i) g.face[i] = static_cast<double>(i) * h;
  g.face[M] = R;
  g.pivot.resize(M);
  g.dp.resize(M);
  for (std::size_t i = 0; i < M; ++i) {
    g.pivot[i] = 0.5 * (g.face[i] + g.face[i + 1]);
    g.dp[i] = g.face[i + 1] - g.face[i];
  }
  return g;
}

/// Midpoint-rule projection of a pointwise initial condition onto the grid.
template <class F>
std::vector<double> project_initial(const Grid& grid, F&& g0) {
  std::vector<double> state(grid.cells());
  for (std::size_t i = 0; i < grid.cells(); ++i) state[i] = g0(grid.pivot[i]);
  return state;
}

namespace detail {

inline double pow_or_one(double x, double e) {
  return e == 0.0 ? 1.0 : std::pow(x, e);
}

// Cell weights w_i = dp_i g_i p_i^{gamma/2 - 1}: the kernel factor
// (p_m p_j)^{gamma/2} split per index together with the 1/p of g/p and
// the midpoint measure.
inline Eigen::VectorXd cell_weights(const Grid& grid,
                                    const std::vector<double>& state,
                                    double gamma) {
  const std::size_t M = grid.cells();
  Eigen::VectorXd w(M);
  for (std::size_t i = 0; i < M; ++i)
    w[static_cast<Eigen::Index>(i)] =
        grid.dp[i] * state[i] * pow_or_one(grid.pivot[i], gamma / 2.0 - 1.0);
  return w;
}

// The support indicator chi{face_f < p_m + p_j} realized so that fast and
// naive assembly agree at ties: exact integer comparison on uniform grids,
// the literal pivot comparison otherwise.
inline bool chi(const Grid& grid, std::size_t f, std::size_t m, std::size_t j) {
  if (grid.uniform) return m + j + 1 > f;
  return grid.pivot[j] > grid.face[f] - grid.pivot[m];
}

}  // namespace detail

/// Net flux F(f) = -2 Q1(f) + Q2(f) at every face, by direct summation.
/// Both partial sums restrict the first index to cells below the face
/// (p_m < p_{f}), matching the rewritten collision integral where p_1 < p;
/// Q1 additionally restricts the second index while Q2 ranges over the
/// whole grid.  Reference implementation, O(M^3) over all faces.
inline Eigen::VectorXd fluxes_naive(const Grid& grid,
                                    const std::vector<double>& state,
                                    double gamma) {
  const std::size_t M = grid.cells();
  const Eigen::VectorXd w = detail::cell_weights(grid, state, gamma);
  Eigen::VectorXd F(M + 1);
  for (std::size_t f = 0; f <= M; ++f) {
    double q1 = 0.0, q2 = 0.0;
    for (std::size_t m = 0; m < f; ++m) {
      for (std::size_t j = 0; j < M; ++j) {
        if (!detail::chi(grid, f, m, j)) continue;
        const double term = w[static_cast<Eigen::Index>(m)] *
                            w[static_cast<Eigen::Index>(j)];
        q2 += term;
        if (j < f) q1 += term;
      }
    }
    F[static_cast<Eigen::Index>(f)] = -2.0 * q1 + q2;
  }
  return F;
}

/// Same fluxes via prefix sums.  On uniform grids the indicator becomes
/// j >= f - m, which turns both partial sums into convolutions with the
/// weight prefix: Q1(f) = P(f)^2 - C(f) and Q2(f) = P(f) W - C(f) with
/// C(f) = sum_{m<f} w_m P(f-m).  On truncated grids a two-pointer sweep
/// over the sorted pivots gives the same O(M) cost per face.
inline Eigen::VectorXd fluxes(const Grid& grid, const std::vector<double>& state,
                              double gamma) {
  const std::size_t M = grid.cells();
  const Eigen::VectorXd w = detail::cell_weights(grid, state, gamma);
  Eigen::VectorXd P(M + 1);
  P[0] = 0.0;
  for (std::size_t k = 0; k < M; ++k)
    P[static_cast<Eigen::Index>(k + 1)] =
        P[static_cast<Eigen::Index>(k)] + w[static_cast<Eigen::Index>(k)];
  const double W = P[static_cast<Eigen::Index>(M)];
  Eigen::VectorXd F(M + 1);
  if (grid.uniform) {
    // wr is w reversed so C(f) is a unit-stride dot product.
    Eigen::VectorXd wr = w.reverse();
    for (std::size_t f = 0; f <= M; ++f) {
      const auto fi = static_cast<Eigen::Index>(f);
      double C = 0.0;
      if (f >= 1)
        C = P.segment(1, fi).dot(wr.segment(static_cast<Eigen::Index>(M - f), fi));
      F[fi] = -2.0 * P[fi] * P[fi] + C + P[fi] * W;
    }
  } else {
    for (std::size_t f = 0; f <= M; ++f) {
      double q1 = 0.0, q2 = 0.0;
      // j2 = first cell with pivot > face[f] - pivot[m]; the threshold
      // decreases with m, so j2 only moves left.
      std::size_t j2 = M;
      for (std::size_t m = 0; m < f; ++m) {
        const double thr = grid.face[f] - grid.pivot[m];
        while (j2 > 0 && grid.pivot[j2 - 1] > thr) --j2;
        const double wm = w[static_cast<Eigen::Index>(m)];
        q2 += wm * (W - P[static_cast<Eigen::Index>(j2)]);
        const std::size_t j1 = std::min(j2, f);
        q1 += wm * (P[static_cast<Eigen::Index>(f)] -
                    P[static_cast<Eigen::Index>(j1)]);
      }
      F[static_cast<Eigen::Index>(f)] = -2.0 * q1 + q2;
    }
  }
  return F;
}

/// One explicit step g_i += lambda_i (F(i+1) - F(i)), lambda_i = p_i dt / dp_i.
inline void step(const Grid& grid, std::vector<double>& state, double gamma,
                 double dt) {
  const Eigen::VectorXd F = fluxes(grid, state, gamma);
  for (std::size_t i = 0; i < grid.cells(); ++i) {
    const double lambda = grid.pivot[i] * dt / grid.dp[i];
    state[i] += lambda * (F[static_cast<Eigen::Index>(i + 1)] -
                          F[static_cast<Eigen::Index>(i)]);
  }
}

/// Total energy on [0, R]: midpoint rule on the energy density g.
inline double total_energy(const Grid& grid, const std::vector<double>& state) {
  double e = 0.0;
  for (std::size_t i = 0; i < grid.cells(); ++i) e += grid.dp[i] * state[i];
  return e;
}

struct FVSConfig {
  double gamma = 2.0;
  double h = 0.01;
  double R = 10.0;
  double dt = 0.005;
  double t_end = 148.0;
  int energy_every = 20;  // record the energy every this many steps
};

struct Snapshot {
  double t = 0.0;
  std::vector<double> state;
};

struct RunResult {
  std::vector<double> energy_time;
  std::vector<double> energy;
  std::vector<Snapshot> snapshots;
  double min_value = 0.0;  // most negative cell value seen over the run
  bool positive = true;    // min_value >= -1e-12
  long long first_failure_step = -1;  // first step with a negative cell, or -1
  bool aborted = false;               // stopped early on non-finite values
  long long abort_step = -1;
  Snapshot last_stable;  // state before the aborting step (or the final state)
};

/// Advance the scheme from g0 to t_end, recording the energy series, the
/// running positivity diagnostic and snapshots at the requested times
/// (each matched to the nearest step).
template <class F>
RunResult run(const FVSConfig& cfg, F&& g0,
              const std::vector<double>& snapshot_times = {}) {
  if (!(cfg.dt > 0) || !(cfg.t_end >= 0) || cfg.energy_every < 1)
    throw std::invalid_argument("fvs::run: invalid time parameters");
  const Grid grid = build_grid(cfg.h, cfg.R);
  std::vector<double> state = project_initial(grid, g0);
  const auto n_steps = static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt));

  std::vector<std::size_t> snap_step(snapshot_times.size());
  for (std::size_t s = 0; s < snapshot_times.size(); ++s) {
    auto k = static_cast<long long>(std::llround(snapshot_times[s] / cfg.dt));
    snap_step[s] = static_cast<std::size_t>(
        std::clamp(k, 0ll, static_cast<long long>(n_steps)));
  }

  RunResult result;
  auto record = [&](std::size_t n) {
    const double t = static_cast<double>(n) * cfg.dt;
    result.energy_time.push_back(t);
    result.energy.push_back(total_energy(grid, state));
  };
  auto track = [&](std::size_t n) {
    for (double v : state) result.min_value = std::min(result.min_value, v);
    if (result.first_failure_step < 0 && result.min_value < -1e-12)
      result.first_failure_step = static_cast<long long>(n);
    for (std::size_t s = 0; s < snap_step.size(); ++s)
      if (snap_step[s] == n)
        result.snapshots.push_back({static_cast<double>(n) * cfg.dt, state});
  };
  auto finite = [&] {
    for (double v : state)
      if (!std::isfinite(v)) return false;
    return true;
  };
  record(0);
  track(0);
  std::vector<double> previous = state;
  std::size_t n_done = 0;
  for (std::size_t n = 1; n <= n_steps; ++n) {
    previous = state;
    step(grid, state, cfg.gamma, cfg.dt);
    if (!finite()) {
      result.aborted = true;
      result.abort_step = static_cast<long long>(n);
      result.last_stable = {static_cast<double>(n - 1) * cfg.dt,
                            std::move(previous)};
      break;
    }
    n_done = n;
    if (n % static_cast<std::size_t>(cfg.energy_every) == 0 || n == n_steps)
      record(n);
    track(n);
  }
  if (!result.aborted)
    result.last_stable = {static_cast<double>(n_done) * cfg.dt, state};
  result.positive = result.min_value >= -1e-12;
  return result;
}

}  // namespace wavekin::fvs
