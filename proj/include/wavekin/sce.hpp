// Smoluchowski coagulation problem with multiplicative kernel a(v1,v2) =
// v1 v2, solved in the mass form m = v f: initial data, qMC collision
// operator, residual and loss, plus the analytic solution used as oracle.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "wavekin/field.hpp"
#include "wavekin/parallel.hpp"
#include "wavekin/sobol.hpp"
#include "wavekin/tape.hpp"

namespace wavekin::sce {

struct SCEConfig {
  double T = 0.8;
  double R = 8.0;
  int n_residual = 32;  // Sobol draws for the residual set: n/2 time values
                        // crossed with n/2 volume values, |S| = (n/2)^2
  int n_initial = 16;   // initial-condition samples |S0|, S0 subset of S
  int n_inner = 32;     // inner qMC points per collision-integral dimension
};

/// Sobol-derived sample sets, fixed once per experiment.
struct SCEPlan {
  std::vector<Point2> S;       // residual samples (t, v) in (0,T] x [0,R]
  std::vector<double> S0;      // volume samples for the initial condition
  std::vector<double> u1, u2;  // unit inner points for V1 and V2
};

/// The residual set is the tensor grid of n_residual/2 time samples and
/// n_residual/2 volume samples, both read off the first n_residual/2
/// two-dimensional Sobol points (time from the first coordinate, volume
/// from the second).  The initial-condition set S0 reuses the leading
/// volume values, so S0 is a subset of the volume slice of S.
inline SCEPlan make_plan(const SCEConfig& cfg) {
  if (cfg.T <= 0 || cfg.R <= 0)
    throw std::invalid_argument("SCEConfig: T and R must be positive");
  if (cfg.n_residual < 2 || cfg.n_residual % 2 != 0 || cfg.n_inner < 1 ||
      cfg.n_initial < 1 || cfg.n_initial > cfg.n_residual / 2)
    throw std::invalid_argument("SCEConfig: invalid sample counts");
  SCEPlan plan;
  const int axis = cfg.n_residual / 2;
  auto unit = sobol_points_2d(static_cast<std::size_t>(axis));
  // Keep time strictly positive, matching the (0,T] residual domain.
  const double eps = cfg.T * 0x1p-30;
  std::vector<double> ts(axis), vs(axis);
  for (int i = 0; i < axis; ++i) {
    ts[i] = std::max(unit[static_cast<std::size_t>(i)].u1 * cfg.T, eps);
    vs[i] = unit[static_cast<std::size_t>(i)].u2 * cfg.R;
  }
  plan.S.reserve(static_cast<std::size_t>(axis) * axis);
  for (int i = 0; i < axis; ++i)
    for (int j = 0; j < axis; ++j) plan.S.push_back({ts[i], vs[j]});
  plan.S0.assign(vs.begin(), vs.begin() + cfg.n_initial);
  auto inner = sobol_points_2d(cfg.n_inner);
  for (const Point2& p : inner) {
    plan.u1.push_back(p.u1);
    plan.u2.push_back(p.u2);
  }
  return plan;
}

/// m0(v) = e^{-v}, the mass form of f0 = e^{-v} / v.
inline double m0(double v) { return std::exp(-v); }

namespace detail {

// exp(-x) I1(x): composite trapezoid on [0,pi] of e^{x(cos t - 1)} cos t / pi,
// doubled until converged.  The even periodic extension of the integrand is
// smooth, so convergence is spectral.
inline double i1_scaled_quadrature(double x) {
  if (x == 0.0) return 0.0;
  auto f = [x](double theta) {
    return std::exp(x * (std::cos(theta) - 1.0)) * std::cos(theta);
  };
  const double pi = 3.14159265358979323846;
  std::size_t n = 8;
  double h = pi / static_cast<double>(n);
  double sum = 0.5 * (f(0.0) + f(pi));
  for (std::size_t k = 1; k < n; ++k) sum += f(h * static_cast<double>(k));
  double prev = sum * h / pi;
  for (int iter = 0; iter < 18; ++iter) {
    double mid = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      mid += f(h * (static_cast<double>(k) + 0.5));
    sum += mid;
    n *= 2;
    h *= 0.5;
    const double cur = sum * h / pi;
    if (std::abs(cur - prev) <= 1e-13 * std::max(std::abs(cur), 1e-300) &&
        iter >= 2)
      return cur;
    prev = cur;
  }
  return prev;
}

}  // namespace detail

/// e^{-x} I1(x), stable for all x >= 0.
inline double bessel_i1_scaled(double x) {
  if (x < 0) throw std::domain_error("bessel_i1_scaled: x must be >= 0");
  return detail::i1_scaled_quadrature(x);
}

/// I1(x) to relative accuracy ~1e-12 via quadrature of the integral form.
inline double bessel_i1(double x) {
  if (x < 0) throw std::domain_error("bessel_i1: x must be >= 0");
  if (x > 700.0)
    throw std::overflow_error("bessel_i1: e^x overflows, use bessel_i1_scaled");
  return std::exp(x) * detail::i1_scaled_quadrature(x);
}

/// Analytic mass solution m(t,v) = 2 e^{z - Tv} exp(-z)I1(z) / z with
/// z = 2 v sqrt(t) and T = 1+t before gelation (t <= 1), 2 sqrt(t) after.
/// Removable singularities at t = 0 and z = 0 are handled by series limits.
inline double analytic_m(double t, double v) {
  if (t < 0 || v < 0) throw std::domain_error("analytic_m: t, v must be >= 0");
  if (t < 1e-12) return m0(v);
  const double Tfac = (t <= 1.0) ? 1.0 + t : 2.0 * std::sqrt(t);
  const double z = 2.0 * v * std::sqrt(t);
  if (z < 1e-6) {
    // I1(z)/z = 1/2 (1 + z^2/8 + ...)
    return std::exp(-Tfac * v) * (1.0 + z * z / 8.0);
  }
  return 2.0 / z * std::exp(z - Tfac * v) * bessel_i1_scaled(z);
}

inline double analytic_f(double t, double v) {
  if (v <= 0) throw std::domain_error("analytic_f: v must be > 0");
  return analytic_m(t, v) / v;
}

/// Straightforward qMC discretization of the collision operator for an
/// arbitrary field m(t,x); the reference route for the derivative tests.
template <class Field>
double collision_qmc(Field&& m, double t, double v, const SCEConfig& cfg,
                     const SCEPlan& plan) {
  if (v < 0 || v > cfg.R)
    throw std::domain_error("collision_qmc: v outside [0, R]");
  const double N1 = static_cast<double>(plan.u1.size());
  const double N2 = static_cast<double>(plan.u2.size());
  double outer = 0.0;
  for (double u1 : plan.u1) {
    const double v1 = u1 * v;
    double inner = 0.0;
    for (double u2 : plan.u2) {
      const double v2 = affine(u2, v - v1, cfg.R);
      inner += m(t, v2);
    }
    // (R + v1 - v) is the measure of [v - v1, R]; nonnegative for v <= R.
    outer += v1 * m(t, v1) * ((cfg.R + v1 - v) / N2) * inner;
  }
  return v / N1 * outer;
}

template <class Num>
struct CollisionTerms {
  Num qhat;
  Num dqhat_dv;
};

/// Assemble Qhat and its exact v-derivative from precomputed field
/// evaluations.  g1[i] is the evaluation at (t, v1_i); g2[i*n2+j] at
/// (t, v2_ij).  The v-derivative chains through the affine sample maps
/// (V1 endpoints 0 and v; V2 endpoints v - v1 and R) and all prefactors.
/// Num is double or ad::Var depending on the evaluation records.
template <class Rec>
auto assemble_collision(std::span<const Rec> g1, std::span<const Rec> g2,
                        double v, double R, std::span<const double> u1,
                        std::span<const double> u2) {
  using Num = std::remove_cvref_t<decltype(std::declval<Rec>().value)>;
  const std::size_t n1 = u1.size(), n2 = u2.size();
  const double N1 = static_cast<double>(n1), N2 = static_cast<double>(n2);
  std::optional<Num> q, dq;
  auto add = [](std::optional<Num>& acc, Num term) {
    if (acc)
      acc = *acc + term;
    else
      acc = term;
  };
  for (std::size_t i = 0; i < n1; ++i) {
    const double A = v * v * u1[i] / N1;            // (v/N1) * v1
    const double dA = 2.0 * v * u1[i] / N1;
    const double B = (R - v * (1.0 - u1[i])) / N2;  // (R + v1 - v)/N2
    const double dB = -(1.0 - u1[i]) / N2;
    std::optional<Num> S, dS;
    for (std::size_t j = 0; j < n2; ++j) {
      const Rec& r = g2[i * n2 + j];
      add(S, 1.0 * r.value);
      // d v2 / dv = (1 - u1)(1 - u2)
      add(dS, (1.0 - u1[i]) * (1.0 - u2[j]) * r.d_dx);
    }
    const Rec& r1 = g1[i];
    add(q, (A * B) * (r1.value * *S));
    add(dq, (dA * B + A * dB) * (r1.value * *S) +
                (A * B) * (u1[i] * (r1.d_dx * *S) + r1.value * *dS));
  }
  return CollisionTerms<Num>{*q, *dq};
}

namespace detail {

// Inner evaluation inputs for one residual sample: v1 points then v2 points.
inline Eigen::MatrixXd inner_inputs(double t, double v, const SCEConfig& cfg,
                                    const SCEPlan& plan) {
  const std::size_t n1 = plan.u1.size(), n2 = plan.u2.size();
  Eigen::MatrixXd Z(2, n1 + n1 * n2);
  for (std::size_t i = 0; i < n1; ++i) {
    const double v1 = plan.u1[i] * v;
    Z(0, i) = t;
    Z(1, i) = v1;
    for (std::size_t j = 0; j < n2; ++j) {
      Z(0, n1 + i * n2 + j) = t;
      Z(1, n1 + i * n2 + j) = affine(plan.u2[j], v - v1, cfg.R);
    }
  }
  return Z;
}

}  // namespace detail

struct ResidualParts {
  double qhat = 0.0;
  double dqhat_dv = 0.0;
  double residual = 0.0;  // d_t m + d_v Qhat
};

/// Semi-discrete residual of the network field at one sample point.
inline ResidualParts residual(const Network& net, double t, double v,
                              const SCEConfig& cfg, const SCEPlan& plan) {
  if (v < 0 || v > cfg.R) throw std::domain_error("sce::residual: v outside [0, R]");
  const std::size_t n1 = plan.u1.size(), n2 = plan.u2.size();
  Network::BatchWork work;
  net.forward_batch(detail::inner_inputs(t, v, cfg, plan), false, true, work);
  std::vector<EvalRecord> recs(n1 + n1 * n2);
  for (std::size_t k = 0; k < recs.size(); ++k)
    recs[k] = {work.value[static_cast<Eigen::Index>(k)], 0.0,
               work.d_dx[static_cast<Eigen::Index>(k)]};
  auto terms = assemble_collision(
      std::span<const EvalRecord>(recs.data(), n1),
      std::span<const EvalRecord>(recs.data() + n1, n1 * n2), v, cfg.R,
      plan.u1, plan.u2);
  const EvalRecord outer = net.evaluate(t, v);
  return {terms.qhat, terms.dqhat_dv, outer.d_dt + terms.dqhat_dv};
}

/// Same residual recorded on a tape for theta-gradients.
inline ad::Var residual_on_tape(ad::Tape& tape, double t, double v,
                                const SCEConfig& cfg, const SCEPlan& plan) {
  const std::size_t n1 = plan.u1.size(), n2 = plan.u2.size();
  auto recs = tape.eval_batch(detail::inner_inputs(t, v, cfg, plan), false, true);
  auto terms = assemble_collision(
      std::span<const ad::Tape::EvalOut>(recs.data(), n1),
      std::span<const ad::Tape::EvalOut>(recs.data() + n1, n1 * n2), v, cfg.R,
      plan.u1, plan.u2);
  auto outer = tape.eval(t, v, true, false);
  return outer.d_dt + terms.dqhat_dv;
}

/// Initial-condition mismatch (1/|S0|) sum (m(0,v;theta) - m0(v))^2.
inline ad::Var ic_term_on_tape(ad::Tape& tape, const SCEPlan& plan) {
  Eigen::MatrixXd Z(2, plan.S0.size());
  for (std::size_t k = 0; k < plan.S0.size(); ++k) {
    Z(0, k) = 0.0;
    Z(1, k) = plan.S0[k];
  }
  auto recs = tape.eval_batch(Z, false, false);
  std::optional<ad::Var> acc;
  for (std::size_t k = 0; k < plan.S0.size(); ++k) {
    ad::Var d = recs[k].value - m0(plan.S0[k]);
    ad::Var sq = d * d;
    acc = acc ? *acc + sq : sq;
  }
  return *acc / static_cast<double>(plan.S0.size());
}

inline double ic_term(const Network& net, const SCEPlan& plan) {
  Eigen::MatrixXd Z(2, plan.S0.size());
  for (std::size_t k = 0; k < plan.S0.size(); ++k) {
    Z(0, k) = 0.0;
    Z(1, k) = plan.S0[k];
  }
  Network::BatchWork work;
  net.forward_batch(Z, false, false, work);
  double acc = 0.0;
  for (std::size_t k = 0; k < plan.S0.size(); ++k) {
    const double d = work.value[static_cast<Eigen::Index>(k)] - m0(plan.S0[k]);
    acc += d * d;
  }
  return acc / static_cast<double>(plan.S0.size());
}

/// Initial-condition term with its theta-gradient accumulated into `grad`.
/// The term is a plain least-squares over network values, so the batched
/// value-adjoint backward pass suffices.
inline double ic_term_grad(const Network& net, const SCEPlan& plan,
                           Eigen::VectorXd& grad) {
  const std::size_t n = plan.S0.size();
  Eigen::MatrixXd Z(2, n);
  for (std::size_t k = 0; k < n; ++k) {
    Z(0, k) = 0.0;
    Z(1, k) = plan.S0[k];
  }
  Network::BatchWork work;
  net.forward_batch(Z, false, false, work);
  Eigen::VectorXd wv(n);
  const Eigen::VectorXd none;
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = work.value[static_cast<Eigen::Index>(k)] - m0(plan.S0[k]);
    acc += d * d;
    wv[static_cast<Eigen::Index>(k)] = 2.0 * d / static_cast<double>(n);
  }
  net.backward_batch(work, wv, none, none, grad);
  return acc / static_cast<double>(n);
}

/// Full semi-discrete functional Jhat.
inline double loss(const Network& net, const SCEConfig& cfg,
                   const SCEPlan& plan, int threads = 1) {
  const std::size_t n = plan.S.size();
  std::vector<double> partial((n + 7) / 8, 0.0);
  parallel_chunks(n, 8, threads, [&](std::size_t c, std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t k = b; k < e; ++k) {
      const double r = residual(net, plan.S[k].u1, plan.S[k].u2, cfg, plan).residual;
      acc += r * r;
    }
    partial[c] = acc;
  });
  double sum = 0.0;
  for (double p : partial) sum += p;
  return sum / static_cast<double>(n) + ic_term(net, plan);
}

/// Loss and theta-gradient of the batch [begin, end) of residual samples
/// (each batch also carries the full initial-condition term).
inline double loss_grad(const Network& net, const SCEConfig& cfg,
                        const SCEPlan& plan, std::size_t begin,
                        std::size_t end, Eigen::VectorXd& grad,
                        int threads = 1) {
  const std::size_t nb = end - begin;
  const std::size_t n_chunks = (nb + 7) / 8;
  std::vector<double> partial(n_chunks, 0.0);
  std::vector<Eigen::VectorXd> pgrad(n_chunks);
  parallel_chunks(nb, 8, threads, [&](std::size_t c, std::size_t b, std::size_t e) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(net.parameter_count());
    double acc = 0.0;
    ad::Tape tape(net);
    for (std::size_t k = begin + b; k < begin + e; ++k) {
      tape.reset();
      ad::Var r = residual_on_tape(tape, plan.S[k].u1, plan.S[k].u2, cfg, plan);
      const double rv = tape.value(r);
      acc += rv * rv;
      tape.gradient(r, 2.0 * rv / static_cast<double>(nb), g);
    }
    partial[c] = acc;
    pgrad[c] = std::move(g);
  });
  double sum = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    sum += partial[c];
    grad += pgrad[c];
  }
  ad::Tape tape(net);
  ad::Var ic = ic_term_on_tape(tape, plan);
  tape.gradient(ic, 1.0, grad);
  return sum / static_cast<double>(nb) + tape.value(ic);
}

}  // namespace wavekin::sce
