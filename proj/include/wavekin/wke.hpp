// Conservative isotropic 3-wave kinetic problem in the energy form
// d_t g = p d_p Q[g]: initial data, rewritten-domain qMC collision operator,
// residual and loss.  The default kernel degree gamma = 2 is the acoustic
// case; the assembly below keeps gamma general.
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

namespace wavekin::wke {

struct WKEConfig {
  double gamma = 2.0;
  double T = 10.0;
  double R = 10.0;
  std::size_t n_samples = std::size_t{1} << 15;  // residual samples |W|
  std::size_t n_initial = 256;                   // |W0|, W0 subset of W
  int n_inner = 32;  // qMC points per collision-integral dimension
};

/// Sobol-derived sample sets for one stage, fixed for the whole stage.
struct WKEPlan {
  std::vector<Point2> W;            // residual samples (t, p)
  std::vector<double> W0;           // wavenumber samples for the IC term
  std::vector<double> u1;           // unit points for P1 on [0, p]
  std::vector<double> u2;           // unit points for P2 on [p - p1, p]
  std::vector<double> u2hat;        // unit points for P2hat on [p - p1, R]
};

inline WKEPlan make_plan(const WKEConfig& cfg) {
  if (cfg.T <= 0 || cfg.R <= 0)
    throw std::invalid_argument("WKEConfig: T and R must be positive");
  if (cfg.gamma < 0) throw std::invalid_argument("WKEConfig: gamma must be >= 0");
  if (cfg.n_samples < 1 || cfg.n_inner < 1 || cfg.n_initial < 1 ||
      cfg.n_initial > cfg.n_samples)
    throw std::invalid_argument("WKEConfig: invalid sample counts");
  WKEPlan plan;
  plan.W = map_to_rect(sobol_points_2d(cfg.n_samples), cfg.T, cfg.R);
  plan.W0.reserve(cfg.n_initial);
  for (std::size_t i = 0; i < cfg.n_initial; ++i)
    plan.W0.push_back(plan.W[i].u2);
  const std::size_t n = static_cast<std::size_t>(cfg.n_inner);
  auto inner = sobol_points_2d(2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    plan.u1.push_back(inner[k].u1);
    plan.u2.push_back(inner[k].u2);
    plan.u2hat.push_back(inner[n + k].u2);
  }
  return plan;
}

/// g0(p) = sqrt(7 / 2 pi) exp(-7 (p-2)^2 / 2): unit-mass Gaussian bump at
/// p = 2 with standard deviation 1/sqrt(7).
inline double g0(double p) {
  const double two_pi = 6.283185307179586476925;
  return std::sqrt(7.0 / two_pi) * std::exp(-3.5 * (p - 2.0) * (p - 2.0));
}

namespace detail {

inline double pow_or_one(double x, double e) {
  return e == 0.0 ? 1.0 : std::pow(x, e);
}
// d/dx x^e, with the zero-exponent case short-circuited so gamma = 2 never
// touches 0 * 0^{-1}.
inline double pow_deriv(double x, double e) {
  return e == 0.0 ? 0.0 : e * pow_or_one(x, e - 1.0);
}

}  // namespace detail

/// qMC discretization of the rewritten collision operator for an arbitrary
/// field g(t,x); the reference route for the derivative tests.
template <class Field>
double collision_qmc(Field&& g, double t, double p, const WKEConfig& cfg,
                     const WKEPlan& plan) {
  if (p < 0 || p > cfg.R)
    throw std::domain_error("wke::collision_qmc: p outside [0, R]");
  using detail::pow_or_one;
  const double N1 = static_cast<double>(plan.u1.size());
  const double N2 = static_cast<double>(plan.u2.size());
  const double N2h = static_cast<double>(plan.u2hat.size());
  const double half = cfg.gamma / 2.0;
  double term1 = 0.0, term2 = 0.0;
  for (double u1 : plan.u1) {
    const double p1 = u1 * p;
    const double g1 = g(t, p1);
    double s = 0.0;
    for (double u2 : plan.u2) {
      const double p2 = affine(u2, p - p1, p);
      s += pow_or_one(p2, half - 1.0) * g(t, p2);
    }
    term1 += pow_or_one(p1, half) * g1 * s;
    double sh = 0.0;
    for (double u2 : plan.u2hat) {
      const double p2 = affine(u2, p - p1, cfg.R);
      sh += pow_or_one(p2, half - 1.0) * g(t, p2);
    }
    term2 += pow_or_one(p1, half - 1.0) * g1 * (cfg.R - p + p1) * sh;
  }
  return -2.0 * p / (N1 * N2) * term1 + p / (N1 * N2h) * term2;
}

template <class Num>
struct CollisionTerms {
  Num qhat;
  Num dqhat_dp;
};

/// Assemble Qhat and its exact p-derivative from precomputed evaluations.
/// g1[i] is the evaluation at (t, p1_i); g2[i*n2+j] at (t, p2_ij) on
/// [p - p1, p]; g2h[i*n2h+j] at (t, p2hat_ij) on [p - p1, R].  The
/// p-derivative chains through the prefactors, the p1 = u1 p map, both
/// inner endpoint maps and the (R - p + p1) measure factor.
template <class Rec>
auto assemble_collision(std::span<const Rec> g1, std::span<const Rec> g2,
                        std::span<const Rec> g2h, double p, double R,
                        double gamma, std::span<const double> u1,
                        std::span<const double> u2,
                        std::span<const double> u2hat) {
  using Num = std::remove_cvref_t<decltype(std::declval<Rec>().value)>;
  using detail::pow_deriv;
  using detail::pow_or_one;
  const std::size_t n1 = u1.size(), n2 = u2.size(), n2h = u2hat.size();
  const double half = gamma / 2.0;
  const double K1 = -2.0 * p / (static_cast<double>(n1) * n2);
  const double dK1 = -2.0 / (static_cast<double>(n1) * n2);
  const double K2 = p / (static_cast<double>(n1) * n2h);
  const double dK2 = 1.0 / (static_cast<double>(n1) * n2h);

  std::optional<Num> t1, dt1, t2, dt2;
  auto add = [](std::optional<Num>& acc, Num term) {
    if (acc)
      acc = *acc + term;
    else
      acc = term;
  };
  for (std::size_t i = 0; i < n1; ++i) {
    const double p1 = u1[i] * p;
    const double c = pow_or_one(p1, half);
    const double dc = pow_deriv(p1, half) * u1[i];
    const double d = pow_or_one(p1, half - 1.0);
    const double dd = pow_deriv(p1, half - 1.0) * u1[i];
    const Rec& r1 = g1[i];
    const Num dg1 = u1[i] * r1.d_dx;

    std::optional<Num> S, dS;
    for (std::size_t j = 0; j < n2; ++j) {
      const double p2 = affine(u2[j], p - p1, p);
      const double dp2 = (1.0 - u1[i]) + u2[j] * u1[i];
      const double a = pow_or_one(p2, half - 1.0);
      const double da = pow_deriv(p2, half - 1.0) * dp2;
      const Rec& r = g2[i * n2 + j];
      add(S, a * r.value);
      add(dS, da * r.value + (a * dp2) * r.d_dx);
    }
    add(t1, c * (r1.value * *S));
    add(dt1, dc * (r1.value * *S) + c * (dg1 * *S) + c * (r1.value * *dS));

    const double E = R - p + p1;
    const double dE = u1[i] - 1.0;
    std::optional<Num> Sh, dSh;
    for (std::size_t j = 0; j < n2h; ++j) {
      const double p2 = affine(u2hat[j], p - p1, R);
      const double dp2 = (1.0 - u1[i]) * (1.0 - u2hat[j]);
      const double a = pow_or_one(p2, half - 1.0);
      const double da = pow_deriv(p2, half - 1.0) * dp2;
      const Rec& r = g2h[i * n2h + j];
      add(Sh, a * r.value);
      add(dSh, da * r.value + (a * dp2) * r.d_dx);
    }
    add(t2, (d * E) * (r1.value * *Sh));
    add(dt2, (dd * E + d * dE) * (r1.value * *Sh) + (d * E) * (dg1 * *Sh) +
                 (d * E) * (r1.value * *dSh));
  }
  return CollisionTerms<Num>{K1 * *t1 + K2 * *t2,
                             dK1 * *t1 + K1 * *dt1 + dK2 * *t2 + K2 * *dt2};
}

namespace detail {

// Inner evaluation inputs for one residual sample: p1 points, then the P2
// grid, then the P2hat grid.
inline Eigen::MatrixXd inner_inputs(double t, double p, const WKEConfig& cfg,
                                    const WKEPlan& plan) {
  const std::size_t n1 = plan.u1.size(), n2 = plan.u2.size(),
                    n2h = plan.u2hat.size();
  Eigen::MatrixXd Z(2, n1 + n1 * n2 + n1 * n2h);
  Z.row(0).setConstant(t);
  for (std::size_t i = 0; i < n1; ++i) {
    const double p1 = plan.u1[i] * p;
    Z(1, i) = p1;
    for (std::size_t j = 0; j < n2; ++j)
      Z(1, n1 + i * n2 + j) = affine(plan.u2[j], p - p1, p);
    for (std::size_t j = 0; j < n2h; ++j)
      Z(1, n1 + n1 * n2 + i * n2h + j) = affine(plan.u2hat[j], p - p1, cfg.R);
  }
  return Z;
}

}  // namespace detail

struct ResidualParts {
  double qhat = 0.0;
  double dqhat_dp = 0.0;
  double residual = 0.0;  // d_t g - p d_p Qhat
};

inline ResidualParts residual(const Network& net, double t, double p,
                              const WKEConfig& cfg, const WKEPlan& plan) {
  if (p < 0 || p > cfg.R) throw std::domain_error("wke::residual: p outside [0, R]");
  const std::size_t n1 = plan.u1.size(), n2 = plan.u2.size(),
                    n2h = plan.u2hat.size();
  Network::BatchWork work;
  net.forward_batch(detail::inner_inputs(t, p, cfg, plan), false, true, work);
  std::vector<EvalRecord> recs(n1 + n1 * n2 + n1 * n2h);
  for (std::size_t k = 0; k < recs.size(); ++k)
    recs[k] = {work.value[static_cast<Eigen::Index>(k)], 0.0,
               work.d_dx[static_cast<Eigen::Index>(k)]};
  auto terms = assemble_collision(
      std::span<const EvalRecord>(recs.data(), n1),
      std::span<const EvalRecord>(recs.data() + n1, n1 * n2),
      std::span<const EvalRecord>(recs.data() + n1 + n1 * n2, n1 * n2h), p,
      cfg.R, cfg.gamma, plan.u1, plan.u2, plan.u2hat);
  const EvalRecord outer = net.evaluate(t, p);
  return {terms.qhat, terms.dqhat_dp, outer.d_dt - p * terms.dqhat_dp};
}

inline ad::Var residual_on_tape(ad::Tape& tape, double t, double p,
                                const WKEConfig& cfg, const WKEPlan& plan) {
  const std::size_t n1 = plan.u1.size(), n2 = plan.u2.size(),
                    n2h = plan.u2hat.size();
  auto recs = tape.eval_batch(detail::inner_inputs(t, p, cfg, plan), false, true);
  auto terms = assemble_collision(
      std::span<const ad::Tape::EvalOut>(recs.data(), n1),
      std::span<const ad::Tape::EvalOut>(recs.data() + n1, n1 * n2),
      std::span<const ad::Tape::EvalOut>(recs.data() + n1 + n1 * n2, n1 * n2h),
      p, cfg.R, cfg.gamma, plan.u1, plan.u2, plan.u2hat);
  auto outer = tape.eval(t, p, true, false);
  return outer.d_dt - p * terms.dqhat_dp;
}

inline ad::Var ic_term_on_tape(ad::Tape& tape, const WKEPlan& plan) {
  Eigen::MatrixXd Z(2, plan.W0.size());
  for (std::size_t k = 0; k < plan.W0.size(); ++k) {
    Z(0, k) = 0.0;
    Z(1, k) = plan.W0[k];
  }
  auto recs = tape.eval_batch(Z, false, false);
  std::optional<ad::Var> acc;
  for (std::size_t k = 0; k < plan.W0.size(); ++k) {
    ad::Var d = recs[k].value - g0(plan.W0[k]);
    ad::Var sq = d * d;
    acc = acc ? *acc + sq : sq;
  }
  return *acc / static_cast<double>(plan.W0.size());
}

inline double ic_term(const Network& net, const WKEPlan& plan) {
  Eigen::MatrixXd Z(2, plan.W0.size());
  for (std::size_t k = 0; k < plan.W0.size(); ++k) {
    Z(0, k) = 0.0;
    Z(1, k) = plan.W0[k];
  }
  Network::BatchWork work;
  net.forward_batch(Z, false, false, work);
  double acc = 0.0;
  for (std::size_t k = 0; k < plan.W0.size(); ++k) {
    const double d = work.value[static_cast<Eigen::Index>(k)] - g0(plan.W0[k]);
    acc += d * d;
  }
  return acc / static_cast<double>(plan.W0.size());
}

/// Initial-condition term with its theta-gradient accumulated into `grad`.
/// Least-squares over network values; uses the batched value adjoint.
inline double ic_term_grad(const Network& net, const WKEPlan& plan,
                           Eigen::VectorXd& grad) {
  const std::size_t n = plan.W0.size();
  Eigen::MatrixXd Z(2, n);
  for (std::size_t k = 0; k < n; ++k) {
    Z(0, k) = 0.0;
    Z(1, k) = plan.W0[k];
  }
  Network::BatchWork work;
  net.forward_batch(Z, false, false, work);
  Eigen::VectorXd wv(n);
  const Eigen::VectorXd none;
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = work.value[static_cast<Eigen::Index>(k)] - g0(plan.W0[k]);
    acc += d * d;
    wv[static_cast<Eigen::Index>(k)] = 2.0 * d / static_cast<double>(n);
  }
  net.backward_batch(work, wv, none, none, grad);
  return acc / static_cast<double>(n);
}

inline double loss(const Network& net, const WKEConfig& cfg,
                   const WKEPlan& plan, int threads = 1) {
  const std::size_t n = plan.W.size();
  std::vector<double> partial((n + 7) / 8, 0.0);
  parallel_chunks(n, 8, threads, [&](std::size_t c, std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t k = b; k < e; ++k) {
      const double r = residual(net, plan.W[k].u1, plan.W[k].u2, cfg, plan).residual;
      acc += r * r;
    }
    partial[c] = acc;
  });
  double sum = 0.0;
  for (double p : partial) sum += p;
  return sum / static_cast<double>(n) + ic_term(net, plan);
}

inline double loss_grad(const Network& net, const WKEConfig& cfg,
                        const WKEPlan& plan, std::size_t begin,
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
      ad::Var r = residual_on_tape(tape, plan.W[k].u1, plan.W[k].u2, cfg, plan);
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

}  // namespace wavekin::wke
