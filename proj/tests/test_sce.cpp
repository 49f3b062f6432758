#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "wavekin/sce.hpp"

using namespace wavekin;

namespace {

// Independent oracle: ascending series I1(x) = sum (x/2)^{2k+1} / (k! (k+1)!).
double i1_series(double x) {
  const double half = 0.5 * x;
  double term = half;  // k = 0
  double sum = term;
  for (int k = 1; k < 400; ++k) {
    term *= half * half / (static_cast<double>(k) * (k + 1));
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / (std::abs(b) + 1e-300);
}

// Total volume integral of the analytic mass density over [0, inf), via the
// substitution v = (1-s)^{-2} - 1 which tames the algebraic post-gelation
// tail, then composite midpoint in s (no endpoint evaluation at s = 1).
double analytic_volume(double t, int n = 40000) {
  double acc = 0.0;
  const double h = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    const double s = h * (static_cast<double>(i) + 0.5);
    const double om = 1.0 - s;
    const double v = 1.0 / (om * om) - 1.0;
    const double dv = 2.0 / (om * om * om);
    acc += sce::analytic_m(t, v) * dv;
  }
  return acc * h;
}

double fd_qhat_v(const Network& net, double t, double v, const sce::SCEConfig& cfg,
                 const sce::SCEPlan& plan, double h) {
  return (sce::residual(net, t, v + h, cfg, plan).qhat -
          sce::residual(net, t, v - h, cfg, plan).qhat) /
         (2.0 * h);
}

}  // namespace

TEST_CASE("bessel I1 quadrature matches the ascending series on [0, 50]") {
  CHECK(sce::bessel_i1(0.0) == 0.0);
  for (int i = 1; i <= 135; ++i) {
    const double x = 50.0 * i / 135.0;
    REQUIRE(rel_err(sce::bessel_i1(x), i1_series(x)) < 1e-10);
    REQUIRE(rel_err(sce::bessel_i1_scaled(x), std::exp(-x) * i1_series(x)) < 1e-10);
  }
  CHECK_THROWS_AS(sce::bessel_i1(-1.0), std::domain_error);
  CHECK_THROWS_AS(sce::bessel_i1(701.0), std::overflow_error);
  CHECK(sce::bessel_i1_scaled(1000.0) > 0.0);
}

TEST_CASE("analytic solution reduces to the initial data at t = 0") {
  for (int i = 0; i < 60; ++i) {
    const double v = 0.05 + (8.0 - 0.05) * i / 59.0;
    REQUIRE(std::abs(sce::analytic_m(0.0, v) - sce::m0(v)) < 1e-15);
    REQUIRE(std::abs(sce::analytic_m(1e-8, v) - sce::m0(v)) < 1e-6);
    REQUIRE(sce::analytic_f(0.0, v) == Catch::Approx(sce::m0(v) / v));
  }
}

TEST_CASE("analytic volume is conserved before gelation and decays after") {
  for (double t : {0.2, 0.5, 0.9})
    REQUIRE(std::abs(analytic_volume(t) - 1.0) < 1e-4);
  for (double t : {1.0, 1.5, 4.0})
    REQUIRE(std::abs(analytic_volume(t) - 1.0 / std::sqrt(t)) < 1e-3);
}

TEST_CASE("collision operator reproduces the constant-state closed form") {
  // For m == 1: Q(v) = (R - v) v^2 / 2 + v^3 / 3.
  auto ones = [](double, double) { return 1.0; };
  sce::SCEConfig cfg;
  auto exact = [&](double v) {
    return (cfg.R - v) * v * v / 2.0 + v * v * v / 3.0;
  };
  std::vector<double> worst;
  for (int n : {1 << 5, 1 << 8, 1 << 12}) {
    sce::SCEConfig c = cfg;
    c.n_inner = n;
    auto plan = sce::make_plan(c);
    double w = 0.0;
    for (double v : {0.7, 2.0, 4.4, 7.3})
      w = std::max(w, rel_err(sce::collision_qmc(ones, 0.1, v, c, plan), exact(v)));
    worst.push_back(w);
  }
  CHECK(worst[1] < worst[0]);
  CHECK(worst[2] < worst[1]);
  CHECK(worst[2] < 1e-3);
}

TEST_CASE("assembled collision matches the direct qMC evaluation") {
  sce::SCEConfig cfg;
  cfg.n_inner = 16;
  auto plan = sce::make_plan(cfg);
  Network net = Network::random(31, {2, 12, 12});
  net.parameters() *= 0.4;
  auto field = [&](double t, double x) { return net.evaluate(t, x).value; };
  for (double v : {0.5, 3.1, 6.8}) {
    const double direct = sce::collision_qmc(field, 0.3, v, cfg, plan);
    const double assembled = sce::residual(net, 0.3, v, cfg, plan).qhat;
    REQUIRE(rel_err(assembled, direct) < 1e-12);
  }
  CHECK_THROWS_AS(sce::residual(net, 0.3, 9.0, cfg, plan), std::domain_error);
}

TEST_CASE("collision derivative matches central finite differences") {
  sce::SCEConfig cfg;
  cfg.n_inner = 8;
  auto plan = sce::make_plan(cfg);
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> T(0.05, 0.8), V(0.5, 7.0);
  for (int trial = 0; trial < 100; ++trial) {
    Network net = Network::random(500 + trial, {2, 10, 10});
    net.parameters() *= 0.4;
    const double t = T(gen), v = V(gen);
    const auto parts = sce::residual(net, t, v, cfg, plan);
    const double fd = fd_qhat_v(net, t, v, cfg, plan, 2e-5);
    REQUIRE(rel_err(parts.dqhat_dv, fd) < 1e-5);
    // Residual composition: d_t m + d_v Qhat.
    const double dt = net.evaluate(t, v).d_dt;
    REQUIRE(parts.residual == Catch::Approx(dt + parts.dqhat_dv).epsilon(1e-12));
  }
}

TEST_CASE("taped residual agrees with the double-path residual") {
  sce::SCEConfig cfg;
  cfg.n_inner = 8;
  auto plan = sce::make_plan(cfg);
  Network net = Network::random(77, {2, 10, 10});
  net.parameters() *= 0.4;
  ad::Tape tape(net);
  for (double v : {0.4, 2.2, 5.5}) {
    tape.reset();
    ad::Var r = sce::residual_on_tape(tape, 0.25, v, cfg, plan);
    const double direct = sce::residual(net, 0.25, v, cfg, plan).residual;
    REQUIRE(tape.value(r) == Catch::Approx(direct).epsilon(1e-13));
  }
}

TEST_CASE("loss gradient matches finite differences of the loss") {
  sce::SCEConfig cfg;
  cfg.n_residual = 4;
  cfg.n_initial = 2;
  cfg.n_inner = 4;
  auto plan = sce::make_plan(cfg);
  Network net = Network::random(3, {2, 6, 6});
  net.parameters() *= 0.4;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.parameter_count());
  const double l = sce::loss_grad(net, cfg, plan, 0, plan.S.size(), grad);
  CHECK(l == Catch::Approx(sce::loss(net, cfg, plan)).epsilon(1e-12));

  std::mt19937_64 gen(9);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(net.parameter_count()) - 1);
  Network pert = net;
  for (int k = 0; k < 30; ++k) {
    const int idx = pick(gen);
    const double h = 1e-6;
    pert.parameters() = net.parameters();
    pert.parameters()[idx] += h;
    const double fp = sce::loss(pert, cfg, plan);
    pert.parameters()[idx] = net.parameters()[idx] - h;
    const double fm = sce::loss(pert, cfg, plan);
    const double fd = (fp - fm) / (2.0 * h);
    REQUIRE(rel_err(grad[idx], fd) < 1e-5);
  }
}

TEST_CASE("loss is independent of the thread count") {
  sce::SCEConfig cfg;
  cfg.n_residual = 20;
  cfg.n_initial = 8;
  cfg.n_inner = 8;
  auto plan = sce::make_plan(cfg);
  Network net = Network::random(12, {2, 10, 10});
  net.parameters() *= 0.4;
  const double l1 = sce::loss(net, cfg, plan, 1);
  const double l4 = sce::loss(net, cfg, plan, 4);
  CHECK(l1 == l4);
  Eigen::VectorXd g1 = Eigen::VectorXd::Zero(net.parameter_count());
  Eigen::VectorXd g4 = g1;
  sce::loss_grad(net, cfg, plan, 0, plan.S.size(), g1, 1);
  sce::loss_grad(net, cfg, plan, 0, plan.S.size(), g4, 4);
  CHECK(g1 == g4);
}

TEST_CASE("plan layout: initial-condition samples come from the residual set") {
  sce::SCEConfig cfg;
  auto plan = sce::make_plan(cfg);
  // 32 Sobol draws give 16 time values crossed with 16 volume values.
  REQUIRE(plan.S.size() == 256);
  REQUIRE(plan.S0.size() == 16);
  REQUIRE(plan.u1.size() == 32);
  for (int i = 0; i < 16; ++i) CHECK(plan.S0[i] == plan.S[i].u2);
  // Tensor structure: each block of 16 shares one time value and repeats
  // the same 16 volume values.
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      CHECK(plan.S[16 * i + j].u1 == plan.S[16 * i].u1);
      CHECK(plan.S[16 * i + j].u2 == plan.S[j].u2);
    }
  for (const auto& s : plan.S) {
    CHECK(s.u1 > 0.0);
    CHECK(s.u1 <= cfg.T);
    CHECK(s.u2 >= 0.0);
    CHECK(s.u2 < cfg.R);
  }
  sce::SCEConfig bad;
  bad.n_initial = 64;
  CHECK_THROWS_AS(sce::make_plan(bad), std::invalid_argument);
}

TEST_CASE("fast initial-condition gradient matches the taped gradient") {
  sce::SCEConfig cfg;
  auto plan = sce::make_plan(cfg);
  Network net = Network::random(23, {2, 14, 11});
  net.parameters() *= 0.5;
  Eigen::VectorXd fast = Eigen::VectorXd::Zero(net.parameter_count());
  const double value = sce::ic_term_grad(net, plan, fast);
  CHECK(value == Catch::Approx(sce::ic_term(net, plan)).epsilon(1e-13));
  ad::Tape tape(net);
  ad::Var ic = sce::ic_term_on_tape(tape, plan);
  Eigen::VectorXd taped = tape.gradient(ic);
  REQUIRE((fast - taped).lpNorm<Eigen::Infinity>() <
          1e-12 * std::max(1.0, taped.lpNorm<Eigen::Infinity>()));
}
