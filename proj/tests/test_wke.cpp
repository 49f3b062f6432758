#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "wavekin/train.hpp"
#include "wavekin/wke.hpp"

using namespace wavekin;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / (std::abs(b) + 1e-300);
}

// Hard-coded gamma = 2 collision operator: p1^{gamma/2} = p1 and the
// p2 factors drop out entirely.
template <class Field>
double collision_gamma2(Field&& g, double t, double p, double R,
                        const wke::WKEPlan& plan) {
  const double N1 = static_cast<double>(plan.u1.size());
  const double N2 = static_cast<double>(plan.u2.size());
  const double N2h = static_cast<double>(plan.u2hat.size());
  double term1 = 0.0, term2 = 0.0;
  for (double u1 : plan.u1) {
    const double p1 = u1 * p;
    const double g1 = g(t, p1);
    double s = 0.0;
    for (double u2 : plan.u2) s += g(t, affine(u2, p - p1, p));
    term1 += p1 * g1 * s;
    double sh = 0.0;
    for (double u2 : plan.u2hat) sh += g(t, affine(u2, p - p1, R));
    term2 += g1 * (R - p + p1) * sh;
  }
  return -2.0 * p / (N1 * N2) * term1 + p / (N1 * N2h) * term2;
}

}  // namespace

TEST_CASE("initial condition is a unit-mass bump centered at p = 2") {
  const double peak = std::sqrt(7.0 / (2.0 * 3.14159265358979323846));
  CHECK(wke::g0(2.0) == Catch::Approx(peak).epsilon(1e-12));
  CHECK(wke::g0(1.3) == Catch::Approx(wke::g0(2.7)).epsilon(1e-12));
  CHECK(wke::g0(2.0) > wke::g0(1.9));
  double mass = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) mass += wke::g0(10.0 * (i + 0.5) / n) * 10.0 / n;
  // The bump's own tail below p = 0 carries ~6e-8 of the mass.
  CHECK(mass == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("power helpers avoid the zero-exponent singularity") {
  CHECK(wke::detail::pow_or_one(0.0, 0.0) == 1.0);
  CHECK(wke::detail::pow_deriv(0.0, 0.0) == 0.0);
  CHECK(wke::detail::pow_deriv(2.0, 1.0) == 1.0);
  CHECK(wke::detail::pow_deriv(3.0, 2.0) == 6.0);
}

TEST_CASE("collision operator reproduces the constant-state closed form") {
  // For g == 1 and gamma = 2: Q(p) = R p - 3 p^2 / 2.
  auto ones = [](double, double) { return 1.0; };
  wke::WKEConfig cfg;
  auto exact = [&](double p) { return cfg.R * p - 1.5 * p * p; };
  CHECK(exact(1.0) == 8.5);
  std::vector<double> worst;
  for (int n : {1 << 5, 1 << 8, 1 << 12}) {
    wke::WKEConfig c = cfg;
    c.n_inner = n;
    c.n_samples = 8;
    c.n_initial = 8;
    auto plan = wke::make_plan(c);
    double w = 0.0;
    for (double p : {1.0, 2.5, 4.0, 6.0})
      w = std::max(w, rel_err(wke::collision_qmc(ones, 0.1, p, c, plan), exact(p)));
    worst.push_back(w);
  }
  CHECK(worst[1] < worst[0]);
  CHECK(worst[2] < worst[1]);
  CHECK(worst[2] < 1e-3);
}

TEST_CASE("general-gamma assembly agrees with the hard-coded gamma = 2 form") {
  wke::WKEConfig cfg;
  cfg.n_inner = 16;
  cfg.n_samples = 8;
  cfg.n_initial = 8;
  auto plan = wke::make_plan(cfg);
  Network net = Network::random(41, {2, 12, 12});
  net.parameters() *= 0.4;
  auto field = [&](double t, double x) { return net.evaluate(t, x).value; };
  for (double p : {0.6, 2.0, 5.5, 9.0}) {
    const double general = wke::collision_qmc(field, 0.3, p, cfg, plan);
    const double hard = collision_gamma2(field, 0.3, p, cfg.R, plan);
    REQUIRE(rel_err(general, hard) < 1e-12);
    const double assembled = wke::residual(net, 0.3, p, cfg, plan).qhat;
    REQUIRE(rel_err(assembled, hard) < 1e-12);
  }
}

TEST_CASE("fractional kernel degree stays finite") {
  wke::WKEConfig cfg;
  cfg.gamma = 1.5;
  cfg.n_inner = 8;
  cfg.n_samples = 8;
  cfg.n_initial = 8;
  auto plan = wke::make_plan(cfg);
  Network net = Network::random(13, {2, 8, 8});
  net.parameters() *= 0.4;
  const auto parts = wke::residual(net, 0.2, 3.0, cfg, plan);
  CHECK(std::isfinite(parts.qhat));
  CHECK(std::isfinite(parts.dqhat_dp));
}

TEST_CASE("collision derivative matches central finite differences") {
  wke::WKEConfig cfg;
  cfg.n_inner = 8;
  cfg.n_samples = 8;
  cfg.n_initial = 8;
  auto plan = wke::make_plan(cfg);
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> T(0.05, 5.0), P(0.5, 9.0);
  for (int trial = 0; trial < 100; ++trial) {
    Network net = Network::random(800 + trial, {2, 10, 10});
    net.parameters() *= 0.4;
    const double t = T(gen), p = P(gen);
    const auto parts = wke::residual(net, t, p, cfg, plan);
    const double h = 2e-5;
    const double fd = (wke::residual(net, t, p + h, cfg, plan).qhat -
                       wke::residual(net, t, p - h, cfg, plan).qhat) /
                      (2.0 * h);
    REQUIRE(rel_err(parts.dqhat_dp, fd) < 1e-5);
    // Residual composition: d_t g - p d_p Qhat.
    const double dt = net.evaluate(t, p).d_dt;
    REQUIRE(parts.residual == Catch::Approx(dt - p * parts.dqhat_dp).epsilon(1e-12));
  }
}

TEST_CASE("constant-state collision derivative approaches R - 3p") {
  wke::WKEConfig cfg;
  cfg.n_inner = 1 << 10;
  cfg.n_samples = 8;
  cfg.n_initial = 8;
  auto plan = wke::make_plan(cfg);
  const std::size_t n = plan.u1.size();
  std::vector<EvalRecord> g1(n, {1.0, 0.0, 0.0});
  std::vector<EvalRecord> g2(n * n, {1.0, 0.0, 0.0});
  for (double p : {1.0, 3.0, 6.0}) {
    auto terms = wke::assemble_collision(
        std::span<const EvalRecord>(g1), std::span<const EvalRecord>(g2),
        std::span<const EvalRecord>(g2), p, cfg.R, cfg.gamma, plan.u1, plan.u2,
        plan.u2hat);
    REQUIRE(rel_err(terms.dqhat_dp, cfg.R - 3.0 * p) < 1e-2);
    REQUIRE(rel_err(terms.qhat, cfg.R * p - 1.5 * p * p) < 1e-2);
  }
}

TEST_CASE("taped residual agrees with the double-path residual") {
  wke::WKEConfig cfg;
  cfg.n_inner = 8;
  cfg.n_samples = 8;
  cfg.n_initial = 8;
  auto plan = wke::make_plan(cfg);
  Network net = Network::random(57, {2, 10, 10});
  net.parameters() *= 0.4;
  ad::Tape tape(net);
  for (double p : {0.8, 4.4, 8.2}) {
    tape.reset();
    ad::Var r = wke::residual_on_tape(tape, 1.1, p, cfg, plan);
    const double direct = wke::residual(net, 1.1, p, cfg, plan).residual;
    REQUIRE(tape.value(r) == Catch::Approx(direct).epsilon(1e-13));
  }
}

TEST_CASE("loss gradient matches finite differences of the loss") {
  wke::WKEConfig cfg;
  cfg.n_samples = 4;
  cfg.n_initial = 2;
  cfg.n_inner = 4;
  auto plan = wke::make_plan(cfg);
  Network net = Network::random(5, {2, 6, 6});
  net.parameters() *= 0.4;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.parameter_count());
  const double l = wke::loss_grad(net, cfg, plan, 0, plan.W.size(), grad);
  CHECK(l == Catch::Approx(wke::loss(net, cfg, plan)).epsilon(1e-12));

  std::mt19937_64 gen(29);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(net.parameter_count()) - 1);
  Network pert = net;
  for (int k = 0; k < 30; ++k) {
    const int idx = pick(gen);
    const double h = 1e-6;
    pert.parameters() = net.parameters();
    pert.parameters()[idx] += h;
    const double fp = wke::loss(pert, cfg, plan);
    pert.parameters()[idx] = net.parameters()[idx] - h;
    const double fm = wke::loss(pert, cfg, plan);
    const double fd = (fp - fm) / (2.0 * h);
    REQUIRE(rel_err(grad[idx], fd) < 1e-5);
  }
}

TEST_CASE("loss is independent of the thread count") {
  wke::WKEConfig cfg;
  cfg.n_samples = 20;
  cfg.n_initial = 8;
  cfg.n_inner = 8;
  auto plan = wke::make_plan(cfg);
  Network net = Network::random(61, {2, 10, 10});
  net.parameters() *= 0.4;
  CHECK(wke::loss(net, cfg, plan, 1) == wke::loss(net, cfg, plan, 4));
}

TEST_CASE("plan layout and inner point sets") {
  wke::WKEConfig cfg;
  cfg.n_samples = 64;
  cfg.n_initial = 16;
  cfg.n_inner = 32;
  auto plan = wke::make_plan(cfg);
  REQUIRE(plan.W.size() == 64);
  REQUIRE(plan.W0.size() == 16);
  REQUIRE(plan.u1.size() == 32);
  REQUIRE(plan.u2hat.size() == 32);
  for (int i = 0; i < 16; ++i) CHECK(plan.W0[i] == plan.W[i].u2);
  // The two inner endpoint sets are distinct Sobol draws.
  bool differ = false;
  for (std::size_t k = 0; k < plan.u2.size(); ++k)
    differ = differ || plan.u2[k] != plan.u2hat[k];
  CHECK(differ);
  wke::WKEConfig bad;
  bad.gamma = -1.0;
  CHECK_THROWS_AS(wke::make_plan(bad), std::invalid_argument);
}

TEST_CASE("inner quadrature points respect the interaction constraints") {
  // Every generated triple (p, p1, p2) must satisfy p1 <= p and p1 + p2 > p:
  // the first is the support restriction on the outer integral, the second is
  // the characteristic function chi(p < p1 + p2) built into the endpoint maps.
  wke::WKEConfig cfg;
  cfg.n_samples = 32;
  cfg.n_initial = 16;
  cfg.n_inner = 16;
  auto plan = wke::make_plan(cfg);
  for (const auto& s : plan.W) {
    const double p = s.u2;
    for (double u1 : plan.u1) {
      const double p1 = u1 * p;
      REQUIRE(p1 <= p);
      for (double u2 : plan.u2) {
        const double p2 = affine(u2, p - p1, p);
        REQUIRE(p1 + p2 > p);
        REQUIRE(p2 <= p);
      }
      for (double u2 : plan.u2hat) {
        const double p2 = affine(u2, p - p1, cfg.R);
        REQUIRE(p1 + p2 > p);
        REQUIRE(p2 <= cfg.R);
      }
    }
  }
}

TEST_CASE("training on the initial-condition term alone fits g0") {
  wke::WKEConfig cfg;
  cfg.n_inner = 4;  // inner sets are unused by the IC term
  auto plan = wke::make_plan(cfg);
  Network net = Network::random(11);
  AdamConfig ac;
  ac.lr = 1e-2;
  AdamState st(static_cast<Eigen::Index>(net.parameter_count()), ac);
  for (int step = 0; step < 3000; ++step) {
    ad::Tape tape(net);
    ad::Var v = wke::ic_term_on_tape(tape, plan);
    if (tape.value(v) < 1e-4) break;
    Eigen::VectorXd grad = tape.gradient(v);
    adam_step(st, net.parameters(), grad);
  }
  CHECK(wke::ic_term(net, plan) < 1e-4);
}

TEST_CASE("fast initial-condition gradient matches the taped gradient") {
  wke::WKEConfig cfg;
  cfg.n_samples = 64;
  cfg.n_initial = 32;
  cfg.n_inner = 4;
  auto plan = wke::make_plan(cfg);
  Network net = Network::random(29, {2, 13, 12});
  net.parameters() *= 0.5;
  Eigen::VectorXd fast = Eigen::VectorXd::Zero(net.parameter_count());
  const double value = wke::ic_term_grad(net, plan, fast);
  CHECK(value == Catch::Approx(wke::ic_term(net, plan)).epsilon(1e-13));
  ad::Tape tape(net);
  ad::Var ic = wke::ic_term_on_tape(tape, plan);
  Eigen::VectorXd taped = tape.gradient(ic);
  REQUIRE((fast - taped).lpNorm<Eigen::Infinity>() <
          1e-12 * std::max(1.0, taped.lpNorm<Eigen::Infinity>()));
}
