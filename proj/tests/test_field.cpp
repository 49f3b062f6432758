#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <random>

#include "wavekin/field.hpp"
#include "wavekin/tape.hpp"

using namespace wavekin;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Central finite difference of a scalar function.
template <class F>
double central_fd(F&& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double rel_err(double a, double b) {
  return std::abs(a - b) / (std::abs(b) + 1e-8);
}

}  // namespace

TEST_CASE("parameter count and deterministic init") {
  Network net = Network::random(42);
  CHECK(net.parameter_count() == 2 * 128 + 128 + 128 * 128 + 128 + 128 + 1);
  CHECK(net.parameter_count() == 17025);

  Network again = Network::random(42);
  CHECK(net.parameters() == again.parameters());
  Network other = Network::random(43);
  CHECK(net.parameters() != other.parameters());
}

TEST_CASE("init schemes: standard normal everywhere vs variance-scaled") {
  Network sn = Network::random(7);
  // Default scheme draws every entry, biases included, from N(0,1).
  CHECK(sn.b1().cwiseAbs().maxCoeff() > 0.0);
  CHECK(std::abs(sn.bout()) > 0.0);
  const double var = sn.W2().array().square().mean();
  CHECK(var > 0.8);
  CHECK(var < 1.2);

  Network vs = Network::random(7, {}, Network::Init::variance_scaled);
  CHECK(vs.b1().isZero());
  CHECK(vs.b2().isZero());
  CHECK(vs.bout() == 0.0);
  // Glorot scale for the 128x128 layer is 2/(128+128).
  const double vvar = vs.W2().array().square().mean();
  CHECK(vvar < 0.05);
}

TEST_CASE("zero network evaluates to the output bias") {
  Network net = Network::zeros();
  auto rec = net.evaluate(0.3, 1.7);
  CHECK(rec.value == 0.0);
  CHECK(rec.d_dt == 0.0);
  CHECK(rec.d_dx == 0.0);
}

TEST_CASE("single-unit variant reproduces the explicit composition") {
  LayerWidths tiny{2, 1, 1};
  Network net(tiny);
  net.parameters() << 1, 1,  // W1
      0,                     // b1
      1,                     // W2
      0,                     // b2
      1,                     // W
      0;                     // b
  auto rec = net.evaluate(0.0, 0.0);
  CHECK(rec.value == Catch::Approx(sigmoid(sigmoid(0.0))).epsilon(1e-12));
  CHECK(rec.value == Catch::Approx(0.6224593).epsilon(1e-6));
}

TEST_CASE("input derivatives match central finite differences") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    // Modest weight scale keeps the finite-difference comparison clean.
    Network net = Network::random(1000 + trial, {2, 16, 16});
    net.parameters() *= 0.4;
    const double t = U(gen), x = U(gen);
    auto rec = net.evaluate(t, x);
    const double h = 1e-5 * std::max(1.0, std::abs(x));
    const double fd_x =
        central_fd([&](double xx) { return net.evaluate(t, xx).value; }, x, h);
    const double fd_t =
        central_fd([&](double tt) { return net.evaluate(tt, x).value; }, t, h);
    REQUIRE(rel_err(rec.d_dx, fd_x) < 1e-5);
    REQUIRE(rel_err(rec.d_dt, fd_t) < 1e-5);
  }
}

TEST_CASE("parameter gradient of plain value objective") {
  Network net = Network::zeros({2, 4, 4});
  ad::Tape tape(net);
  auto out = tape.eval(0.5, 0.5, false, false);
  auto grad = tape.gradient(out.value);
  // With zero hidden weights, d value / d output-bias = 1.
  CHECK(grad[grad.size() - 1] == 1.0);
}

TEST_CASE("gradient of constant objective is zero") {
  Network net = Network::random(5, {2, 8, 8});
  ad::Tape tape(net);
  auto c = tape.constant(3.0);
  auto grad = tape.gradient(c);
  CHECK(grad.norm() == 0.0);
}

TEST_CASE("parameter gradients match finite differences") {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  for (int trial = 0; trial < 20; ++trial) {
    Network net = Network::random(300 + trial, {2, 6, 5});
    net.parameters() *= 0.5;
    const double t = U(gen), x = U(gen);

    // Objective n^2 + 0.3 * d_t n + 0.7 * d_x n exercises value and both
    // tangent adjoint paths.
    auto objective = [&](const Network& nn) {
      auto r = nn.evaluate(t, x);
      return r.value * r.value + 0.3 * r.d_dt + 0.7 * r.d_dx;
    };

    ad::Tape tape(net);
    auto out = tape.eval(t, x, true, true);
    auto obj = out.value * out.value + 0.3 * out.d_dt + 0.7 * out.d_dx;
    auto grad = tape.gradient(obj);
    CHECK(tape.value(obj) == Catch::Approx(objective(net)).epsilon(1e-12));

    Network pert = net;
    std::uniform_int_distribution<int> pick(0, static_cast<int>(net.parameter_count()) - 1);
    for (int k = 0; k < 25; ++k) {
      const int idx = pick(gen);
      const double h = 1e-6;
      pert.parameters() = net.parameters();
      pert.parameters()[idx] += h;
      const double fp = objective(pert);
      pert.parameters()[idx] = net.parameters()[idx] - h;
      const double fm = objective(pert);
      const double fd = (fp - fm) / (2.0 * h);
      REQUIRE(rel_err(grad[idx], fd) < 1e-5);
    }
  }
}

TEST_CASE("objective gradient is linear") {
  Network net = Network::random(9, {2, 8, 8});
  const double t = 0.4, x = 1.1;
  ad::Tape t1(net);
  auto o1 = t1.eval(t, x, true, false);
  auto g1 = t1.gradient(o1.value * o1.value);
  ad::Tape t2(net);
  auto o2 = t2.eval(t, x, true, false);
  auto g2 = t2.gradient(o2.d_dt);
  ad::Tape t3(net);
  auto o3 = t3.eval(t, x, true, false);
  auto g3 = t3.gradient(2.5 * (o3.value * o3.value) + o3.d_dt);
  CHECK((g3 - (2.5 * g1 + g2)).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("gradient of n^2 equals 2 n grad n") {
  Network net = Network::random(13, {2, 8, 8});
  net.parameters() *= 0.5;
  const double t = -0.3, x = 0.8;
  ad::Tape t1(net);
  auto o1 = t1.eval(t, x, false, false);
  auto gsq = t1.gradient(o1.value * o1.value);
  ad::Tape t2(net);
  auto o2 = t2.eval(t, x, false, false);
  auto gn = t2.gradient(o2.value);
  const double n_val = net.evaluate(t, x).value;
  CHECK((gsq - 2.0 * n_val * gn).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("forward evaluations are bit-reproducible") {
  Network net = Network::random(99);
  auto a = net.evaluate(0.123, 4.56);
  auto b = net.evaluate(0.123, 4.56);
  CHECK(a.value == b.value);
  CHECK(a.d_dt == b.d_dt);
  CHECK(a.d_dx == b.d_dx);
}

TEST_CASE("checkpoint round trip") {
  Network net = Network::random(77, {2, 10, 9});
  const std::string path = "checkpoint_test.txt";
  net.save(path, 77);
  Network back = Network::load(path);
  CHECK(back.widths().hidden1 == 10);
  CHECK(back.widths().hidden2 == 9);
  CHECK((back.parameters() - net.parameters()).lpNorm<Eigen::Infinity>() == 0.0);
  std::remove(path.c_str());
}
