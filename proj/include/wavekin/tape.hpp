// Reverse-mode differentiation of scalar objectives assembled from network
// evaluations, affine sample maps and arithmetic.  Only theta-dependence is
// tracked on the tape; evaluation inputs (t, x) are plain doubles and their
// derivatives flow through the exact forward tangents of the network.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "wavekin/field.hpp"

namespace wavekin::ad {

class Tape;

/// Handle to a scalar node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::int32_t idx = -1;
};

class Tape {
 public:
  explicit Tape(const Network& net) : net_(&net) {}

  struct EvalOut {
    Var value, d_dt, d_dx;  // d_* only valid if requested
  };

  const Network& network() const { return *net_; }

  double value(Var v) const { return vals_[v.idx]; }

  Var constant(double c) { return push(Op::kLeaf, -1, -1, 0.0, c); }

  /// Evaluate the field at a batch of inputs Z (2 x B, row 0 = t, row 1 = x).
  /// Forward activations are retained until gradient() or reset().
  std::vector<EvalOut> eval_batch(const Eigen::MatrixXd& Z, bool need_dt,
                                  bool need_dx) {
    EvalNode node;
    node.need_dt = need_dt;
    node.need_dx = need_dx;
    net_->forward_batch(Z, need_dt, need_dx, node.work);
    const auto B = Z.cols();
    std::vector<EvalOut> out(B);
    node.first_var = static_cast<std::int32_t>(vals_.size());
    for (Eigen::Index k = 0; k < B; ++k) {
      out[k].value = push(Op::kLeaf, -1, -1, 0.0, node.work.value[k]);
      if (need_dt) out[k].d_dt = push(Op::kLeaf, -1, -1, 0.0, node.work.d_dt[k]);
      if (need_dx) out[k].d_dx = push(Op::kLeaf, -1, -1, 0.0, node.work.d_dx[k]);
    }
    evals_.push_back(std::move(node));
    return out;
  }

  EvalOut eval(double t, double x, bool need_dt, bool need_dx) {
    Eigen::MatrixXd Z(2, 1);
    Z << t, x;
    return eval_batch(Z, need_dt, need_dx)[0];
  }

  /// Accumulate seed * d(output)/d(theta) into grad (sized like theta).
  void gradient(Var output, double seed, Eigen::VectorXd& grad) {
    if (grad.size() != net_->parameter_count())
      throw std::invalid_argument("Tape::gradient: grad size mismatch");
    adj_.assign(vals_.size(), 0.0);
    adj_[output.idx] = seed;
    for (std::int32_t i = static_cast<std::int32_t>(ops_.size()) - 1; i >= 0; --i) {
      const Op& op = ops_[i];
      const double a = adj_[i];
      if (a == 0.0) continue;
      switch (op.kind) {
        case Op::kLeaf:
          break;
        case Op::kAdd:
          adj_[op.a] += a;
          adj_[op.b] += a;
          break;
        case Op::kSub:
          adj_[op.a] += a;
          adj_[op.b] -= a;
          break;
        case Op::kMul:
          adj_[op.a] += a * vals_[op.b];
          adj_[op.b] += a * vals_[op.a];
          break;
        case Op::kAxpb:  // c * x + const
          adj_[op.a] += a * op.c;
          break;
      }
    }
    for (const EvalNode& node : evals_) {
      const auto B = node.work.Z.cols();
      const int stride = 1 + (node.need_dt ? 1 : 0) + (node.need_dx ? 1 : 0);
      Eigen::VectorXd wv(B), wt, wx;
      if (node.need_dt) wt.resize(B);
      if (node.need_dx) wx.resize(B);
      bool any = false;
      for (Eigen::Index k = 0; k < B; ++k) {
        std::int32_t at = node.first_var + stride * static_cast<std::int32_t>(k);
        wv[k] = adj_[at++];
        if (node.need_dt) wt[k] = adj_[at++];
        if (node.need_dx) wx[k] = adj_[at++];
        any = any || wv[k] != 0.0 ||
              (node.need_dt && wt[k] != 0.0) || (node.need_dx && wx[k] != 0.0);
      }
      if (any) net_->backward_batch(node.work, wv, wt, wx, grad);
    }
    if (!grad.allFinite())
      throw std::runtime_error("Tape::gradient: non-finite gradient");
  }

  Eigen::VectorXd gradient(Var output) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(net_->parameter_count());
    gradient(output, 1.0, g);
    return g;
  }

  /// Drop all recorded nodes, keeping allocations for reuse.
  void reset() {
    ops_.clear();
    vals_.clear();
    evals_.clear();
  }

  // Recording primitives used by the operator overloads below.
  Var record_add(Var x, Var y) { return push(Op::kAdd, x.idx, y.idx, 0.0, vals_[x.idx] + vals_[y.idx]); }
  Var record_sub(Var x, Var y) { return push(Op::kSub, x.idx, y.idx, 0.0, vals_[x.idx] - vals_[y.idx]); }
  Var record_mul(Var x, Var y) { return push(Op::kMul, x.idx, y.idx, 0.0, vals_[x.idx] * vals_[y.idx]); }
  Var record_axpb(Var x, double c, double d) { return push(Op::kAxpb, x.idx, -1, c, c * vals_[x.idx] + d); }

 private:
  struct Op {
    enum Kind : std::uint8_t { kLeaf, kAdd, kSub, kMul, kAxpb } kind;
    std::int32_t a, b;
    double c;
  };
  struct EvalNode {
    Network::BatchWork work;
    bool need_dt = false, need_dx = false;
    std::int32_t first_var = 0;
  };

  Var push(Op::Kind kind, std::int32_t a, std::int32_t b, double c, double val) {
    ops_.push_back({kind, a, b, c});
    vals_.push_back(val);
    return {this, static_cast<std::int32_t>(vals_.size() - 1)};
  }

  const Network* net_;
  std::vector<Op> ops_;
  std::vector<double> vals_;
  std::vector<EvalNode> evals_;
  std::vector<double> adj_;
};

inline Var operator+(Var x, Var y) { return x.tape->record_add(x, y); }
inline Var operator-(Var x, Var y) { return x.tape->record_sub(x, y); }
inline Var operator*(Var x, Var y) { return x.tape->record_mul(x, y); }
inline Var operator*(double c, Var x) { return x.tape->record_axpb(x, c, 0.0); }
inline Var operator*(Var x, double c) { return c * x; }
inline Var operator+(Var x, double d) { return x.tape->record_axpb(x, 1.0, d); }
inline Var operator+(double d, Var x) { return x + d; }
inline Var operator-(Var x, double d) { return x.tape->record_axpb(x, 1.0, -d); }
inline Var operator-(double d, Var x) { return x.tape->record_axpb(x, -1.0, d); }
inline Var operator-(Var x) { return x.tape->record_axpb(x, -1.0, 0.0); }
inline Var operator/(Var x, double c) { return x.tape->record_axpb(x, 1.0 / c, 0.0); }

inline double value_of(Var v) { return v.tape->value(v); }
inline double value_of(double v) { return v; }

}  // namespace wavekin::ad
