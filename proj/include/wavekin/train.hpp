// ADAM-based minimization of the semi-discrete functionals with contiguous
// Sobol batch scheduling and multi-stage time refinement.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "wavekin/field.hpp"

namespace wavekin {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  Eigen::VectorXd m, v;
  AdamConfig cfg;

  explicit AdamState(Eigen::Index n, AdamConfig c = {})
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)), cfg(c) {}
};

/// One ADAM update with bias correction.
inline void adam_step(AdamState& st, Eigen::VectorXd& theta,
                      const Eigen::VectorXd& grad) {
  if (!grad.allFinite())
    throw std::runtime_error("adam_step: non-finite gradient");
  st.step += 1;
  const auto& c = st.cfg;
  st.m = c.beta1 * st.m + (1.0 - c.beta1) * grad;
  st.v = c.beta2 * st.v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
  theta.array() -=
      c.lr * (st.m / bc1).array() / ((st.v / bc2).array().sqrt() + c.eps);
}

/// One time-refinement stage: truncation parameters, sample count, epochs.
struct StageConfig {
  double T = 0.0;
  double R = 0.0;
  std::size_t n_samples = 0;
  int epochs = 0;
};

struct TrainingSchedule {
  std::vector<StageConfig> stages;
  std::size_t batch_size = 1024;
  int fullset_every = 1;  // epochs between full-set loss evaluations
  // Optional initial-condition warmup: steps on the data-mismatch term
  // alone before the first stage, for problems that expose ic_loss_grad.
  // Recorded in the history with stage = -1.
  int warmup_steps = 0;
  double warmup_lr = 1e-2;
  // Extra weight on the data-mismatch gradient during the batched stages.
  // Zero disables it.  A positive anchor keeps the initial condition pinned
  // while the residual term is still far from converged, which prevents the
  // optimizer from sliding into the trivial near-zero field.  Best-theta
  // selection still uses the unweighted full-set loss.
  double ic_anchor = 0.0;
};

struct HistoryRow {
  int stage = 0;
  int epoch = 0;
  std::size_t step = 0;
  double batch_loss = 0.0;
  double fullset_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  Eigen::VectorXd best_theta;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<HistoryRow> history;
};

struct TrainingDiverged : std::runtime_error {
  std::vector<HistoryRow> history;
  explicit TrainingDiverged(std::vector<HistoryRow> h)
      : std::runtime_error("training diverged"), history(std::move(h)) {}
};

/// Minimize a semi-discrete functional.  Problem must provide
///   set_stage(StageConfig), sample_count(), full_loss(),
///   batch_loss_grad(begin, end, grad), network().
/// Batches are contiguous index ranges of the Sobol sample set; a trailing
/// remainder smaller than batch_size is dropped.  Returns the parameters
/// with the lowest recorded full-set loss across all stages.
template <class Problem>
TrainResult train(Problem& prob, const TrainingSchedule& sched,
                  AdamConfig adam_cfg = {},
                  const std::function<void(int, const Network&)>&
                      on_stage_end = nullptr) {
  Network& net = prob.network();
  AdamState adam(net.parameter_count(), adam_cfg);
  Eigen::VectorXd grad(net.parameter_count());
  Eigen::VectorXd ic_grad(net.parameter_count());

  TrainResult result;
  result.best_theta = net.parameters();

  double initial_loss = std::numeric_limits<double>::quiet_NaN();
  std::size_t global_step = 0;

  if (sched.warmup_steps > 0) {
    if constexpr (requires { prob.ic_loss_grad(grad); }) {
      prob.set_stage(sched.stages.front());
      AdamConfig warm_cfg = adam_cfg;
      warm_cfg.lr = sched.warmup_lr;
      AdamState warm(net.parameter_count(), warm_cfg);
      for (int k = 0; k < sched.warmup_steps; ++k) {
        grad.setZero();
        const double l = prob.ic_loss_grad(grad);
        if (!std::isfinite(l)) throw TrainingDiverged(result.history);
        adam_step(warm, net.parameters(), grad);
        if (k % 100 == 0 || k + 1 == sched.warmup_steps)
          result.history.push_back({-1, k, 0, l,
                                    std::numeric_limits<double>::quiet_NaN()});
      }
    }
  }

  auto consider = [&](double fullset) {
    if (fullset < result.best_loss) {
      result.best_loss = fullset;
      result.best_theta = net.parameters();
    }
  };

  for (int s = 0; s < static_cast<int>(sched.stages.size()); ++s) {
    const StageConfig& stage = sched.stages[s];
    prob.set_stage(stage);

    double fl = prob.full_loss();
    if (s == 0) initial_loss = fl;
    result.history.push_back({s, -1, global_step, fl, fl});
    consider(fl);

    const std::size_t n = prob.sample_count();
    const std::size_t bs = std::min(sched.batch_size, n);
    const std::size_t n_batches = n / bs;

    for (int epoch = 0; epoch < stage.epochs; ++epoch) {
      for (std::size_t b = 0; b < n_batches; ++b) {
        grad.setZero();
        const double bl = prob.batch_loss_grad(b * bs, b * bs + bs, grad);
        if (!std::isfinite(bl) || bl > 1e6 * initial_loss)
          throw TrainingDiverged(result.history);
        if constexpr (requires { prob.ic_loss_grad(grad); }) {
          if (sched.ic_anchor > 0.0) {
            ic_grad.setZero();
            const double il = prob.ic_loss_grad(ic_grad);
            if (!std::isfinite(il)) throw TrainingDiverged(result.history);
            grad += sched.ic_anchor * ic_grad;
          }
        }
        adam_step(adam, net.parameters(), grad);
        ++global_step;
        result.history.push_back({s, epoch, global_step, bl,
                                  std::numeric_limits<double>::quiet_NaN()});
      }
      const bool last = epoch + 1 == stage.epochs;
      if (last || (epoch + 1) % sched.fullset_every == 0) {
        const double full = prob.full_loss();
        result.history.back().fullset_loss = full;
        consider(full);
      }
    }
    if (on_stage_end) on_stage_end(s, net);
  }
  return result;
}

}  // namespace wavekin
