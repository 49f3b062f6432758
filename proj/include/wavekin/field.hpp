// The scalar field model n(t,x;theta): a dense feedforward network with two
// hidden sigmoid layers and a linear output.  Evaluation, first derivatives
// with respect to each input, and parameter gradients are all exact
// (machine-precision chain rule, no finite differences).
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace wavekin {

struct LayerWidths {
  int input = 2;
  int hidden1 = 128;
  int hidden2 = 128;
  // output width is fixed to 1
};

/// Value and exact input derivatives of one field evaluation.
struct EvalRecord {
  double value = 0.0;
  double d_dt = 0.0;
  double d_dx = 0.0;
};

namespace detail {

// Numerically stable sigmoid; saturates cleanly for |z| > ~37.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

/// n(t,x;theta) = W sigma(W2 sigma(W1 z + b1) + b2) + b with z = (t, x).
///
/// Parameters live in one flat vector, layout
///   [W1 (col-major h1 x in), b1, W2 (h2 x h1), b2, W (h2), b],
/// so the optimizer and checkpoint format operate on a single array.
class Network {
 public:
  using Vec = Eigen::VectorXd;
  using Mat = Eigen::MatrixXd;

  explicit Network(LayerWidths widths = {})
      : widths_(widths), theta_(Vec::Zero(parameter_count(widths))) {}

  /// Parameter initialization scheme.  The default draws every entry,
  /// weights and biases alike, i.i.d. standard normal.  The variance-scaled
  /// alternative (Glorot weights, zero biases) is available behind
  /// configuration for robustness studies.
  enum class Init { standard_normal, variance_scaled };

  static Network random(std::uint64_t seed, LayerWidths widths = {},
                        Init scheme = Init::standard_normal) {
    Network net(widths);
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    if (scheme == Init::standard_normal) {
      for (Eigen::Index i = 0; i < net.theta_.size(); ++i)
        net.theta_[i] = normal(gen);
      return net;
    }
    auto fill = [&](Eigen::Index offset, Eigen::Index count, int fan_in,
                    int fan_out) {
      const double scale = std::sqrt(2.0 / (fan_in + fan_out));
      for (Eigen::Index i = 0; i < count; ++i)
        net.theta_[offset + i] = scale * normal(gen);
    };
    fill(0, static_cast<Eigen::Index>(widths.hidden1) * widths.input,
         widths.input, widths.hidden1);
    fill(net.off_W2(), static_cast<Eigen::Index>(widths.hidden2) * widths.hidden1,
         widths.hidden1, widths.hidden2);
    fill(net.off_w(), widths.hidden2, widths.hidden2, 1);
    return net;
  }

  static Network zeros(LayerWidths widths = {}) { return Network(widths); }

  static Eigen::Index parameter_count(LayerWidths w) {
    return static_cast<Eigen::Index>(w.hidden1) * w.input + w.hidden1 +
           static_cast<Eigen::Index>(w.hidden2) * w.hidden1 + w.hidden2 +
           w.hidden2 + 1;
  }
  Eigen::Index parameter_count() const { return theta_.size(); }

  const LayerWidths& widths() const { return widths_; }
  const Vec& parameters() const { return theta_; }
  Vec& parameters() { return theta_; }

  // Parameter block views.
  auto W1() const { return Eigen::Map<const Mat>(theta_.data(), widths_.hidden1, widths_.input); }
  auto b1() const { return Eigen::Map<const Vec>(theta_.data() + off_b1(), widths_.hidden1); }
  auto W2() const { return Eigen::Map<const Mat>(theta_.data() + off_W2(), widths_.hidden2, widths_.hidden1); }
  auto b2() const { return Eigen::Map<const Vec>(theta_.data() + off_b2(), widths_.hidden2); }
  auto Wout() const { return Eigen::Map<const Vec>(theta_.data() + off_w(), widths_.hidden2); }
  double bout() const { return theta_[theta_.size() - 1]; }

  /// Saved forward state of a batch evaluation, consumed by backward().
  struct BatchWork {
    Mat Z;              // input x batch
    Mat H1, H2;         // sigmoid activations
    Mat V1t, U2t, V2t;  // tangent chain, t direction
    Mat V1x, U2x, V2x;  // tangent chain, x direction
    bool has_dt = false, has_dx = false;
    Vec value, d_dt, d_dx;
  };

  /// Batched forward pass with optional exact tangents along the t and x
  /// input axes.  Z is input x B (row 0 = t, row 1 = x).
  void forward_batch(const Mat& Z, bool need_dt, bool need_dx,
                     BatchWork& work) const {
    const auto B = Z.cols();
    work.Z = Z;
    work.has_dt = need_dt;
    work.has_dx = need_dx;

    work.H1.noalias() = W1() * Z;
    work.H1.colwise() += b1();
    apply_sigmoid(work.H1);
    work.H2.noalias() = W2() * work.H1;
    work.H2.colwise() += b2();
    apply_sigmoid(work.H2);
    work.value.noalias() = work.H2.transpose() * Wout();
    work.value.array() += bout();
    if (!work.value.allFinite())
      throw std::runtime_error("Network::forward_batch: non-finite output");

    auto tangent = [&](int dir, Mat& V1, Mat& U2, Mat& V2, Vec& out) {
      // dH1 = H1 (1 - H1) etc.; the first-layer tangent is the dir-th
      // column of W1 broadcast over the batch.
      V1 = (work.H1.array() * (1.0 - work.H1.array())).matrix();
      V1.array().colwise() *= W1().col(dir).array();
      U2.noalias() = W2() * V1;
      V2 = (work.H2.array() * (1.0 - work.H2.array()) * U2.array()).matrix();
      out.noalias() = V2.transpose() * Wout();
    };
    if (need_dt) tangent(0, work.V1t, work.U2t, work.V2t, work.d_dt);
    if (need_dx) tangent(1, work.V1x, work.U2x, work.V2x, work.d_dx);
    (void)B;
  }

  EvalRecord evaluate(double t, double x) const {
    Mat Z(2, 1);
    Z << t, x;
    BatchWork w;
    forward_batch(Z, true, true, w);
    return {w.value[0], w.d_dt[0], w.d_dx[0]};
  }

  /// Accumulate into `grad` the parameter gradient of
  ///   sum_k  wv_k * value_k + wt_k * d_dt_k + wx_k * d_dx_k
  /// for the batch recorded in `work`.  Adjoint vectors for directions the
  /// forward pass did not compute must be empty or zero.
  void backward_batch(const BatchWork& work, const Vec& wv, const Vec& wt,
                      const Vec& wx, Vec& grad) const {
    const auto B = work.Z.cols();
    const int h1 = widths_.hidden1, h2 = widths_.hidden2, in = widths_.input;
    Mat dH1 = (work.H1.array() * (1.0 - work.H1.array())).matrix();
    Mat dH2 = (work.H2.array() * (1.0 - work.H2.array())).matrix();
    // sigma'' = sigma' (1 - 2 sigma)
    Mat ddH1 = (dH1.array() * (1.0 - 2.0 * work.H1.array())).matrix();
    Mat ddH2 = (dH2.array() * (1.0 - 2.0 * work.H2.array())).matrix();

    auto gW1 = Eigen::Map<Mat>(grad.data(), h1, in);
    auto gb1 = Eigen::Map<Vec>(grad.data() + off_b1(), h1);
    auto gW2 = Eigen::Map<Mat>(grad.data() + off_W2(), h2, h1);
    auto gb2 = Eigen::Map<Vec>(grad.data() + off_b2(), h2);
    auto gw = Eigen::Map<Vec>(grad.data() + off_w(), h2);

    // Primal value path.
    Mat A2bar = Mat::Zero(h2, B);
    if (wv.size()) {
      A2bar = dH2;
      A2bar.array().rowwise() *= wv.transpose().array();
      A2bar.array().colwise() *= Wout().array();
      gw.noalias() += work.H2 * wv;
      grad[grad.size() - 1] += wv.sum();
    }

    Mat A1bar = Mat::Zero(h1, B);

    // Tangent paths.  Each contributes through both the tangent chain
    // (U-bar) and the curvature of the primal activations (A-bar).  The
    // first-layer tangent is W1.col(dir) broadcast over the batch, so its
    // curvature term carries that column as a per-row factor.
    auto tangent_back = [&](int dir, const Mat& V1, const Mat& U2,
                            const Mat& V2, const Vec& wd) {
      if (!wd.size()) return;
      Mat wwd = Wout() * wd.transpose();  // h2 x B
      Mat U2bar = (dH2.array() * wwd.array()).matrix();
      A2bar.array() += ddH2.array() * U2.array() * wwd.array();
      gw.noalias() += V2 * wd;
      gW2.noalias() += U2bar * V1.transpose();
      Mat V1bar = W2().transpose() * U2bar;
      Mat U1bar = (dH1.array() * V1bar.array()).matrix();
      Mat curv = (ddH1.array() * V1bar.array()).matrix();
      curv.array().colwise() *= W1().col(dir).array();
      A1bar += curv;
      gW1.col(dir) += U1bar.rowwise().sum();
    };
    if (work.has_dt) tangent_back(0, work.V1t, work.U2t, work.V2t, wt);
    if (work.has_dx) tangent_back(1, work.V1x, work.U2x, work.V2x, wx);

    gW2.noalias() += A2bar * work.H1.transpose();
    gb2 += A2bar.rowwise().sum();
    A1bar.array() += (dH1.array() * (W2().transpose() * A2bar).array());
    gW1.noalias() += A1bar * work.Z.transpose();
    gb1 += A1bar.rowwise().sum();
  }

  // ---- checkpoint I/O -------------------------------------------------

  void save(const std::string& path, std::uint64_t seed = 0) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("Network::save: cannot open " + path);
    out << "wavekin-checkpoint v1\n"
        << widths_.input << ' ' << widths_.hidden1 << ' ' << widths_.hidden2
        << " 1 " << seed << '\n';
    out.precision(17);
    for (Eigen::Index i = 0; i < theta_.size(); ++i) out << theta_[i] << '\n';
    if (!out) throw std::runtime_error("Network::save: write failed");
  }

  static Network load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("Network::load: cannot open " + path);
    std::string magic, version;
    in >> magic >> version;
    if (magic != "wavekin-checkpoint" || version != "v1")
      throw std::runtime_error("Network::load: bad header in " + path);
    LayerWidths w;
    int out_width;
    std::uint64_t seed;
    in >> w.input >> w.hidden1 >> w.hidden2 >> out_width >> seed;
    Network net(w);
    for (Eigen::Index i = 0; i < net.theta_.size(); ++i) in >> net.theta_[i];
    if (!in) throw std::runtime_error("Network::load: truncated " + path);
    return net;
  }

 private:
  Eigen::Index off_b1() const {
    return static_cast<Eigen::Index>(widths_.hidden1) * widths_.input;
  }
  Eigen::Index off_W2() const { return off_b1() + widths_.hidden1; }
  Eigen::Index off_b2() const {
    return off_W2() + static_cast<Eigen::Index>(widths_.hidden2) * widths_.hidden1;
  }
  Eigen::Index off_w() const { return off_b2() + widths_.hidden2; }

  static void apply_sigmoid(Mat& m) {
    double* p = m.data();
    const Eigen::Index n = m.size();
    for (Eigen::Index i = 0; i < n; ++i) p[i] = detail::sigmoid(p[i]);
  }

  LayerWidths widths_;
  Vec theta_;
};

}  // namespace wavekin
