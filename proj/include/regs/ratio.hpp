#pragma once

// Log-density-ratio estimation with the Bregman score built on
// g(x) = x log x - x, on the log scale:
//
//   B(D) = E_q[exp D(X)] - E_w[(u/w)(Y) D(Y)]
//
// whose population minimizer is D* = log(u/q). The input gradient of the
// fitted D is the velocity field of the particle flow.

#include "regs/nn_core.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <string>

namespace regs {

struct RatioBatch {
  Points particles;                // n x d, draws from the current particle law
  Points references;               // m x d, draws from the reference law w
  Vector importance_log_weights;   // m, log u(Y) - log w(Y)

  void validate() const {
    detail::require(particles.rows() >= 1, "RatioBatch: need at least one particle");
    detail::require(references.rows() >= 1, "RatioBatch: need at least one reference point");
    detail::require_dim(particles.cols() == references.cols(),
                        "RatioBatch: particle and reference dimensions differ");
    detail::require_dim(importance_log_weights.size() == references.rows(),
                        "RatioBatch: one importance log-weight per reference point required");
    if (!particles.allFinite() || !references.allFinite() || !importance_log_weights.allFinite())
      throw NumericError("RatioBatch: all entries must be finite");
  }
};

enum class BatchRegime { automatic, full, minibatch };

struct TrainerConfig {
  double learning_rate = 5e-4;
  OptimizerKind optimizer = OptimizerKind::adam;
  int inner_steps_first = 200;
  int inner_steps_warm = 20;
  double exp_clamp = 30.0;
  double weight_log_clamp = 30.0;
  BatchRegime batch_regime = BatchRegime::automatic;
  std::size_t minibatch_size = 1024;
  /// Full batch at or below this particle count when the regime is automatic.
  std::size_t full_batch_limit = 5000;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(learning_rate > 0, "TrainerConfig: learning_rate must be positive");
    detail::require(inner_steps_first >= 0 && inner_steps_warm >= 0,
                    "TrainerConfig: inner step counts must be non-negative");
    detail::require(exp_clamp >= 1 && weight_log_clamp >= 1,
                    "TrainerConfig: clamps must be >= 1");
    detail::require(minibatch_size >= 1, "TrainerConfig: minibatch_size must be positive");
  }

  OptimizerConfig optimizer_config() const {
    OptimizerConfig c;
    c.kind = optimizer;
    c.learning_rate = learning_rate;
    return c;
  }
};

class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, double last_finite_loss)
      : NumericError(what), last_finite_loss_(last_finite_loss) {}
  double last_finite_loss() const { return last_finite_loss_; }

 private:
  double last_finite_loss_;
};

namespace detail {

inline double clamp_abs(double v, double c) { return std::clamp(v, -c, c); }

}  // namespace detail

/// Empirical log-scale Bregman score from precomputed D values.
inline double bregman_loss_values(const Vector& d_particles, const Vector& d_references,
                                  const Vector& importance_log_weights, double exp_clamp = 30.0,
                                  double weight_log_clamp = 30.0) {
  detail::require_dim(d_references.size() == importance_log_weights.size(),
                      "bregman_loss: reference values and weights differ in length");
  detail::require(d_particles.size() >= 1 && d_references.size() >= 1,
                  "bregman_loss: empty batch");
  double first = 0.0;
  for (Eigen::Index i = 0; i < d_particles.size(); ++i)
    first += std::exp(detail::clamp_abs(d_particles[i], exp_clamp));
  first /= static_cast<double>(d_particles.size());
  double second = 0.0;
  for (Eigen::Index i = 0; i < d_references.size(); ++i)
    second += std::exp(detail::clamp_abs(importance_log_weights[i], weight_log_clamp)) *
              d_references[i];
  second /= static_cast<double>(d_references.size());
  if (!std::isfinite(first))
    throw NumericError(detail::concat("bregman_loss: particle term exp(D) is not finite (", first, ")"));
  if (!std::isfinite(second))
    throw NumericError(
        detail::concat("bregman_loss: weighted reference term is not finite (", second, ")"));
  return first - second;
}

inline double bregman_loss_log(const RatioNetwork& net, const RatioBatch& batch,
                               const TrainerConfig& cfg = {}) {
  batch.validate();
  return bregman_loss_values(net.forward_batch(batch.particles), net.forward_batch(batch.references),
                             batch.importance_log_weights, cfg.exp_clamp, cfg.weight_log_clamp);
}

enum class BregmanGenerator {
  kl,         // g(x) = x log x - x
  quadratic,  // g(x) = x^2 / 2
};

/// Ratio-scale Bregman score E_q[g'(R)R - g(R)] - E_w[(u/w) g'(R)].
inline double bregman_loss_general(const Vector& r_at_q, const Vector& r_at_w,
                                   const Vector& u_over_w, BregmanGenerator g) {
  detail::require_dim(r_at_w.size() == u_over_w.size(),
                      "bregman_loss_general: reference values and weights differ in length");
  detail::require(r_at_q.size() >= 1 && r_at_w.size() >= 1, "bregman_loss_general: empty batch");
  if (g == BregmanGenerator::kl) {
    if ((r_at_q.array() <= 0).any() || (r_at_w.array() <= 0).any())
      throw Error("bregman_loss_general: ratio values must be positive under the kl generator");
    // g'(R) = log R, so g'(R)R - g(R) = R.
    return r_at_q.mean() - (u_over_w.array() * r_at_w.array().log()).mean();
  }
  // g'(R) = R, so g'(R)R - g(R) = R^2 / 2.
  return 0.5 * r_at_q.squaredNorm() / static_cast<double>(r_at_q.size()) -
         (u_over_w.array() * r_at_w.array()).mean();
}

namespace detail {

struct StackedBatch {
  Matrix columns;             // d x (n + m): particles first, then references
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  Eigen::RowVectorXd ref_coeff;  // exp(clamped log-weight), per reference
};

inline StackedBatch stack(const RatioBatch& batch, double weight_log_clamp) {
  StackedBatch s;
  s.n = batch.particles.rows();
  s.m = batch.references.rows();
  s.columns.resize(batch.particles.cols(), s.n + s.m);
  s.columns.leftCols(s.n) = batch.particles.transpose();
  s.columns.rightCols(s.m) = batch.references.transpose();
  s.ref_coeff = batch.importance_log_weights.transpose().unaryExpr(
      [c = weight_log_clamp](double v) { return std::exp(clamp_abs(v, c)); });
  return s;
}

// Loss and output gradient for outputs laid out as in StackedBatch.
// Inputs to exp beyond the clamp contribute no gradient.
inline double loss_and_upstream(const Eigen::RowVectorXd& out, Eigen::Index n, Eigen::Index m,
                                const Eigen::RowVectorXd& ref_coeff, double exp_clamp,
                                Eigen::RowVectorXd* upstream) {
  if (upstream) upstream->resize(n + m);
  double first = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = out[i];
    const double e = std::exp(clamp_abs(v, exp_clamp));
    first += e;
    if (upstream) (*upstream)[i] = (std::abs(v) > exp_clamp) ? 0.0 : e / static_cast<double>(n);
  }
  double second = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    second += ref_coeff[i] * out[n + i];
    if (upstream) (*upstream)[n + i] = -ref_coeff[i] / static_cast<double>(m);
  }
  return first / static_cast<double>(n) - second / static_cast<double>(m);
}

}  // namespace detail

/// Gradient of bregman_loss_log with respect to the network parameters.
inline ParamSet loss_grad(const RatioNetwork& net, const RatioBatch& batch,
                          const TrainerConfig& cfg = {}) {
  batch.validate();
  const auto s = detail::stack(batch, cfg.weight_log_clamp);
  const auto t = net.trace(s.columns);
  Eigen::RowVectorXd upstream;
  const double loss =
      detail::loss_and_upstream(t.output(), s.n, s.m, s.ref_coeff, cfg.exp_clamp, &upstream);
  if (!std::isfinite(loss)) throw NumericError("loss_grad: loss is not finite");
  return net.backward_params(t, upstream);
}

struct TrainResult {
  RatioNetwork network;
  double initial_loss = 0.0;
  double final_loss = 0.0;  // loss of the returned (best observed) network
  int steps = 0;
};

/// Minimizes the empirical score with the configured optimizer, returning the
/// best network observed. Passing `state` carries optimizer moments across calls.
inline TrainResult train_ratio(RatioNetwork net, const RatioBatch& batch, const TrainerConfig& cfg,
                               bool warm_start, OptimizerState* state = nullptr) {
  cfg.validate();
  batch.validate();
  const int steps = warm_start ? cfg.inner_steps_warm : cfg.inner_steps_first;

  OptimizerState local = OptimizerState::for_network(net, cfg.optimizer_config());
  OptimizerState& opt = state ? *state : local;
  opt.config = cfg.optimizer_config();

  const auto s = detail::stack(batch, cfg.weight_log_clamp);
  const auto n = s.n;
  const auto m = s.m;

  bool minibatch = false;
  if (cfg.batch_regime == BatchRegime::minibatch) minibatch = true;
  if (cfg.batch_regime == BatchRegime::automatic)
    minibatch = static_cast<std::size_t>(n) > cfg.full_batch_limit;

  auto full_loss = [&](const RatioNetwork& candidate) {
    return detail::loss_and_upstream(candidate.trace(s.columns).output(), n, m, s.ref_coeff,
                                     cfg.exp_clamp, nullptr);
  };

  TrainResult result;
  result.steps = steps;
  if (steps == 0) {
    result.initial_loss = result.final_loss = full_loss(net);
    result.network = std::move(net);
    return result;
  }

  Rng rng(cfg.seed);
  double best_loss = std::numeric_limits<double>::infinity();
  RatioNetwork best = net;
  double last_finite = std::numeric_limits<double>::quiet_NaN();
  int non_finite_run = 0;
  Eigen::RowVectorXd upstream;

  auto record = [&](double loss, const RatioNetwork& candidate) {
    if (std::isfinite(loss)) {
      last_finite = loss;
      non_finite_run = 0;
      if (loss < best_loss) {
        best_loss = loss;
        best = candidate;
      }
      return true;
    }
    if (++non_finite_run >= 3)
      throw TrainingDiverged(
          detail::concat("train_ratio: loss non-finite for 3 consecutive steps (last finite loss ",
                         last_finite, ")"),
          last_finite);
    return false;
  };

  if (!minibatch) {
    for (int step = 0; step < steps; ++step) {
      const auto t = net.trace(s.columns);
      const double loss =
          detail::loss_and_upstream(t.output(), n, m, s.ref_coeff, cfg.exp_clamp, &upstream);
      if (step == 0) result.initial_loss = loss;
      if (!record(loss, net)) continue;
      const auto grads = net.backward_params(t, upstream);
      if (!std::all_of(grads.begin(), grads.end(),
                       [](const DenseLayer& g) { return g.weight.allFinite() && g.bias.allFinite(); })) {
        record(std::numeric_limits<double>::quiet_NaN(), net);
        continue;
      }
      optimizer_step(net, opt, grads);
    }
    record(full_loss(net), net);
  } else {
    // Minibatch losses are noisy, so selection compares full-batch losses of
    // the starting and final networks only.
    const auto b = static_cast<Eigen::Index>(cfg.minibatch_size);
    const auto bn = std::min(b, n);
    const auto bm = std::min(b, m);
    std::uniform_int_distribution<Eigen::Index> pick_n(0, n - 1);
    std::uniform_int_distribution<Eigen::Index> pick_m(0, m - 1);
    result.initial_loss = full_loss(net);
    record(result.initial_loss, net);
    Matrix cols(s.columns.rows(), bn + bm);
    Eigen::RowVectorXd coeff(bm);
    for (int step = 0; step < steps; ++step) {
      for (Eigen::Index i = 0; i < bn; ++i) cols.col(i) = s.columns.col(pick_n(rng));
      for (Eigen::Index i = 0; i < bm; ++i) {
        const auto j = pick_m(rng);
        cols.col(bn + i) = s.columns.col(n + j);
        coeff[i] = s.ref_coeff[j];
      }
      const auto t = net.trace(cols);
      const double loss =
          detail::loss_and_upstream(t.output(), bn, bm, coeff, cfg.exp_clamp, &upstream);
      if (!std::isfinite(loss)) {
        record(loss, net);
        continue;
      }
      optimizer_step(net, opt, net.backward_params(t, upstream));
    }
    record(full_loss(net), net);
  }

  if (!std::isfinite(best_loss))
    throw TrainingDiverged("train_ratio: no finite loss observed", last_finite);
  result.network = std::move(best);
  result.final_loss = best_loss;
  return result;
}

/// Velocity of the particle flow: the input gradient of the fitted log ratio.
inline Points velocity_field(const RatioNetwork& net, const Points& points) {
  detail::require_dim(points.cols() == net.input_dim(),
                      detail::concat("velocity_field: points have dimension ", points.cols(),
                                     ", network expects ", net.input_dim()));
  return net.grad_input_batch(points);
}

}  // namespace regs
