#pragma once

// Feedforward scalar network used as the log-density-ratio model, with
// batched backpropagation and an Adam / plain SGD optimizer.

#include "regs/common.hpp"

#include <json.hpp>

#include <cstddef>
#include <vector>

namespace regs {

struct DenseLayer {
  Matrix weight;  // fan_out x fan_in
  Vector bias;    // fan_out
};

/// Parameter-shaped container; also used for gradients and optimizer moments.
using ParamSet = std::vector<DenseLayer>;

inline ParamSet zeros_like(const ParamSet& params) {
  ParamSet out;
  out.reserve(params.size());
  for (const auto& l : params)
    out.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  return out;
}

/// Intermediate values of a batched forward pass. Columns index the batch.
struct ForwardTrace {
  const Matrix* input = nullptr;      // d x B, not owned
  std::vector<Matrix> activations;    // hidden-layer outputs
  std::vector<Matrix> preactivations;
  Eigen::RowVectorXd output() const { return preactivations.back().row(0); }
  const Matrix& layer_input(std::size_t l) const { return l == 0 ? *input : activations[l - 1]; }
};

/// Blocked products are fastest; coefficient-wise products give results that
/// do not depend on how many columns are evaluated together.
enum class ProductMode { blocked, batch_invariant };

class RatioNetwork {
 public:
  RatioNetwork() = default;

  RatioNetwork(ParamSet layers, double activation_slope = 0.2)
      : layers_(std::move(layers)), slope_(activation_slope) {
    validate();
  }

  /// Fan-in scaled Gaussian initialization with zero biases. `depth` counts
  /// affine layers, so there are depth-1 hidden layers of equal width.
  static RatioNetwork create(int input_dim, int depth, int width, std::uint64_t seed,
                             double activation_slope = 0.2) {
    if (input_dim < 1 || width < 1)
      throw Error(detail::concat("network_init: dimensions must be positive (input_dim=",
                                 input_dim, ", width=", width, ")"));
    if (depth < 2)
      throw Error(detail::concat("network_init: depth must be >= 2 (got ", depth,
                                 "); the network needs at least one hidden layer"));
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    ParamSet layers;
    int fan_in = input_dim;
    for (int l = 0; l < depth; ++l) {
      const bool last = (l == depth - 1);
      const int fan_out = last ? 1 : width;
      const double gain = last ? 1.0 : 2.0 / (1.0 + activation_slope * activation_slope);
      const double sd = std::sqrt(gain / fan_in);
      DenseLayer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
      for (int r = 0; r < fan_out; ++r)
        for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = sd * normal(rng);
      layers.push_back(std::move(layer));
      fan_in = fan_out;
    }
    return RatioNetwork(std::move(layers), activation_slope);
  }

  int input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
  int depth() const { return static_cast<int>(layers_.size()); }
  int hidden_width() const { return static_cast<int>(layers_.front().weight.rows()); }
  double activation_slope() const { return slope_; }
  const ParamSet& layers() const { return layers_; }
  ParamSet& mutable_layers() { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Forward pass over a d x B block of column inputs. `columns` must outlive the trace.
  ForwardTrace trace(const Matrix& columns, ProductMode mode = ProductMode::blocked) const {
    detail::require_dim(columns.rows() == input_dim(),
                        detail::concat("forward: input has dimension ", columns.rows(),
                                       ", network expects ", input_dim()));
    ForwardTrace t;
    t.input = &columns;
    t.activations.reserve(layers_.size() - 1);
    t.preactivations.reserve(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Matrix& in = t.layer_input(l);
      Matrix z(layers_[l].weight.rows(), in.cols());
      if (mode == ProductMode::blocked)
        z.noalias() = layers_[l].weight * in;
      else
        z.noalias() = layers_[l].weight.lazyProduct(in);
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) t.activations.push_back(z.cwiseMax(slope_ * z));
      t.preactivations.push_back(std::move(z));
    }
    return t;
  }

  /// Gradient of sum_i upstream_i * D(x_i) with respect to the parameters.
  ParamSet backward_params(const ForwardTrace& t, const Eigen::RowVectorXd& upstream) const {
    detail::require_dim(upstream.size() == t.input->cols(),
                        detail::concat("grad_params: ", upstream.size(), " output gradients for ",
                                       t.input->cols(), " inputs"));
    ParamSet grads(layers_.size());
    Matrix delta = upstream;  // fan_out x B
    for (std::size_t l = layers_.size(); l-- > 0;) {
      grads[l].weight.noalias() = delta * t.layer_input(l).transpose();
      grads[l].bias = delta.rowwise().sum();
      if (l > 0) {
        Matrix back(layers_[l].weight.cols(), delta.cols());
        back.noalias() = layers_[l].weight.transpose() * delta;
        apply_leaky_derivative(back, t.preactivations[l - 1]);
        delta = std::move(back);
      }
    }
    return grads;
  }

  /// Input gradients for every column of the trace (d x B).
  Matrix backward_input(const ForwardTrace& t, ProductMode mode = ProductMode::blocked) const {
    Matrix delta = Matrix::Ones(1, t.input->cols());
    for (std::size_t l = layers_.size(); l-- > 0;) {
      Matrix back(layers_[l].weight.cols(), delta.cols());
      if (mode == ProductMode::blocked)
        back.noalias() = layers_[l].weight.transpose() * delta;
      else
        back.noalias() = layers_[l].weight.transpose().lazyProduct(delta);
      if (l > 0) apply_leaky_derivative(back, t.preactivations[l - 1]);
      delta = std::move(back);
    }
    return delta;
  }

  // Single-point and batched evaluation share the batch-invariant product path,
  // so row i of a batched result is bit-identical to the single-point call.

  double forward(const Vector& x) const {
    const Matrix col = x;
    return trace(col, ProductMode::batch_invariant).output()[0];
  }

  /// Batched forward; one output per row of `points`.
  Vector forward_batch(const Points& points) const {
    const Matrix cols = points.transpose();
    return trace(cols, ProductMode::batch_invariant).output().transpose();
  }

  Vector grad_input(const Vector& x) const {
    const Matrix col = x;
    return backward_input(trace(col, ProductMode::batch_invariant), ProductMode::batch_invariant)
        .col(0);
  }

  /// Row i is the input gradient at row i of `points`.
  Points grad_input_batch(const Points& points) const {
    const Matrix cols = points.transpose();
    return backward_input(trace(cols, ProductMode::batch_invariant), ProductMode::batch_invariant)
        .transpose();
  }

  ParamSet grad_params(const Vector& upstream, const Points& inputs) const {
    detail::require_dim(upstream.size() == inputs.rows(),
                        detail::concat("grad_params: ", upstream.size(), " output gradients for ",
                                       inputs.rows(), " inputs"));
    const Matrix cols = inputs.transpose();
    return backward_params(trace(cols), upstream.transpose());
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "regs-ratio-network";
    j["version"] = 1;
    j["activation_slope"] = slope_;
    auto& arr = j["layers"] = nlohmann::json::array();
    for (const auto& l : layers_) {
      std::vector<double> w;
      w.reserve(l.weight.size());
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
      arr.push_back({{"fan_out", l.weight.rows()},
                     {"fan_in", l.weight.cols()},
                     {"weight", w},
                     {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
    }
    return j;
  }

  static RatioNetwork from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "regs-ratio-network")
      throw Error("network checkpoint: unrecognized format");
    ParamSet layers;
    for (const auto& lj : j.at("layers")) {
      const auto rows = lj.at("fan_out").get<Eigen::Index>();
      const auto cols = lj.at("fan_in").get<Eigen::Index>();
      const auto w = lj.at("weight").get<std::vector<double>>();
      const auto b = lj.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
          static_cast<Eigen::Index>(b.size()) != rows)
        throw Error("network checkpoint: array sizes disagree with layer shape");
      DenseLayer layer{Matrix(rows, cols), Vector(rows)};
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = w[r * cols + c];
        layer.bias[r] = b[r];
      }
      layers.push_back(std::move(layer));
    }
    return RatioNetwork(std::move(layers), j.at("activation_slope").get<double>());
  }

 private:
  // The kink at exactly zero takes the positive-branch slope.
  void apply_leaky_derivative(Matrix& back, const Matrix& pre) const {
    back.array() *= (pre.array() >= 0.0).cast<double>() * (1.0 - slope_) + slope_;
  }

  void validate() const {
    if (layers_.size() < 2) throw Error("RatioNetwork: needs at least two affine layers");
    if (!(slope_ > 0.0 && slope_ < 1.0))
      throw Error(detail::concat("RatioNetwork: activation slope must be in (0,1), got ", slope_));
    const auto width = layers_.front().weight.rows();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      if (L.bias.size() != L.weight.rows())
        throw DimensionError(detail::concat("RatioNetwork: layer ", l, " bias/weight mismatch"));
      if (l > 0 && L.weight.cols() != layers_[l - 1].weight.rows())
        throw DimensionError(detail::concat("RatioNetwork: layer ", l, " fan_in ", L.weight.cols(),
                                            " != previous fan_out ",
                                            layers_[l - 1].weight.rows()));
      if (l + 1 < layers_.size() && L.weight.rows() != width)
        throw DimensionError("RatioNetwork: hidden layers must share one width");
    }
    if (layers_.back().weight.rows() != 1)
      throw DimensionError("RatioNetwork: output layer must have exactly one unit");
  }

  ParamSet layers_;
  double slope_ = 0.2;
};

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  OptimizerConfig config;
  ParamSet first_moment;
  ParamSet second_moment;
  std::uint64_t step_count = 0;

  static OptimizerState for_network(const RatioNetwork& net, OptimizerConfig cfg = {}) {
    OptimizerState s;
    s.config = cfg;
    s.first_moment = zeros_like(net.layers());
    s.second_moment = zeros_like(net.layers());
    return s;
  }
};

/// One bias-corrected Adam step (or plain SGD), in place.
inline void optimizer_step(RatioNetwork& net, OptimizerState& state, const ParamSet& grads) {
  auto& layers = net.mutable_layers();
  detail::require_dim(grads.size() == layers.size(), "optimizer_step: gradient layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads[l].weight.rows() != layers[l].weight.rows() ||
        grads[l].weight.cols() != layers[l].weight.cols() ||
        grads[l].bias.size() != layers[l].bias.size())
      throw DimensionError(detail::concat("optimizer_step: gradient shape mismatch at layer ", l));
    if (!grads[l].weight.allFinite() || !grads[l].bias.allFinite())
      throw NumericError(detail::concat("optimizer_step: non-finite gradient in layer ", l));
  }
  const auto& c = state.config;
  ++state.step_count;
  if (c.kind == OptimizerKind::sgd) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight -= c.learning_rate * grads[l].weight;
      layers[l].bias -= c.learning_rate * grads[l].bias;
    }
    return;
  }
  if (state.first_moment.size() != layers.size()) {
    state.first_moment = zeros_like(layers);
    state.second_moment = zeros_like(layers);
  }
  const double t = static_cast<double>(state.step_count);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    param.array() -= c.learning_rate * (m.array() / corr1) / ((v.array() / corr2).sqrt() + c.epsilon);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, state.first_moment[l].weight, state.second_moment[l].weight,
           grads[l].weight);
    update(layers[l].bias, state.first_moment[l].bias, state.second_moment[l].bias, grads[l].bias);
  }
}

}  // namespace regs
