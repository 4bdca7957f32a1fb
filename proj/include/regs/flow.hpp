#pragma once

// The relative-entropy gradient sampler: particles follow forward-Euler steps
// of the velocity field grad D, where D is the neural log-density-ratio
// estimate of log(u / q_k) refitted at every iteration.

#include "regs/ratio.hpp"
#include "regs/run_record.hpp"
#include "regs/targets.hpp"

#include <numbers>

namespace regs {

struct ParticleCloud {
  Points positions;
  int iteration = 0;

  Eigen::Index size() const { return positions.rows(); }
  Eigen::Index dimension() const { return positions.cols(); }
};

/// Gaussian with an eigen-floored covariance; samples and densities share the
/// same factorization.
class ReferenceDistribution {
 public:
  static constexpr double kEigenFloor = 1e-6;

  ReferenceDistribution(Vector mean, const Matrix& covariance) : mean_(std::move(mean)) {
    detail::require_dim(covariance.rows() == mean_.size() && covariance.cols() == mean_.size(),
                        "ReferenceDistribution: covariance shape does not match mean");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (covariance + covariance.transpose()));
    if (eig.info() != Eigen::Success) throw NumericError("ReferenceDistribution: eigendecomposition failed");
    eigvals_ = eig.eigenvalues().cwiseMax(kEigenFloor);
    eigvecs_ = eig.eigenvectors();
    covariance_ = eigvecs_ * eigvals_.asDiagonal() * eigvecs_.transpose();
    const double d = static_cast<double>(mean_.size());
    log_norm_ = -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * eigvals_.array().log().sum();
  }

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  const Vector& eigenvalues() const { return eigvals_; }
  int dimension() const { return static_cast<int>(mean_.size()); }

  /// Maps standard normal rows to draws from this distribution.
  Points transform(const Points& standard) const {
    Points out = standard * eigvals_.cwiseSqrt().asDiagonal() * eigvecs_.transpose();
    out.rowwise() += mean_.transpose();
    return out;
  }

  Points sample(Eigen::Index n, Rng& rng) const {
    return transform(standard_normal_points(n, mean_.size(), rng));
  }

  Vector log_density(const Points& x) const {
    Points centred = x;
    centred.rowwise() -= mean_.transpose();
    const Matrix whitened = centred * eigvecs_ * eigvals_.cwiseSqrt().cwiseInverse().asDiagonal();
    return (log_norm_ - 0.5 * whitened.rowwise().squaredNorm().array()).matrix();
  }

  double log_density(const Vector& x) const { return log_density(Points(x.transpose()))[0]; }

 private:
  Vector mean_;
  Matrix covariance_;
  Vector eigvals_;
  Matrix eigvecs_;
  double log_norm_ = 0.0;
};

enum class ReferenceMode { moment_matched, fixed_gaussian };

struct FlowConfig {
  double step_size = 5e-4;
  int max_iterations = 10000;
  int particle_count = 2000;
  Vector init_mean;            // empty: origin of the target's dimension
  double init_cov_scale = 1.0;
  ReferenceMode reference_mode = ReferenceMode::moment_matched;
  double reference_inflation = 2.0;
  /// Variance of the fallback fixed reference N(init_mean, scale * I).
  double fixed_reference_scale = 25.0;
  int reference_count = 0;     // 0: same as particle_count
  bool redraw_references = true;
  /// Subtract the log-mean-exp of the importance log-weights each iteration.
  /// Equivalent to rescaling u by a constant, so the velocity is unaffected.
  bool center_log_weights = true;
  int network_depth = 4;
  int network_width = 128;
  double activation_slope = 0.2;
  TrainerConfig trainer;
  int snapshot_every = 500;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(step_size >= 0 && std::isfinite(step_size), "FlowConfig: step size must be >= 0");
    detail::require(max_iterations >= 1, "FlowConfig: max_iterations must be >= 1");
    detail::require(particle_count >= 1, "FlowConfig: particle_count must be positive");
    detail::require(init_cov_scale >= 0, "FlowConfig: init_cov_scale must be >= 0");
    detail::require(reference_inflation > 0, "FlowConfig: reference_inflation must be positive");
    detail::require(fixed_reference_scale > 0, "FlowConfig: fixed_reference_scale must be positive");
    detail::require(reference_count >= 0, "FlowConfig: reference_count must be >= 0");
    detail::require(snapshot_every >= 1, "FlowConfig: snapshot_every must be >= 1");
    trainer.validate();
  }

  double time_horizon() const { return step_size * max_iterations; }

  nlohmann::json to_json() const {
    return {{"step_size", step_size},
            {"max_iterations", max_iterations},
            {"particle_count", particle_count},
            {"init_mean", std::vector<double>(init_mean.data(), init_mean.data() + init_mean.size())},
            {"init_cov_scale", init_cov_scale},
            {"reference_mode", reference_mode == ReferenceMode::moment_matched ? "moment_matched"
                                                                             : "fixed_gaussian"},
            {"reference_inflation", reference_inflation},
            {"fixed_reference_scale", fixed_reference_scale},
            {"reference_count", reference_count},
            {"redraw_references", redraw_references},
            {"center_log_weights", center_log_weights},
            {"network_depth", network_depth},
            {"network_width", network_width},
            {"activation_slope", activation_slope},
            {"learning_rate", trainer.learning_rate},
            {"optimizer", trainer.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
            {"inner_steps_first", trainer.inner_steps_first},
            {"inner_steps_warm", trainer.inner_steps_warm},
            {"exp_clamp", trainer.exp_clamp},
            {"weight_log_clamp", trainer.weight_log_clamp},
            {"snapshot_every", snapshot_every},
            {"seed", seed}};
  }
};

class FlowError : public Error {
 public:
  FlowError(const std::string& what, int iteration) : Error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// Raised when particles become non-finite; carries the run up to the last good state.
class FlowAborted : public FlowError {
 public:
  FlowAborted(const std::string& what, int iteration, RunRecord partial)
      : FlowError(what, iteration), partial_(std::move(partial)) {}
  const RunRecord& partial() const { return partial_; }

 private:
  RunRecord partial_;
};

inline ParticleCloud init_particles(const FlowConfig& cfg, int dimension) {
  if (cfg.particle_count < 1) throw Error("init_particles: particle_count must be positive");
  detail::require(cfg.init_cov_scale >= 0, "init_particles: init_cov_scale must be >= 0");
  const Vector mean = cfg.init_mean.size() ? cfg.init_mean : Vector::Zero(dimension);
  detail::require_dim(mean.size() == dimension,
                      detail::concat("init_particles: init_mean has dimension ", mean.size(),
                                     ", target has ", dimension));
  Rng rng(derive_seed(cfg.seed, 0));
  ParticleCloud cloud;
  cloud.positions = std::sqrt(cfg.init_cov_scale) * standard_normal_points(cfg.particle_count, dimension, rng);
  cloud.positions.rowwise() += mean.transpose();
  return cloud;
}

inline ReferenceDistribution fit_reference(const ParticleCloud& cloud, double inflation) {
  const auto n = cloud.size();
  if (n < 2) throw Error("fit_reference: need at least two particles");
  detail::require(inflation > 0, "fit_reference: inflation must be positive");
  const Vector mean = cloud.positions.colwise().mean().transpose();
  Points centred = cloud.positions;
  centred.rowwise() -= mean.transpose();
  const auto d = cloud.dimension();
  Matrix cov = (centred.transpose() * centred) / static_cast<double>(n - 1);
  cov += ReferenceDistribution::kEigenFloor * Matrix::Identity(d, d);
  return ReferenceDistribution(mean, inflation * cov);
}

inline ParticleCloud euler_step(const ParticleCloud& cloud, const Points& velocities, double step) {
  detail::require_dim(velocities.rows() == cloud.size() && velocities.cols() == cloud.dimension(),
                      "euler_step: velocity shape does not match the cloud");
  for (Eigen::Index i = 0; i < velocities.rows(); ++i)
    if (!velocities.row(i).allFinite())
      throw NumericError(detail::concat("euler_step: non-finite velocity at particle ", i));
  ParticleCloud next;
  next.positions = cloud.positions + step * velocities;
  next.iteration = cloud.iteration + 1;
  return next;
}

/// log u(Y) - log w(Y) for every reference row.
inline Vector importance_log_weights(const UnnormalizedTarget& target,
                                     const ReferenceDistribution& reference, const Points& y) {
  return target.log_u_batch(y) - reference.log_density(y);
}

inline double mean_squared_norm(const Points& v) {
  return v.rows() ? v.rowwise().squaredNorm().mean() : 0.0;
}

/// Runs the sampler from a given initial network (exposed for tests that
/// need a specific network, e.g. the zero network).
inline RunRecord regs_run(const UnnormalizedTarget& target, const FlowConfig& cfg,
                          RatioNetwork network) {
  cfg.validate();
  detail::require_dim(network.input_dim() == target.dimension,
                      "regs_run: network input dimension does not match the target");
  RunRecord rec;
  rec.sampler = "regs";
  rec.target = target.name;
  rec.seed = cfg.seed;
  rec.config = cfg.to_json();

  ParticleCloud cloud = init_particles(cfg, target.dimension);
  const int d = target.dimension;
  const Eigen::Index m = cfg.reference_count > 0 ? cfg.reference_count : cfg.particle_count;
  Rng ref_rng(derive_seed(cfg.seed, 1));
  OptimizerState opt = OptimizerState::for_network(network, cfg.trainer.optimizer_config());

  const Vector fixed_mean = cfg.init_mean.size() ? cfg.init_mean : Vector::Zero(d);
  const ReferenceDistribution fixed_ref(fixed_mean, cfg.fixed_reference_scale * Matrix::Identity(d, d));
  Points pool;
  if (!cfg.redraw_references) pool = standard_normal_points(m, d, ref_rng);

  auto snapshot = [&](const ParticleCloud& c) { rec.snapshots.push_back({c.iteration, c.positions}); };
  snapshot(cloud);

  for (int k = 0; k < cfg.max_iterations; ++k) {
    const ReferenceDistribution ref = cfg.reference_mode == ReferenceMode::moment_matched && cloud.size() >= 2
                                          ? fit_reference(cloud, cfg.reference_inflation)
                                          : fixed_ref;
    RatioBatch batch;
    batch.particles = cloud.positions;
    batch.references = cfg.redraw_references ? ref.sample(m, ref_rng) : ref.transform(pool);
    batch.importance_log_weights = importance_log_weights(target, ref, batch.references);
    if (!batch.importance_log_weights.allFinite())
      throw FlowError(detail::concat("regs_run: iteration ", k, ": non-finite importance weight"), k);
    if (cfg.center_log_weights) batch.importance_log_weights.array() -= log_mean_exp(batch.importance_log_weights);

    TrainerConfig tcfg = cfg.trainer;
    tcfg.seed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(k));
    TrainResult trained;
    try {
      trained = train_ratio(std::move(network), batch, tcfg, k > 0, &opt);
    } catch (const TrainingDiverged& e) {
      throw FlowError(detail::concat("regs_run: iteration ", k, ": ", e.what()), k);
    }
    network = std::move(trained.network);

    const Points velocity = velocity_field(network, cloud.positions);
    const double msv = mean_squared_norm(velocity);
    rec.diagnostics.push_back({k, trained.final_loss, msv});

    ParticleCloud next;
    try {
      next = euler_step(cloud, velocity, cfg.step_size);
    } catch (const NumericError& e) {
      rec.final_samples = cloud.positions;
      throw FlowAborted(detail::concat("regs_run: iteration ", k, ": ", e.what()), k, std::move(rec));
    }
    if (!next.positions.allFinite()) {
      rec.final_samples = cloud.positions;
      throw FlowAborted(detail::concat("regs_run: iteration ", k, ": non-finite particle position"), k,
                        std::move(rec));
    }
    cloud = std::move(next);
    if (cloud.iteration % cfg.snapshot_every == 0 && cloud.iteration != cfg.max_iterations) snapshot(cloud);
  }
  snapshot(cloud);
  rec.final_samples = cloud.positions;
  rec.stats["time_horizon"] = cfg.time_horizon();
  rec.network_checkpoint = network.to_json();
  return rec;
}

inline RunRecord regs_run(const UnnormalizedTarget& target, const FlowConfig& cfg) {
  cfg.validate();
  auto net = RatioNetwork::create(target.dimension, cfg.network_depth, cfg.network_width,
                                  derive_seed(cfg.seed, 2), cfg.activation_slope);
  return regs_run(target, cfg, std::move(net));
}

}  // namespace regs
