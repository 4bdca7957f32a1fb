#include "regs/flow.hpp"
#include "regs/metrics.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>

using namespace regs;

namespace {

RatioNetwork zero_network(int d) {
  auto net = RatioNetwork::create(d, 3, 8, 0);
  for (auto& l : net.mutable_layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return net;
}

UnnormalizedTarget shifted_normal_1d() {
  return make_mixture(GaussianMixtureSpec::isotropic({Vector::Ones(1)}, 1.0), "normal_1");
}

UnnormalizedTarget scaled(UnnormalizedTarget t, double factor) {
  const double shift = std::log(factor);
  auto base = t.log_u;
  t.log_u = [base, shift](const Vector& x) { return base(x) + shift; };
  if (t.batch_log_u) {
    auto batch = t.batch_log_u;
    t.batch_log_u = [batch, shift](const Points& x) { return Vector((batch(x).array() + shift).matrix()); };
  }
  return t;
}

FlowConfig small_config(std::uint64_t seed = 3) {
  FlowConfig cfg;
  cfg.step_size = 1e-2;
  cfg.max_iterations = 20;
  cfg.particle_count = 200;
  cfg.network_depth = 3;
  cfg.network_width = 16;
  cfg.trainer.inner_steps_first = 30;
  cfg.trainer.inner_steps_warm = 5;
  cfg.snapshot_every = 5;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// init_particles

TEST(InitParticles, ZeroScaleCollapsesOntoMean) {
  FlowConfig cfg;
  cfg.particle_count = 50;
  cfg.init_cov_scale = 0.0;
  cfg.init_mean = Vector::Constant(3, 2.5);
  const auto cloud = init_particles(cfg, 3);
  EXPECT_EQ(cloud.iteration, 0);
  EXPECT_TRUE((cloud.positions.array() == 2.5).all());
}

TEST(InitParticles, SampleMeanWithinCltBound) {
  FlowConfig cfg;
  cfg.particle_count = 10000;
  cfg.seed = 17;
  const int d = 3;
  const auto cloud = init_particles(cfg, d);
  const Vector mean = cloud.positions.colwise().mean().transpose();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 3.0 / std::sqrt(10000.0) * std::sqrt(static_cast<double>(d)));
}

TEST(InitParticles, DeterministicUnderSeed) {
  FlowConfig cfg;
  cfg.particle_count = 100;
  cfg.seed = 9;
  EXPECT_EQ(init_particles(cfg, 2).positions, init_particles(cfg, 2).positions);
  FlowConfig other = cfg;
  other.seed = 10;
  EXPECT_NE(init_particles(cfg, 2).positions, init_particles(other, 2).positions);
}

TEST(InitParticles, Errors) {
  FlowConfig cfg;
  cfg.particle_count = 0;
  EXPECT_THROW(init_particles(cfg, 2), Error);
  cfg.particle_count = 5;
  cfg.init_mean = Vector::Zero(3);
  EXPECT_THROW(init_particles(cfg, 2), DimensionError);
}

// ---------------------------------------------------------------------------
// fit_reference

TEST(FitReference, IdenticalPointsGiveFlooredCovariance) {
  ParticleCloud cloud;
  cloud.positions = Points::Constant(10, 2, 1.5);
  const auto ref = fit_reference(cloud, 2.0);
  EXPECT_EQ(ref.mean(), Vector::Constant(2, 1.5));
  EXPECT_LT((ref.covariance() - 2e-6 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-18);
}

TEST(FitReference, InflatesSampleCovariance) {
  // Four points with zero mean and sample covariance exactly I (divisor n - 1 = 3).
  ParticleCloud cloud;
  const double a = std::sqrt(1.5);
  cloud.positions = Points(4, 2);
  cloud.positions << a, 0, -a, 0, 0, a, 0, -a;
  const auto ref = fit_reference(cloud, 2.0);
  EXPECT_LT(ref.mean().norm(), 1e-15);
  EXPECT_LT((ref.covariance() - 2.0 * (1.0 + 1e-6) * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FitReference, LogDensityAtMeanIsNormalizer) {
  Rng rng(5);
  ParticleCloud cloud;
  cloud.positions = standard_normal_points(300, 3, rng) * Matrix::Identity(3, 3) * 1.7;
  const auto ref = fit_reference(cloud, 2.0);
  const double expected =
      -1.5 * std::log(2 * std::numbers::pi) - 0.5 * std::log(ref.covariance().determinant());
  EXPECT_NEAR(ref.log_density(ref.mean()), expected, 1e-12);
}

TEST(FitReference, LogDensityFiniteFarAway) {
  ParticleCloud cloud;
  cloud.positions = Points::Constant(5, 2, 0.0);
  const auto ref = fit_reference(cloud, 2.0);
  EXPECT_TRUE(std::isfinite(ref.log_density(Vector(Vector::Constant(2, 100.0)))));
}

TEST(FitReference, DensityIsConsistentWithSampler) {
  // E_w[u / w] = 1 for a normalized u: the importance identity that the loss relies on.
  ParticleCloud cloud;
  Rng rng(2);
  cloud.positions = 0.8 * standard_normal_points(100, 1, rng);
  const auto ref = fit_reference(cloud, 2.0);
  const int n = 200000;
  const Points y = ref.sample(n, rng);
  const Vector lw = ref.log_density(y);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double log_target = -0.5 * std::log(2 * std::numbers::pi) - 0.5 * y(i, 0) * y(i, 0);
    acc += std::exp(log_target - lw[i]);
  }
  EXPECT_NEAR(acc / n, 1.0, 0.01);
}

TEST(FitReference, NeedsTwoParticles) {
  ParticleCloud cloud;
  cloud.positions = Points::Zero(1, 2);
  EXPECT_THROW(fit_reference(cloud, 2.0), Error);
}

// ---------------------------------------------------------------------------
// euler_step

TEST(EulerStep, ZeroVelocityAdvancesIterationOnly) {
  ParticleCloud cloud;
  cloud.positions = Points::Constant(3, 2, 0.7);
  cloud.iteration = 4;
  const auto next = euler_step(cloud, Points::Zero(3, 2), 0.1);
  EXPECT_EQ(next.positions, cloud.positions);
  EXPECT_EQ(next.iteration, 5);
}

TEST(EulerStep, ZeroStepIsIdentity) {
  ParticleCloud cloud;
  Rng rng(1);
  cloud.positions = standard_normal_points(4, 2, rng);
  EXPECT_EQ(euler_step(cloud, standard_normal_points(4, 2, rng), 0.0).positions, cloud.positions);
}

TEST(EulerStep, SingleParticleArithmetic) {
  ParticleCloud cloud;
  cloud.positions = Points(1, 2);
  cloud.positions << 1.0, 1.0;
  Points v(1, 2);
  v << -1.0, 2.0;
  const auto next = euler_step(cloud, v, 0.5);
  EXPECT_EQ(next.positions(0, 0), 0.5);
  EXPECT_EQ(next.positions(0, 1), 2.0);
}

TEST(EulerStep, NonFiniteVelocityNamesParticle) {
  ParticleCloud cloud;
  cloud.positions = Points::Zero(4, 1);
  Points v = Points::Zero(4, 1);
  v(2, 0) = std::numeric_limits<double>::infinity();
  try {
    euler_step(cloud, v, 0.1);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("particle 2"), std::string::npos);
  }
  EXPECT_THROW(euler_step(cloud, Points::Zero(3, 1), 0.1), DimensionError);
}

// ---------------------------------------------------------------------------
// regs_run

TEST(RegsRun, ZeroNetworkWithoutTrainingKeepsInitialCloud) {
  FlowConfig cfg = small_config();
  cfg.max_iterations = 1;
  cfg.trainer.inner_steps_first = 0;
  cfg.trainer.inner_steps_warm = 0;
  const auto rec = regs_run(make_scenario(5), cfg, zero_network(2));
  EXPECT_EQ(rec.final_samples, init_particles(cfg, 2).positions);
  ASSERT_EQ(rec.diagnostics.size(), 1u);
  EXPECT_EQ(rec.diagnostics[0].mean_sq_velocity, 0.0);
}

TEST(RegsRun, DeterministicUnderSeed) {
  const auto target = make_scenario(4);
  const auto a = regs_run(target, small_config(4));
  const auto b = regs_run(target, small_config(4));
  EXPECT_EQ(a.final_samples, b.final_samples);
  ASSERT_EQ(a.diagnostics.size(), b.diagnostics.size());
  for (std::size_t i = 0; i < a.diagnostics.size(); ++i) {
    EXPECT_EQ(a.diagnostics[i].loss, b.diagnostics[i].loss);
    EXPECT_EQ(a.diagnostics[i].mean_sq_velocity, b.diagnostics[i].mean_sq_velocity);
  }
  EXPECT_EQ(a.network_checkpoint, b.network_checkpoint);
  const auto c = regs_run(target, small_config(5));
  EXPECT_NE(a.final_samples, c.final_samples);
}

TEST(RegsRun, SnapshotsConserveParticleCount) {
  const auto rec = regs_run(make_scenario(5), small_config());
  std::vector<int> iterations;
  for (const auto& s : rec.snapshots) {
    iterations.push_back(s.iteration);
    EXPECT_EQ(s.positions.rows(), 200);
    EXPECT_EQ(s.positions.cols(), 2);
    EXPECT_TRUE(s.positions.allFinite());
  }
  EXPECT_EQ(iterations, (std::vector<int>{0, 5, 10, 15, 20}));
  EXPECT_EQ(rec.diagnostics.size(), 20u);
  EXPECT_EQ(rec.final_samples, rec.snapshots.back().positions);
  EXPECT_DOUBLE_EQ(rec.stats["time_horizon"].get<double>(), 0.2);
}

TEST(RegsRun, RejectsMismatchedNetwork) {
  EXPECT_THROW(regs_run(make_scenario(5), small_config(), zero_network(3)), DimensionError);
}

TEST(RegsRun, FixedReferencePoolAndFixedGaussianRun) {
  FlowConfig cfg = small_config();
  cfg.redraw_references = false;
  EXPECT_TRUE(regs_run(make_scenario(4), cfg).final_samples.allFinite());
  cfg.reference_mode = ReferenceMode::fixed_gaussian;
  EXPECT_TRUE(regs_run(make_scenario(4), cfg).final_samples.allFinite());
}

TEST(RegsRun, MeanMovesTowardsTargetAtExactFlowRate) {
  // N(0,1) -> N(1,1): the exact flow keeps unit variance and has mean 1 - exp(-t).
  FlowConfig cfg;
  cfg.step_size = 1e-2;
  cfg.max_iterations = 100;
  cfg.particle_count = 500;
  cfg.network_depth = 3;
  cfg.network_width = 32;
  cfg.trainer.inner_steps_warm = 10;
  cfg.seed = 1;
  const auto rec = regs_run(shifted_normal_1d(), cfg);
  const double mean = rec.final_samples.mean();
  const double var = (rec.final_samples.array() - mean).square().mean();
  EXPECT_NEAR(mean, 1.0 - std::exp(-1.0), 0.1);
  EXPECT_NEAR(var, 1.0, 0.2);
}

TEST(RegsRun, WritesRunRecordDirectory) {
  const auto rec = regs_run(make_scenario(4), small_config());
  const auto dir = std::filesystem::temp_directory_path() / "regs_flow_record_test";
  std::filesystem::remove_all(dir);
  write_run_record(rec, dir);
  for (const char* f : {"config.json", "diagnostics.csv", "samples.csv", "network.json", "snapshot_000000.csv",
                        "snapshot_000020.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_EQ(read_points_csv(dir / "samples.csv"), rec.final_samples);
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Normalization invariance

TEST(NormalizationInvariance, ImportanceWeightsShiftByLogTen) {
  const auto target = make_scenario(5);
  const auto target10 = scaled(target, 10.0);
  ParticleCloud cloud;
  Rng rng(3);
  cloud.positions = 2.0 * standard_normal_points(50, 2, rng);
  const auto ref = fit_reference(cloud, 2.0);
  const Points y = ref.sample(50, rng);
  const Vector diff = importance_log_weights(target10, ref, y) - importance_log_weights(target, ref, y);
  EXPECT_LT((diff.array() - std::log(10.0)).abs().maxCoeff(), 1e-12);
}

TEST(NormalizationInvariance, LossShiftAtFixedNetworkDependsOnlyOnReferenceTerm) {
  Rng rng(4);
  RatioBatch b;
  b.particles = standard_normal_points(30, 2, rng);
  b.references = standard_normal_points(40, 2, rng);
  b.importance_log_weights = 0.3 * standard_normal_vector(40, rng);
  RatioBatch b10 = b;
  b10.importance_log_weights.array() += std::log(10.0);
  const auto net = RatioNetwork::create(2, 3, 8, 6);
  const Vector dref = net.forward_batch(b.references);
  const double expected = -9.0 * (b.importance_log_weights.array().exp() * dref.array()).mean();
  EXPECT_NEAR(bregman_loss_log(net, b10) - bregman_loss_log(net, b), expected, 1e-12);
}

TEST(NormalizationInvariance, CentredRunsAgreeForScaledTarget) {
  const auto target = make_scenario(4);
  const auto a = regs_run(target, small_config(8));
  const auto b = regs_run(scaled(target, 10.0), small_config(8));
  EXPECT_LT((a.final_samples - b.final_samples).cwiseAbs().maxCoeff(), 1e-8);
}
