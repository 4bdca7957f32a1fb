#include "regs/ratio.hpp"
#include "discrete_oracle.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace regs;
using regs::testing::flatten;
using regs::testing::max_rel_err;
using regs::testing::param_finite_difference;

namespace {

RatioNetwork constant_network(int d, double c) {
  auto net = RatioNetwork::create(d, 3, 4, 0);
  for (auto& l : net.mutable_layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  net.mutable_layers().back().bias[0] = c;
  return net;
}

RatioBatch random_batch(int d, int n, int m, std::uint64_t seed, double weight_scale = 1.0) {
  Rng rng(seed);
  RatioBatch b;
  b.particles = standard_normal_points(n, d, rng);
  b.references = 1.5 * standard_normal_points(m, d, rng);
  b.importance_log_weights = weight_scale * standard_normal_vector(m, rng);
  return b;
}

}  // namespace

TEST(BregmanLoss, ZeroNetworkUnitWeightsGivesOne) {
  auto b = random_batch(2, 10, 7, 1);
  b.importance_log_weights.setZero();
  EXPECT_DOUBLE_EQ(bregman_loss_log(constant_network(2, 0.0), b), 1.0);
}

TEST(BregmanLoss, ConstantNetwork) {
  auto b = random_batch(2, 10, 7, 2);
  b.importance_log_weights.setZero();
  for (double c : {-1.0, -0.3, 0.0, 0.4, 2.0}) {
    EXPECT_NEAR(bregman_loss_log(constant_network(2, c), b), std::exp(c) - c, 1e-14);
    EXPECT_GE(std::exp(c) - c, 1.0);
  }
}

TEST(BregmanLoss, HandArithmetic) {
  const Vector dp = (Vector(2) << 0.5, -0.5).finished();
  const Vector dr = (Vector(2) << 1.0, 0.0).finished();
  const Vector wlog = (Vector(2) << std::log(2.0), std::log(0.5)).finished();
  const double expected = (std::exp(0.5) + std::exp(-0.5)) / 2.0 - 1.0;
  EXPECT_NEAR(bregman_loss_values(dp, dr, wlog), expected, 1e-15);
  EXPECT_NEAR(expected, 0.12763, 1e-5);
}

TEST(BregmanLoss, OverflowIdentifiesTerm) {
  const Vector one = Vector::Ones(1);
  try {
    bregman_loss_values(Vector::Constant(1, 800.0), one, Vector::Zero(1), 1000.0);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("particle term"), std::string::npos);
  }
  try {
    bregman_loss_values(one, Vector::Constant(1, 1e308), Vector::Constant(1, 30.0));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("reference term"), std::string::npos);
  }
}

TEST(BregmanLoss, ClampsBoundTheExponentials) {
  const double v = bregman_loss_values(Vector::Constant(1, 100.0), Vector::Zero(1), Vector::Zero(1), 30.0);
  EXPECT_DOUBLE_EQ(v, std::exp(30.0));
}

TEST(RatioBatch, RejectsInvalidBatches) {
  auto b = random_batch(2, 3, 3, 0);
  b.importance_log_weights[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(b.validate(), NumericError);
  auto c = random_batch(2, 3, 3, 0);
  c.importance_log_weights.resize(2);
  EXPECT_THROW(c.validate(), DimensionError);
  RatioBatch empty;
  EXPECT_THROW(empty.validate(), Error);
}

TEST(BregmanGeneral, KlUnitRatioGivesOne) {
  const Vector ones = Vector::Ones(5);
  EXPECT_DOUBLE_EQ(bregman_loss_general(ones, Vector::Ones(3), Vector::Ones(3), BregmanGenerator::kl), 1.0);
}

TEST(BregmanGeneral, KlMatchesLogScale) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector dq = standard_normal_vector(8, rng);
    const Vector dw = standard_normal_vector(6, rng);
    const Vector wlog = standard_normal_vector(6, rng);
    const double general = bregman_loss_general(dq.array().exp(), dw.array().exp(), wlog.array().exp(),
                                                BregmanGenerator::kl);
    EXPECT_NEAR(general, bregman_loss_values(dq, dw, wlog), 1e-12);
  }
}

TEST(BregmanGeneral, QuadraticZeroRatio) {
  EXPECT_EQ(bregman_loss_general(Vector::Zero(4), Vector::Zero(3), Vector::Ones(3), BregmanGenerator::quadratic), 0.0);
}

TEST(BregmanGeneral, KlRejectsNonPositiveRatio) {
  Vector r = Vector::Ones(3);
  r[1] = 0.0;
  EXPECT_THROW(bregman_loss_general(r, Vector::Ones(2), Vector::Ones(2), BregmanGenerator::kl), Error);
}

TEST(LossGrad, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto net = RatioNetwork::create(2, 3, 8, seed);
    const auto batch = random_batch(2, 9, 11, 50 + seed);
    const Vector analytic = flatten(loss_grad(net, batch));
    const Vector numeric =
        param_finite_difference(net, [&](const RatioNetwork& n) { return bregman_loss_log(n, batch); });
    EXPECT_LT(max_rel_err(analytic, numeric), 1e-5) << "seed " << seed;
  }
}

TEST(LossGrad, ClampedTermsContributeNothing) {
  // Every particle value is above the clamp, so only the reference term remains.
  auto net = constant_network(1, 50.0);
  RatioBatch b;
  b.particles = Points::Constant(3, 1, 1.0);
  b.references = Points::Constant(2, 1, 1.0);
  b.importance_log_weights = Vector::Zero(2);
  const auto g = loss_grad(net, b);
  EXPECT_DOUBLE_EQ(g.back().bias[0], -1.0);
}

TEST(LossGrad, VanishesAtTwoPointMinimizer) {
  // Particles and references on {1, 2} with weights (wa, wb): the empirical
  // minimizer is D(1) = log wa, D(2) = log wb, reachable by a linear-regime network.
  const double wa = 1.7, wb = 0.6;
  const double slope = std::log(wb) - std::log(wa), intercept = std::log(wa) - slope;
  ParamSet p{{Matrix::Ones(1, 1), Vector::Zero(1)}, {Matrix::Constant(1, 1, slope), Vector::Constant(1, intercept)}};
  const RatioNetwork net(p);
  RatioBatch b;
  b.particles = (Points(2, 1) << 1.0, 2.0).finished();
  b.references = b.particles;
  b.importance_log_weights = (Vector(2) << std::log(wa), std::log(wb)).finished();
  EXPECT_LT(flatten(loss_grad(net, b)).norm(), 1e-8);
}

TEST(LossGrad, ReferenceTermIsLinearInWeights) {
  const auto net = RatioNetwork::create(2, 3, 8, 4);
  const auto b1 = random_batch(2, 6, 5, 9);
  auto b2 = b1;
  b2.importance_log_weights.array() += std::log(2.0);
  const Vector w1 = b1.importance_log_weights.array().exp() / 5.0;
  const Vector ref1 = flatten(net.grad_params(w1, b1.references));
  const Vector ref2 = flatten(net.grad_params(Vector(b2.importance_log_weights.array().exp() / 5.0), b1.references));
  EXPECT_LT((ref2 - 2.0 * ref1).norm(), 1e-13 * (1.0 + ref1.norm()));
  // The full gradient changes by exactly minus one extra copy of the reference term.
  const Vector delta = flatten(loss_grad(net, b2)) - flatten(loss_grad(net, b1));
  EXPECT_LT((delta + ref1).norm(), 1e-12 * (1.0 + ref1.norm()));
}

TEST(TrainRatio, ZeroStepsReturnsInputUnchanged) {
  const auto net = RatioNetwork::create(2, 3, 8, 1);
  TrainerConfig cfg;
  cfg.inner_steps_first = 0;
  const auto res = train_ratio(net, random_batch(2, 20, 20, 1), cfg, false);
  EXPECT_EQ(flatten(res.network.layers()), flatten(net.layers()));
  EXPECT_EQ(res.initial_loss, res.final_loss);
}

TEST(TrainRatio, FinalLossNotAboveInitial) {
  for (auto regime : {BatchRegime::full, BatchRegime::minibatch}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      TrainerConfig cfg;
      cfg.inner_steps_first = 30;
      cfg.batch_regime = regime;
      cfg.minibatch_size = 16;
      cfg.learning_rate = 5e-2;  // large enough to overshoot sometimes
      cfg.seed = seed;
      const auto batch = random_batch(2, 40, 40, seed, 2.0);
      const auto net = RatioNetwork::create(2, 3, 8, seed);
      const auto res = train_ratio(net, batch, cfg, false);
      EXPECT_LE(res.final_loss, res.initial_loss);
      EXPECT_DOUBLE_EQ(res.final_loss, bregman_loss_log(res.network, batch));
    }
  }
}

TEST(TrainRatio, WarmStartUsesWarmBudget) {
  TrainerConfig cfg;
  cfg.inner_steps_first = 7;
  cfg.inner_steps_warm = 3;
  const auto batch = random_batch(1, 10, 10, 0);
  const auto net = RatioNetwork::create(1, 2, 4, 0);
  EXPECT_EQ(train_ratio(net, batch, cfg, false).steps, 7);
  EXPECT_EQ(train_ratio(net, batch, cfg, true).steps, 3);
}

TEST(TrainRatio, DeterministicUnderSeed) {
  TrainerConfig cfg;
  cfg.inner_steps_first = 20;
  cfg.batch_regime = BatchRegime::minibatch;
  cfg.minibatch_size = 8;
  cfg.seed = 77;
  const auto batch = random_batch(2, 30, 30, 5);
  const auto net = RatioNetwork::create(2, 3, 8, 2);
  EXPECT_EQ(flatten(train_ratio(net, batch, cfg, false).network.layers()),
            flatten(train_ratio(net, batch, cfg, false).network.layers()));
}

TEST(TrainRatio, DivergenceCarriesLastFiniteLoss) {
  TrainerConfig cfg;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.learning_rate = 1e300;
  cfg.inner_steps_first = 10;
  const auto batch = random_batch(2, 10, 10, 3);
  const auto net = RatioNetwork::create(2, 3, 8, 3);
  const double initial = bregman_loss_log(net, batch);
  try {
    train_ratio(net, batch, cfg, false);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_DOUBLE_EQ(e.last_finite_loss(), initial);
  }
}

// q = N(0,1) with n = 5000, u = 3 N(1,1), w = N(0,4); the true log ratio is
// log u - log q = log 3 + x - 1/2. Trained once with the default trainer.
class OneDimensionalRatio : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const int n = 5000;
    Rng rng(21);
    RatioBatch b;
    b.particles = standard_normal_points(n, 1, rng);
    b.references = 2.0 * standard_normal_points(n, 1, rng);
    b.importance_log_weights.resize(n);
    for (int i = 0; i < n; ++i) {
      const double y = b.references(i, 0);
      const double log_u = std::log(3.0) - 0.5 * std::log(2 * M_PI) - 0.5 * (y - 1) * (y - 1);
      const double log_w = -0.5 * std::log(2 * M_PI * 4.0) - y * y / 8.0;
      b.importance_log_weights[i] = log_u - log_w;
    }
    trained = new RatioNetwork(train_ratio(RatioNetwork::create(1, 3, 128, 5), b, TrainerConfig{}, false).network);
  }
  static void TearDownTestSuite() { delete trained; }
  static double truth(double x) { return std::log(3.0) + x - 0.5; }
  static inline RatioNetwork* trained = nullptr;
};

TEST_F(OneDimensionalRatio, RecoversLogRatioOnGrid) {
  double mae = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double x = -2.0 + 5.0 * k / 100.0;
    mae += std::abs(trained->forward(Vector::Constant(1, x)) - truth(x));
  }
  EXPECT_LT(mae / 101.0, 0.1);
}

TEST_F(OneDimensionalRatio, VelocityAtOriginMatchesLogRatioSlope) {
  EXPECT_NEAR(velocity_field(*trained, Points::Zero(1, 1))(0, 0), 1.0, 0.15);
}

TEST(VelocityField, ZeroNetworkGivesZeroField) {
  Rng rng(1);
  EXPECT_TRUE(velocity_field(constant_network(3, 0.0), standard_normal_points(5, 3, rng)).isZero(0.0));
}

TEST(VelocityField, RowsMatchPointwiseGradients) {
  const auto net = RatioNetwork::create(2, 4, 16, 3);
  Rng rng(2);
  const Points pts = standard_normal_points(25, 2, rng);
  const Points v = velocity_field(net, pts);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) EXPECT_EQ(Vector(v.row(i).transpose()), net.grad_input(pts.row(i).transpose()));
  EXPECT_THROW(velocity_field(net, Points::Zero(2, 3)), DimensionError);
}

TEST(Identifiability, DiscreteBruteForceRecoversLogRatio) {
  Rng rng(8);
  std::uniform_real_distribution<double> pos(0.05, 3.0);
  for (int k = 1; k <= 5; ++k) {
    for (int trial = 0; trial < 20; ++trial) {
      Vector q(k), u(k), w(k);
      for (int i = 0; i < k; ++i) q[i] = pos(rng), u[i] = pos(rng), w[i] = pos(rng);
      q /= q.sum();
      w /= w.sum();
      const Vector d = regs::testing::brute_force_minimizer(q, u, w);
      const Vector star = (u.array() / q.array()).log();
      EXPECT_LT((d - star).cwiseAbs().maxCoeff(), 1e-6);
      // Any perturbation is strictly worse.
      const double best = regs::testing::population_score(q, u, w, star);
      for (int p = 0; p < 5; ++p) {
        const Vector other = star + 0.1 * standard_normal_vector(k, rng);
        EXPECT_GT(regs::testing::population_score(q, u, w, other), best);
      }
      // Scaling u shifts the minimizer by log Z and keeps its differences.
      const double z = 10.0 * pos(rng);
      const Vector dz = regs::testing::brute_force_minimizer(q, z * u, w);
      EXPECT_LT((dz - d - Vector::Constant(k, std::log(z))).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(Identifiability, ScalingTargetLeavesDiscreteGradientUnchanged) {
  // After per-point re-minimization the differences between support points,
  // the discrete analogue of the velocity, do not move when u is scaled.
  Rng rng(12);
  std::uniform_real_distribution<double> pos(0.05, 3.0);
  for (int k = 2; k <= 5; ++k) {
    for (int trial = 0; trial < 20; ++trial) {
      Vector q(k), u(k), w(k);
      for (int i = 0; i < k; ++i) q[i] = pos(rng), u[i] = pos(rng), w[i] = pos(rng);
      q /= q.sum();
      const double z = std::exp(3.0 * standard_normal_vector(1, rng)[0]);
      const Vector d = regs::testing::newton_polish(q, u, regs::testing::brute_force_minimizer(q, u, w));
      const Vector dz = regs::testing::newton_polish(q, z * u, regs::testing::brute_force_minimizer(q, z * u, w));
      for (int i = 1; i < k; ++i) EXPECT_NEAR(dz[i] - dz[i - 1], d[i] - d[i - 1], 1e-10);
      EXPECT_LT(((dz - d).array() - std::log(z)).abs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Identifiability, EmpiricalScoreMatchesPopulationOnUniformSupport) {
  // With q = w uniform over k points, the empirical loss with one particle and
  // one reference per point is exactly the population score.
  Rng rng(4);
  const int k = 4;
  const Vector q = Vector::Constant(k, 1.0 / k);
  const Vector u = (standard_normal_vector(k, rng).array().abs() + 0.1).matrix();
  const Vector d = standard_normal_vector(k, rng);
  const Vector wlog = (u.array() / q.array()).log();
  EXPECT_NEAR(bregman_loss_values(d, d, wlog), regs::testing::population_score(q, u, q, d), 1e-12);
}
