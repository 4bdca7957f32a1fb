#pragma once

// Unnormalized target densities: Gaussian mixtures (including the named 1D/2D
// benchmark scenarios), the AR(1)-correlated Gaussian and the Bayesian
// logistic-regression posterior.

#include "regs/common.hpp"

#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace regs {

struct GaussianMixtureSpec {
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
  Vector weights;

  int dimension() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
  std::size_t size() const { return means.size(); }

  void validate() const {
    detail::require(!means.empty(), "GaussianMixtureSpec: needs at least one component");
    detail::require(means.size() == covariances.size() &&
                        static_cast<Eigen::Index>(means.size()) == weights.size(),
                    "GaussianMixtureSpec: means, covariances and weights differ in length");
    const auto d = means.front().size();
    for (std::size_t j = 0; j < means.size(); ++j) {
      detail::require_dim(means[j].size() == d && covariances[j].rows() == d &&
                              covariances[j].cols() == d,
                          detail::concat("GaussianMixtureSpec: component ", j, " has wrong shape"));
    }
    detail::require((weights.array() >= 0).all(), "GaussianMixtureSpec: negative weight");
    detail::require(std::abs(weights.sum() - 1.0) <= 1e-12,
                    detail::concat("GaussianMixtureSpec: weights sum to ", weights.sum(), ", not 1"));
  }

  /// Isotropic components with equal weights.
  static GaussianMixtureSpec isotropic(std::vector<Vector> means, double variance) {
    GaussianMixtureSpec s;
    const auto d = means.front().size();
    s.covariances.assign(means.size(), variance * Matrix::Identity(d, d));
    s.weights = Vector::Constant(static_cast<Eigen::Index>(means.size()), 1.0 / means.size());
    s.means = std::move(means);
    return s;
  }

  GaussianMixtureSpec with_weights(const Vector& raw) const {
    detail::require(raw.size() == weights.size(), "with_weights: wrong number of weights");
    GaussianMixtureSpec s = *this;
    s.weights = raw / raw.sum();
    return s;
  }
};

/// A density known up to a constant. Batched evaluators default to row loops.
struct UnnormalizedTarget {
  std::string name;
  int dimension = 0;
  std::function<double(const Vector&)> log_u;
  std::function<Vector(const Vector&)> grad_log_u;
  std::function<Points(std::size_t, Rng&)> exact_sampler;
  std::function<Vector(const Points&)> batch_log_u;
  std::function<Points(const Points&)> batch_grad_log_u;
  std::vector<Vector> modes;
  /// Present when the target is a Gaussian mixture (analytic moments available).
  std::optional<GaussianMixtureSpec> mixture;

  bool has_sampler() const { return static_cast<bool>(exact_sampler); }

  Vector log_u_batch(const Points& x) const {
    check_dim(x.cols());
    if (batch_log_u) return batch_log_u(x);
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = log_u(x.row(i).transpose());
    return out;
  }

  Points grad_log_u_batch(const Points& x) const {
    check_dim(x.cols());
    if (batch_grad_log_u) return batch_grad_log_u(x);
    Points out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = grad_log_u(x.row(i).transpose());
    return out;
  }

  void check_dim(Eigen::Index d) const {
    detail::require_dim(d == dimension, detail::concat("target ", name, ": expected dimension ",
                                                       dimension, ", got ", d));
  }
};

namespace detail {

struct PreparedComponent {
  Vector mean;
  Matrix precision;
  Matrix chol;         // lower Cholesky factor of the covariance
  double log_coeff;    // log weight + log normalizer
};

inline std::vector<PreparedComponent> prepare(const GaussianMixtureSpec& spec) {
  std::vector<PreparedComponent> out;
  const auto d = static_cast<double>(spec.dimension());
  for (std::size_t j = 0; j < spec.size(); ++j) {
    Eigen::LLT<Matrix> llt(spec.covariances[j]);
    if (llt.info() != Eigen::Success || !spec.covariances[j].isApprox(spec.covariances[j].transpose()))
      throw Error(detail::concat("make_mixture: covariance of component ", j,
                                 " is not symmetric positive definite"));
    PreparedComponent c;
    c.mean = spec.means[j];
    c.chol = llt.matrixL();
    c.precision = llt.solve(Matrix::Identity(spec.dimension(), spec.dimension()));
    const double log_det = 2.0 * c.chol.diagonal().array().log().sum();
    c.log_coeff = std::log(spec.weights[static_cast<Eigen::Index>(j)]) -
                  0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * log_det;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace detail

inline UnnormalizedTarget make_mixture(const GaussianMixtureSpec& spec, std::string name = "mixture") {
  spec.validate();
  auto comps = std::make_shared<const std::vector<detail::PreparedComponent>>(detail::prepare(spec));
  const auto k = static_cast<Eigen::Index>(comps->size());

  auto component_logs = [comps, k](const Vector& x) {
    Vector l(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto& c = (*comps)[j];
      const Vector diff = x - c.mean;
      l[j] = c.log_coeff - 0.5 * diff.dot(c.precision * diff);
    }
    return l;
  };

  UnnormalizedTarget t;
  t.name = std::move(name);
  t.dimension = spec.dimension();
  t.log_u = [component_logs](const Vector& x) { return log_sum_exp(component_logs(x)); };
  t.grad_log_u = [component_logs, comps, k](const Vector& x) {
    const Vector l = component_logs(x);
    const double lse = log_sum_exp(l);
    Vector g = Vector::Zero(x.size());
    for (Eigen::Index j = 0; j < k; ++j) {
      const double r = std::exp(l[j] - lse);
      if (r == 0.0) continue;
      const auto& c = (*comps)[j];
      g += r * (c.precision * (c.mean - x));
    }
    return g;
  };
  t.exact_sampler = [comps, w = spec.weights](std::size_t n, Rng& rng) {
    std::discrete_distribution<int> pick(w.data(), w.data() + w.size());
    const auto d = (*comps)[0].mean.size();
    Points out(static_cast<Eigen::Index>(n), d);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const auto& c = (*comps)[pick(rng)];
      out.row(i) = (c.mean + c.chol * standard_normal_vector(d, rng)).transpose();
    }
    return out;
  };
  t.modes = spec.means;
  t.mixture = spec;
  return t;
}

inline Points sample_exact(const UnnormalizedTarget& target, std::size_t n, std::uint64_t seed) {
  if (!target.has_sampler())
    throw Error(detail::concat("sample_exact: target ", target.name, " has no exact sampler"));
  detail::require(n >= 1, "sample_exact: n must be positive");
  Rng rng(seed);
  return target.exact_sampler(n, rng);
}

// ---------------------------------------------------------------------------
// Benchmark scenarios

struct ScenarioParams {
  double sigma2 = 0.03;  // component variance where the scenario leaves it free
  double radius = 4.0;   // r of the two- and eight-component layouts
};

namespace detail {

inline Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

inline Vector vec1(double a) { return Vector::Constant(1, a); }

inline std::vector<Vector> ring(int count, double radius) {
  std::vector<Vector> out;
  for (int j = 0; j < count; ++j) {
    const double a = 2.0 * j * std::numbers::pi / count;
    out.push_back(vec2(radius * std::sin(a), radius * std::cos(a)));
  }
  return out;
}

inline std::vector<Vector> grid(int per_side, double spacing) {
  const int centre = (per_side + 1) / 2;
  std::vector<Vector> out;
  for (int j = 1; j <= per_side; ++j)
    for (int k = 1; k <= per_side; ++k) out.push_back(vec2(spacing * (j - centre), spacing * (k - centre)));
  return out;
}

inline GaussianMixtureSpec one_dim(double m1, double m2, double v1, double v2) {
  GaussianMixtureSpec s;
  s.means = {vec1(m1), vec1(m2)};
  s.covariances = {Matrix::Constant(1, 1, v1), Matrix::Constant(1, 1, v2)};
  s.weights = vec2(1.0 / 3.0, 2.0 / 3.0);
  return s;
}

}  // namespace detail

/// Point layouts of the curve-shaped scenarios (12-16).
inline std::vector<Vector> scenario_centres(int id) {
  using detail::vec2;
  constexpr double pi = std::numbers::pi;
  std::vector<Vector> out;
  switch (id) {
    case 12: {
      const int N = 400;
      for (int i = 0; i < N; ++i) out.push_back(4.0 * vec2(std::cos(2 * i * pi / N), std::sin(2 * i * pi / N)));
      break;
    }
    case 13: {
      const int N = 200;
      for (double radius : {2.0, 4.0})
        for (int i = 0; i < N; ++i)
          out.push_back(radius * vec2(std::cos(2 * i * pi / N), std::sin(2 * i * pi / N)));
      break;
    }
    case 14: {
      const int N = 400;
      for (int i = 0; i < N; ++i) {
        const double a = 4.0 * i * pi / N;
        out.push_back(a * vec2(std::cos(a), std::sin(a)));
      }
      break;
    }
    case 15: {
      const int N = 200;
      for (double sign : {1.0, -1.0})
        for (int i = 0; i < N; ++i) {
          const double a = 3.0 * i * pi / N;
          out.push_back(sign * a * vec2(std::cos(a), std::sin(a)));
        }
      break;
    }
    case 16: {
      const int N = 200;
      for (double shift : {-6.0, -2.0})
        for (int i = 0; i < N; ++i)
          out.push_back(vec2(8.0 * i / N + shift, 4.0 * std::sin(i * pi / N)));
      break;
    }
    default:
      throw Error(detail::concat("scenario_centres: scenario ", id, " is not curve-shaped"));
  }
  return out;
}

inline GaussianMixtureSpec scenario_spec(int id, const ScenarioParams& p = {}) {
  using detail::vec2;
  switch (id) {
    case 1: return detail::one_dim(1.0, -2.0, 0.25, 2.0);
    case 2: return detail::one_dim(3.0, -3.0, 0.25, 2.0);
    case 3: return detail::one_dim(3.0, -3.0, 0.03, 0.03);
    case 4: return GaussianMixtureSpec::isotropic({vec2(p.radius, 0), vec2(-p.radius, 0)}, p.sigma2);
    case 5: return GaussianMixtureSpec::isotropic(detail::ring(8, p.radius), p.sigma2);
    case 6: return GaussianMixtureSpec::isotropic(detail::grid(3, 4.0), p.sigma2);
    case 7: return GaussianMixtureSpec::isotropic(detail::ring(16, 4.0), 0.03);
    case 8: {
      auto means = detail::ring(8, 4.0);
      for (auto& m : detail::ring(8, 2.0)) means.push_back(m);
      return GaussianMixtureSpec::isotropic(std::move(means), 0.03);
    }
    case 9: return GaussianMixtureSpec::isotropic(detail::grid(5, 2.0), p.sigma2);
    case 10: return GaussianMixtureSpec::isotropic(detail::grid(7, 1.5), 0.03);
    case 11: return GaussianMixtureSpec::isotropic(detail::grid(9, 1.5), 0.03);
    case 12: case 13: case 14: case 15: case 16:
      return GaussianMixtureSpec::isotropic(scenario_centres(id), 0.03);
    default:
      throw Error(detail::concat("make_scenario: scenario id must be in 1..16, got ", id));
  }
}

inline UnnormalizedTarget make_scenario(int id, const ScenarioParams& p = {}) {
  return make_mixture(scenario_spec(id, p), detail::concat("scenario", id));
}

enum class CurveNoise { gaussian, uniform_disc, mixed };

/// Exact draws for the curve scenarios under any of the three noise models.
/// Only the Gaussian variant has a closed-form density (see make_scenario).
inline Points sample_curve_scenario(int id, CurveNoise noise, std::size_t n, std::uint64_t seed) {
  const auto centres = scenario_centres(id);
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, centres.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double disc_radius = 1.0 / 30.0;
  const double sd = std::sqrt(0.03);
  Points out(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Vector& c = centres[pick(rng)];
    bool uniform = noise == CurveNoise::uniform_disc;
    if (noise == CurveNoise::mixed) uniform = unit(rng) < 0.5;
    if (uniform) {
      const double rad = disc_radius * std::sqrt(unit(rng));
      const double ang = 2.0 * std::numbers::pi * unit(rng);
      out(i, 0) = c[0] + rad * std::cos(ang);
      out(i, 1) = c[1] + rad * std::sin(ang);
    } else {
      out(i, 0) = c[0] + sd * normal(rng);
      out(i, 1) = c[1] + sd * normal(rng);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// AR(1)-correlated Gaussian with all-ones mean

inline Matrix ar_covariance(int d, double rho) {
  Matrix s(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) s(i, j) = std::pow(rho, std::abs(i - j));
  return s;
}

/// Closed-form tridiagonal inverse of the AR(1) correlation matrix.
inline Matrix ar_precision(int d, double rho) {
  Matrix p = Matrix::Zero(d, d);
  if (d == 1) {
    p(0, 0) = 1.0;
    return p;
  }
  const double scale = 1.0 / (1.0 - rho * rho);
  for (int i = 0; i < d; ++i) {
    p(i, i) = scale * ((i == 0 || i == d - 1) ? 1.0 : 1.0 + rho * rho);
    if (i + 1 < d) p(i, i + 1) = p(i + 1, i) = -scale * rho;
  }
  return p;
}

inline GaussianMixtureSpec ar_gaussian_spec(int d, double rho) {
  GaussianMixtureSpec s;
  s.means = {Vector::Ones(d)};
  s.covariances = {ar_covariance(d, rho)};
  s.weights = Vector::Ones(1);
  return s;
}

inline UnnormalizedTarget make_ar_gaussian(int d, double rho) {
  detail::require(d >= 1, "make_ar_gaussian: d must be positive");
  detail::require(std::abs(rho) < 1.0, detail::concat("make_ar_gaussian: |rho| must be < 1, got ", rho));
  const double scale = 1.0 / (1.0 - rho * rho);

  // Tridiagonal product P (x - mu) without forming P.
  auto apply_precision = [d, rho, scale](const Vector& x) {
    const Vector z = x - Vector::Ones(d);
    Vector out(d);
    if (d == 1) {
      out = z;
      return out;
    }
    for (int i = 0; i < d; ++i) {
      double v = ((i == 0 || i == d - 1) ? 1.0 : 1.0 + rho * rho) * z[i];
      if (i > 0) v -= rho * z[i - 1];
      if (i + 1 < d) v -= rho * z[i + 1];
      out[i] = scale * v;
    }
    return out;
  };

  UnnormalizedTarget t;
  t.name = detail::concat("ar_gaussian_d", d);
  t.dimension = d;
  t.log_u = [apply_precision, d](const Vector& x) {
    return -0.5 * (x - Vector::Ones(d)).dot(apply_precision(x));
  };
  t.grad_log_u = [apply_precision](const Vector& x) -> Vector { return -apply_precision(x); };
  t.exact_sampler = [d, rho](std::size_t n, Rng& rng) {
    const double innov = std::sqrt(1.0 - rho * rho);
    Points z = standard_normal_points(static_cast<Eigen::Index>(n), d, rng);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      for (int j = 1; j < d; ++j) z(i, j) = rho * z(i, j - 1) + innov * z(i, j);
    }
    return Points((z.array() + 1.0).matrix());
  };
  t.modes = {Vector::Ones(d)};
  t.mixture = ar_gaussian_spec(d, rho);
  return t;
}

// ---------------------------------------------------------------------------
// Bayesian logistic regression over theta = (beta, log alpha)

struct LogisticRegressionData {
  Matrix features;  // N x p, intercept column included
  Vector labels;    // N, entries in {0, 1}

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index feature_count() const { return features.cols(); }

  void validate() const {
    detail::require_dim(features.rows() == labels.size(),
                        "LogisticRegressionData: one label per feature row required");
    detail::require(features.cols() >= 1, "LogisticRegressionData: no feature columns");
    detail::require(features.allFinite(), "LogisticRegressionData: non-finite feature value");
    for (Eigen::Index i = 0; i < labels.size(); ++i)
      detail::require(labels[i] == 0.0 || labels[i] == 1.0,
                      detail::concat("LogisticRegressionData: label at row ", i, " is not 0/1"));
  }
};

/// Gamma(shape, rate) prior on the precision alpha of the Gaussian prior on beta.
struct BlrPrior {
  double gamma_shape = 1.0;
  double gamma_rate = 0.01;
};

inline UnnormalizedTarget make_blr_posterior(LogisticRegressionData data, BlrPrior prior = {},
                                             std::string name = "blr") {
  data.validate();
  const auto p = data.feature_count();
  auto shared = std::make_shared<const LogisticRegressionData>(std::move(data));

  // Columns of `thetas` are parameter vectors; returns log u per column and,
  // optionally, the gradients (p+1) x B.
  auto evaluate = [shared, p, prior](const Matrix& thetas, Matrix* grads) {
    const auto& X = shared->features;
    const auto& y = shared->labels;
    const auto B = thetas.cols();
    const Matrix eta = X * thetas.topRows(p);  // N x B
    Vector out(B);
    if (grads) grads->resize(p + 1, B);
    Matrix resid(eta.rows(), B);
    for (Eigen::Index b = 0; b < B; ++b) {
      double ll = 0.0;
      for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        const double e = eta(i, b);
        ll += y[i] * e - softplus(e);
        resid(i, b) = y[i] - sigmoid(e);
      }
      const double a = thetas(p, b);
      const double alpha = std::exp(a);
      const double beta_sq = thetas.col(b).head(p).squaredNorm();
      const double half_p = 0.5 * static_cast<double>(p);
      out[b] = ll + half_p * a - 0.5 * alpha * beta_sq + prior.gamma_shape * a -
               prior.gamma_rate * alpha;
      if (grads)
        (*grads)(p, b) = half_p - 0.5 * alpha * beta_sq + prior.gamma_shape - prior.gamma_rate * alpha;
    }
    if (grads) {
      grads->topRows(p).noalias() = X.transpose() * resid;
      for (Eigen::Index b = 0; b < B; ++b)
        grads->col(b).head(p) -= std::exp(thetas(p, b)) * thetas.col(b).head(p);
    }
    return out;
  };

  UnnormalizedTarget t;
  t.name = std::move(name);
  t.dimension = static_cast<int>(p + 1);
  t.log_u = [evaluate](const Vector& theta) { return evaluate(Matrix(theta), nullptr)[0]; };
  t.grad_log_u = [evaluate](const Vector& theta) -> Vector {
    Matrix g;
    evaluate(Matrix(theta), &g);
    return g.col(0);
  };
  t.batch_log_u = [evaluate](const Points& thetas) {
    return evaluate(thetas.transpose(), nullptr);
  };
  t.batch_grad_log_u = [evaluate](const Points& thetas) -> Points {
    Matrix g;
    evaluate(thetas.transpose(), &g);
    return g.transpose();
  };
  return t;
}

}  // namespace regs
