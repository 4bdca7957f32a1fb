#pragma once

#include "regs/run_record.hpp"
#include "regs/targets.hpp"

#include <string>
#include <vector>

namespace regs {

enum class TestKind { linear, square, exp, cosine };

inline std::string to_string(TestKind k) {
  switch (k) {
    case TestKind::linear: return "linear";
    case TestKind::square: return "square";
    case TestKind::exp: return "exp";
    case TestKind::cosine: return "cosine";
  }
  return "?";
}

inline TestKind test_kind_from_string(const std::string& s) {
  if (s == "linear") return TestKind::linear;
  if (s == "square") return TestKind::square;
  if (s == "exp") return TestKind::exp;
  if (s == "cosine") return TestKind::cosine;
  throw Error(detail::concat("unknown test function kind '", s, "'"));
}

/// h(x) = a'x, (a'x)^2, exp(a'x) or scale * cos(a'x + phase), with |a| = 1.
struct TestFunction {
  TestKind kind = TestKind::linear;
  Vector direction;
  double phase = 0.5;
  double scale = 10.0;

  static TestFunction along_ones(TestKind kind, int d) {
    return {kind, Vector::Ones(d) / std::sqrt(static_cast<double>(d))};
  }

  static TestFunction random(TestKind kind, int d, std::uint64_t seed) {
    Rng rng(seed);
    Vector a = standard_normal_vector(d, rng);
    return {kind, a / a.norm()};
  }

  void validate() const {
    detail::require(std::abs(direction.norm() - 1.0) <= 1e-12,
                    detail::concat("TestFunction: direction norm is ", direction.norm(), ", not 1"));
  }

  double operator()(double projection) const {
    switch (kind) {
      case TestKind::linear: return projection;
      case TestKind::square: return projection * projection;
      case TestKind::exp: return std::exp(projection);
      case TestKind::cosine: return scale * std::cos(projection + phase);
    }
    return 0.0;
  }
};

inline double mc_estimate(const Points& samples, const TestFunction& h) {
  detail::require(samples.rows() >= 1, "mc_estimate: no samples");
  detail::require_dim(samples.cols() == h.direction.size(), "mc_estimate: direction dimension mismatch");
  const Vector proj = samples * h.direction;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < proj.size(); ++i) sum += h(proj[i]);
  return sum / static_cast<double>(proj.size());
}

/// Closed-form E[h(X)] under a Gaussian mixture via per-component identities.
inline double analytic_mixture_expectation(const GaussianMixtureSpec& spec, const TestFunction& h) {
  spec.validate();
  double total = 0.0;
  for (std::size_t j = 0; j < spec.size(); ++j) {
    const double mean = h.direction.dot(spec.means[j]);
    const double var = h.direction.dot(spec.covariances[j] * h.direction);
    double e = 0.0;
    switch (h.kind) {
      case TestKind::linear: e = mean; break;
      case TestKind::square: e = var + mean * mean; break;
      case TestKind::exp: e = std::exp(mean + 0.5 * var); break;
      case TestKind::cosine: e = h.scale * std::exp(-0.5 * var) * std::cos(mean + h.phase); break;
    }
    total += spec.weights[static_cast<Eigen::Index>(j)] * e;
  }
  return total;
}

struct ModeHistogram {
  std::vector<std::size_t> counts;
  std::vector<Vector> modes;

  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  std::vector<double> fractions() const {
    std::vector<double> f;
    const double n = static_cast<double>(total());
    for (auto c : counts) f.push_back(n > 0 ? static_cast<double>(c) / n : 0.0);
    return f;
  }

  std::size_t occupied(std::size_t min_count = 1) const {
    std::size_t k = 0;
    for (auto c : counts) k += (c >= min_count);
    return k;
  }
};

/// Euclidean nearest-mode assignment; ties go to the lowest mode index.
inline ModeHistogram nearest_mode_histogram(const Points& samples, const std::vector<Vector>& modes) {
  detail::require(!modes.empty(), "nearest_mode_histogram: no modes given");
  ModeHistogram h;
  h.modes = modes;
  h.counts.assign(modes.size(), 0);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < modes.size(); ++j) {
      const double d = (samples.row(i).transpose() - modes[j]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    ++h.counts[best];
  }
  return h;
}

/// Per-iteration mean squared velocity norm, the empirical dissipation rate.
inline std::vector<double> dissipation_series(const RunRecord& rec) {
  if (rec.diagnostics.empty())
    throw Error(detail::concat("dissipation_series: run ", rec.sampler, " has no velocity diagnostics"));
  std::vector<double> out;
  out.reserve(rec.diagnostics.size());
  for (const auto& d : rec.diagnostics) out.push_back(d.mean_sq_velocity);
  return out;
}

/// Means over consecutive non-overlapping windows (a trailing partial window is dropped).
inline std::vector<double> windowed_means(const std::vector<double>& series, std::size_t window) {
  detail::require(window >= 1, "windowed_means: window must be positive");
  std::vector<double> out;
  for (std::size_t start = 0; start + window <= series.size(); start += window) {
    double s = 0.0;
    for (std::size_t i = start; i < start + window; ++i) s += series[i];
    out.push_back(s / static_cast<double>(window));
  }
  return out;
}

/// Fraction of consecutive pairs (a_i, a_{i+1}) with a_{i+1} <= a_i.
inline double non_increasing_fraction(const std::vector<double>& values) {
  if (values.size() < 2) return 1.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) ok += values[i + 1] <= values[i];
  return static_cast<double>(ok) / static_cast<double>(values.size() - 1);
}

/// Posterior-predictive accuracy: average sigmoid(x'beta) over particles laid
/// out as (beta, log alpha); predict 1 when the average is >= 0.5.
inline double classification_accuracy(const Points& particles, const LogisticRegressionData& test) {
  detail::require(test.rows() >= 1, "classification_accuracy: empty test set");
  detail::require(particles.rows() >= 1, "classification_accuracy: no particles");
  const auto p = test.feature_count();
  detail::require_dim(particles.cols() == p + 1,
                      detail::concat("classification_accuracy: particles have ", particles.cols(),
                                     " columns, expected ", p + 1));
  const Matrix eta = test.features * particles.leftCols(p).transpose();  // N x particles
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    double prob = 0.0;
    for (Eigen::Index k = 0; k < eta.cols(); ++k) prob += sigmoid(eta(i, k));
    prob /= static_cast<double>(eta.cols());
    const double predicted = prob >= 0.5 ? 1.0 : 0.0;
    correct += predicted == test.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(test.rows());
}

}  // namespace regs
