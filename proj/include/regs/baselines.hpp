#pragma once

// Comparison samplers: unadjusted Langevin (ULA), Metropolis-adjusted
// Langevin (MALA), Stein variational gradient descent (SVGD), and a
// multi-chain driver with burn-in.

#include "regs/targets.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace regs {

/// x + s grad log u(x) + sqrt(2 s) noise.
inline Vector ula_step(const UnnormalizedTarget& target, const Vector& x, double s, const Vector& noise) {
  const Vector g = target.grad_log_u(x);
  if (!g.allFinite()) throw NumericError("ula_step: non-finite gradient");
  return x + s * g + std::sqrt(2.0 * s) * noise;
}

namespace detail {

// log q(to | from) up to a constant for the Langevin proposal N(from + s g, 2 s I).
inline double langevin_log_proposal(const Vector& to, const Vector& from, const Vector& grad_from, double s) {
  return -(to - from - s * grad_from).squaredNorm() / (4.0 * s);
}

}  // namespace detail

/// Metropolis-Hastings log acceptance ratio of moving x -> proposal.
inline double mala_log_acceptance(const UnnormalizedTarget& target, const Vector& x,
                                  const Vector& proposal, double s) {
  if (proposal == x) return 0.0;
  const Vector gx = target.grad_log_u(x);
  const Vector gp = target.grad_log_u(proposal);
  return target.log_u(proposal) + detail::langevin_log_proposal(x, proposal, gp, s) -
         target.log_u(x) - detail::langevin_log_proposal(proposal, x, gx, s);
}

struct MalaStep {
  Vector x;
  bool accepted = false;
  bool non_finite = false;  // acceptance ratio was not finite; counted as a rejection
};

inline MalaStep mala_step(const UnnormalizedTarget& target, const Vector& x, double s, Rng& rng) {
  const Vector proposal = ula_step(target, x, s, standard_normal_vector(x.size(), rng));
  const double log_ratio = mala_log_acceptance(target, x, proposal, s);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (!std::isfinite(log_ratio)) return {x, false, true};
  if (log_ratio >= 0.0 || std::log(unit(rng)) < log_ratio) return {proposal, true, false};
  return {x, false, false};
}

/// Median heuristic h = med^2 / log n over pairwise Euclidean distances.
inline double svgd_bandwidth(const Points& cloud) {
  const auto n = cloud.rows();
  if (n < 2) return 1.0;
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) dists.push_back((cloud.row(i) - cloud.row(j)).norm());
  const auto mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  double med = dists[mid];
  if (dists.size() % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), dists.begin() + mid);
    med = 0.5 * (med + lower);
  }
  return med * med / std::log(static_cast<double>(n));
}

/// One SVGD update with the RBF kernel exp(-|x - x'|^2 / h).
inline Points svgd_step(const UnnormalizedTarget& target, const Points& cloud, double step) {
  const auto n = cloud.rows();
  detail::require(n >= 1, "svgd_step: empty cloud");
  const Points scores = target.grad_log_u_batch(cloud);
  if (n == 1) return cloud + step * scores;
  const double h = svgd_bandwidth(cloud);
  if (!(h > 0.0) || !std::isfinite(h))
    throw NumericError("svgd_step: kernel bandwidth is not positive (coincident particles)");
  const Vector sq = cloud.rowwise().squaredNorm();
  Matrix dist2 = -2.0 * cloud * cloud.transpose();
  dist2.colwise() += sq;
  dist2.rowwise() += sq.transpose();
  const Matrix kernel = (-dist2.cwiseMax(0.0) / h).array().exp().matrix();
  const Vector row_sums = kernel.rowwise().sum();
  Points update = kernel * scores + (2.0 / h) * (row_sums.asDiagonal() * cloud - kernel * cloud);
  return cloud + (step / static_cast<double>(n)) * update;
}

enum class ChainSampler { ula, mala };

enum class ChainInit { gaussian, zeros, fixed };

struct ChainConfig {
  double step_size = 1e-2;
  std::size_t n_samples = 1000;
  std::size_t burn_in = 1000;
  std::size_t n_chains = 1;
  std::size_t thinning = 1;
  ChainInit init = ChainInit::gaussian;
  Vector init_point;  // used with ChainInit::fixed
  std::uint64_t seed = 0;

  std::size_t per_chain_quota() const { return (n_samples + n_chains - 1) / n_chains; }

  void validate() const {
    detail::require(step_size > 0, "ChainConfig: step_size must be positive");
    detail::require(n_samples >= 1, "ChainConfig: n_samples must be positive");
    detail::require(n_chains >= 1, "ChainConfig: n_chains must be positive");
    detail::require(thinning >= 1, "ChainConfig: thinning must be >= 1");
  }
};

struct ChainResult {
  Points samples;
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  std::size_t non_finite = 0;
  double acceptance_rate() const {
    return proposals ? static_cast<double>(accepted) / static_cast<double>(proposals) : 1.0;
  }
};

class ChainError : public Error {
 public:
  ChainError(const std::string& what, std::size_t chain) : Error(what), chain_(chain) {}
  std::size_t chain() const { return chain_; }

 private:
  std::size_t chain_;
};

/// Independent chains, each burned in and then contributing ceil(n/k) states;
/// the pooled states are truncated to exactly n_samples rows.
inline ChainResult run_chains(ChainSampler sampler, const UnnormalizedTarget& target, const ChainConfig& cfg) {
  cfg.validate();
  const int d = target.dimension;
  const auto quota = cfg.per_chain_quota();
  ChainResult result;
  result.samples.resize(static_cast<Eigen::Index>(cfg.n_samples), d);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < cfg.n_chains; ++c) {
    Rng rng(derive_seed(cfg.seed, c));
    Vector x;
    switch (cfg.init) {
      case ChainInit::gaussian: x = standard_normal_vector(d, rng); break;
      case ChainInit::zeros: x = Vector::Zero(d); break;
      case ChainInit::fixed:
        detail::require_dim(cfg.init_point.size() == d, "run_chains: init_point has wrong dimension");
        x = cfg.init_point;
        break;
    }
    const std::size_t total = cfg.burn_in + quota * cfg.thinning;
    std::size_t kept = 0;
    try {
      for (std::size_t t = 1; t <= total; ++t) {
        if (sampler == ChainSampler::ula) {
          x = ula_step(target, x, cfg.step_size, standard_normal_vector(d, rng));
        } else {
          auto st = mala_step(target, x, cfg.step_size, rng);
          ++result.proposals;
          result.accepted += st.accepted;
          result.non_finite += st.non_finite;
          x = std::move(st.x);
        }
        if (!x.allFinite()) throw NumericError("non-finite state");
        if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thinning == 0) {
          if (row < result.samples.rows() && kept < quota) result.samples.row(row++) = x.transpose();
          ++kept;
        }
      }
    } catch (const Error& e) {
      throw ChainError(detail::concat("run_chains: chain ", c, ": ", e.what()), c);
    }
  }
  return result;
}

struct SvgdConfig {
  std::size_t particles = 1000;
  std::size_t iterations = 1000;
  double step_size = 2e-2;
  Vector init_mean;  // empty: origin
  double init_scale = 1.0;
  std::uint64_t seed = 0;
};

inline Points run_svgd(const UnnormalizedTarget& target, const SvgdConfig& cfg) {
  detail::require(cfg.particles >= 2, "run_svgd: need at least two particles");
  Rng rng(cfg.seed);
  Points cloud = std::sqrt(cfg.init_scale) *
                 standard_normal_points(static_cast<Eigen::Index>(cfg.particles), target.dimension, rng);
  if (cfg.init_mean.size()) cloud.rowwise() += cfg.init_mean.transpose();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    cloud = svgd_step(target, cloud, cfg.step_size);
    if (!cloud.allFinite())
      throw NumericError(detail::concat("run_svgd: non-finite particles at iteration ", it));
  }
  return cloud;
}

}  // namespace regs
