#pragma once

// Runs every sampler of an ExperimentConfig on its target, scores the samples
// and writes artifacts:
//
//   <output_dir>/experiment.json        normalized config
//   <output_dir>/metrics.csv            all metric rows, in config order
//   <output_dir>/<sampler>/...          run record, scatter.svg, histogram.svg
//   <output_dir>/<sampler>/error.txt    when the sampler failed

#include "regs/baselines.hpp"
#include "regs/flow.hpp"
#include "regs/harness/config.hpp"
#include "regs/harness/dataset.hpp"
#include "regs/harness/figure.hpp"
#include "regs/metrics.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

namespace regs {

struct TargetBundle {
  UnnormalizedTarget target;
  std::optional<LogisticRegressionData> test;  // held-out data for logistic targets
  std::optional<Vector> bayes_beta;            // generating coefficients of synthetic data
};

inline GaussianMixtureSpec unequal_preset(const TargetConfig& t, int scenario) {
  const ScenarioParams params{t.sigma2, t.radius};
  GaussianMixtureSpec spec = scenario_spec(scenario, params);
  const auto k = static_cast<Eigen::Index>(spec.size());
  Vector raw(k);
  if (scenario == 4) {
    raw << 3.0, 1.0;  // (0.75, 0.25)
  } else if (scenario == 5) {
    raw << 1, 1, 1, 1, 3, 3, 3, 3;
  } else {
    raw = Vector::Constant(k, 3.0);
    raw.head(12).setOnes();  // 12 x 1/51 and 13 x 3/51
  }
  return spec.with_weights(raw);
}

inline TargetBundle build_target(const ExperimentConfig& cfg) {
  const auto info = cfg.info();
  const auto& t = cfg.target;
  TargetBundle b;
  switch (info.kind) {
    case TargetKind::scenario:
      b.target = make_mixture(scenario_spec(info.scenario, {t.sigma2, t.radius}), t.name);
      break;
    case TargetKind::unequal_mixture:
      b.target = make_mixture(unequal_preset(t, info.scenario), t.name);
      break;
    case TargetKind::ar_gaussian:
      b.target = make_ar_gaussian(t.dimension, t.rho);
      b.target.name = t.name;
      break;
    case TargetKind::blr_synthetic:
    case TargetKind::blr_dataset: {
      LogisticRegressionData all;
      if (info.kind == TargetKind::blr_synthetic) {
        const Vector beta = Eigen::Map<const Vector>(t.beta_star.data(), static_cast<Eigen::Index>(t.beta_star.size()));
        all = make_synthetic_logistic(t.rows, beta, derive_seed(cfg.seed, 0xda7a));
        b.bayes_beta = beta;
      } else {
        all = subsample_rows(to_logistic_data(load_sparse_dataset(t.dataset)), t.subsample, cfg.seed);
      }
      auto [train, test] = split_train_test(all, t.train_fraction, t.repeat_index, cfg.seed);
      if (info.kind == TargetKind::blr_dataset && t.standardize) standardize(train, test);
      b.target = make_blr_posterior(std::move(train), {t.gamma_shape, t.gamma_rate}, t.name);
      b.test = std::move(test);
      break;
    }
  }
  return b;
}

/// Accuracy of the classifier 1{x'beta >= 0} on the test set.
inline double plug_in_accuracy(const LogisticRegressionData& test, const Vector& beta) {
  const Vector eta = test.features * beta;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) correct += (eta[i] >= 0.0 ? 1.0 : 0.0) == test.labels[i];
  return static_cast<double>(correct) / static_cast<double>(eta.size());
}

inline std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

/// Per-sampler seed; depends on the sampler name, not its list position.
inline std::uint64_t sampler_seed(const ExperimentConfig& cfg, const std::string& sampler) {
  return derive_seed(cfg.seed, name_hash(sampler));
}

inline RunRecord run_sampler(const ExperimentConfig& cfg, const SamplerConfig& s, const UnnormalizedTarget& target) {
  const std::uint64_t seed = sampler_seed(cfg, s.name);
  const Vector init_mean = Eigen::Map<const Vector>(s.init_mean.data(), static_cast<Eigen::Index>(s.init_mean.size()));
  if (init_mean.size() && init_mean.size() != target.dimension)
    throw DimensionError(detail::concat("sampler ", s.name, ": init_mean has dimension ", init_mean.size(),
                                        ", target has ", target.dimension));
  RunRecord rec;
  switch (s.kind) {
    case SamplerKind::regs: {
      FlowConfig f;
      f.step_size = s.step_size;
      f.max_iterations = s.iterations;
      f.particle_count = cfg.particles;
      f.init_mean = init_mean;
      f.init_cov_scale = s.init_scale;
      f.reference_inflation = s.reference_inflation;
      f.network_depth = s.depth;
      f.network_width = s.width;
      f.trainer.learning_rate = s.learning_rate;
      f.trainer.inner_steps_first = s.inner_steps_first;
      f.trainer.inner_steps_warm = s.inner_steps_warm;
      f.snapshot_every = s.snapshot_every;
      f.seed = seed;
      rec = regs_run(target, f);
      break;
    }
    case SamplerKind::svgd: {
      SvgdConfig c;
      c.particles = static_cast<std::size_t>(cfg.particles);
      c.iterations = static_cast<std::size_t>(s.iterations);
      c.step_size = s.step_size;
      c.init_mean = init_mean;
      c.init_scale = s.init_scale;
      c.seed = seed;
      rec.final_samples = run_svgd(target, c);
      rec.config = {{"step_size", c.step_size}, {"iterations", c.iterations}, {"particles", c.particles}};
      break;
    }
    case SamplerKind::ula:
    case SamplerKind::mala: {
      ChainConfig c;
      c.step_size = s.step_size;
      c.n_samples = static_cast<std::size_t>(cfg.particles);
      c.burn_in = static_cast<std::size_t>(s.burn_in);
      c.n_chains = static_cast<std::size_t>(s.chains);
      c.thinning = static_cast<std::size_t>(s.thinning);
      c.init = s.init == "zeros" ? ChainInit::zeros : ChainInit::gaussian;
      c.seed = seed;
      auto res = run_chains(s.kind == SamplerKind::ula ? ChainSampler::ula : ChainSampler::mala, target, c);
      rec.final_samples = std::move(res.samples);
      rec.config = {{"step_size", c.step_size}, {"chains", c.n_chains}, {"burn_in", c.burn_in},
                    {"thinning", c.thinning},   {"samples", c.n_samples}};
      if (s.kind == SamplerKind::mala)
        rec.stats = {{"acceptance_rate", res.acceptance_rate()}, {"non_finite_ratios", res.non_finite}};
      break;
    }
  }
  rec.sampler = s.name;
  rec.target = target.name;
  rec.seed = seed;
  return rec;
}

inline TestFunction experiment_test_function(const ExperimentConfig& cfg, TestKind kind, int d) {
  return cfg.direction == "random" ? TestFunction::random(kind, d, derive_seed(cfg.seed, 0xa1fa))
                                   : TestFunction::along_ones(kind, d);
}

inline std::vector<MetricRow> score_samples(const ExperimentConfig& cfg, const TargetBundle& b,
                                            const std::string& sampler, const Points& samples) {
  std::vector<MetricRow> rows;
  const auto& target = b.target;
  auto add = [&](std::string kind, double est, double analytic) {
    rows.push_back({target.name, sampler, std::move(kind), est, analytic, std::abs(est - analytic)});
  };
  for (const auto& m : cfg.metrics) {
    if (m == "modes") {
      const auto hist = nearest_mode_histogram(samples, target.modes);
      const auto frac = hist.fractions();
      for (std::size_t j = 0; j < frac.size(); ++j)
        add(detail::concat("mode_", j), frac[j], target.mixture->weights[static_cast<Eigen::Index>(j)]);
    } else if (m == "accuracy") {
      const double analytic = b.bayes_beta ? plug_in_accuracy(*b.test, *b.bayes_beta)
                                           : std::numeric_limits<double>::quiet_NaN();
      add("accuracy", classification_accuracy(samples, *b.test), analytic);
    } else {
      const auto h = experiment_test_function(cfg, test_kind_from_string(m), target.dimension);
      const double analytic = target.mixture ? analytic_mixture_expectation(*target.mixture, h)
                                             : std::numeric_limits<double>::quiet_NaN();
      add(m, mc_estimate(samples, h), analytic);
    }
  }
  return rows;
}

inline void write_figures(const RunRecord& rec, const TargetBundle& b, const std::filesystem::path& dir) {
  if (rec.final_samples.cols() == 2) emit_scatter_figure(rec.final_samples, b.target.modes, dir / "scatter.svg");
  if (b.target.mixture && !b.target.modes.empty() && b.target.modes.size() > 1) {
    const auto& w = b.target.mixture->weights;
    emit_histogram_figure(nearest_mode_histogram(rec.final_samples, b.target.modes),
                          std::vector<double>(w.data(), w.data() + w.size()), dir / "histogram.svg");
  }
}

struct CellOutcome {
  std::string sampler;
  bool ok = false;
  std::string error;
  std::vector<MetricRow> metrics;
};

struct ExperimentResult {
  int exit_status = 0;  // 0 all samplers succeeded, 1 some failed
  std::vector<MetricRow> metrics;
  std::vector<CellOutcome> cells;
};

inline int workers_from_env() {
  if (const char* v = std::getenv("REGS_WORKERS")) {
    const int n = std::atoi(v);
    if (n >= 1) return n;
  }
  return 1;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, int workers = workers_from_env(),
                                       std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  const TargetBundle bundle = build_target(cfg);
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  detail::write_text_file(out / "experiment.json", serialize_config(cfg).dump(2) + "\n");

  // An empty sampler list scores exact target samples instead.
  std::vector<SamplerConfig> cells = cfg.samplers;
  const bool exact_only = cells.empty();
  if (exact_only) cells.push_back({.name = "exact"});

  std::vector<CellOutcome> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const auto& s = cells[i];
      CellOutcome& o = outcomes[i];
      o.sampler = s.name;
      const fs::path dir = out / s.name;
      try {
        RunRecord rec;
        if (exact_only) {
          rec.sampler = "exact";
          rec.target = bundle.target.name;
          rec.seed = sampler_seed(cfg, "exact");
          rec.final_samples = sample_exact(bundle.target, static_cast<std::size_t>(cfg.particles), rec.seed);
        } else {
          rec = run_sampler(cfg, s, bundle.target);
        }
        rec.metrics = score_samples(cfg, bundle, s.name, rec.final_samples);
        write_run_record(rec, dir);
        write_figures(rec, bundle, dir);
        o.metrics = rec.metrics;
        o.ok = true;
      } catch (const FlowAborted& e) {
        o.error = e.what();
        write_run_record(e.partial(), dir);
      } catch (const std::exception& e) {
        o.error = e.what();
      }
      if (!o.ok) detail::write_text_file(dir / "error.txt", o.error + "\n");
      if (log) {
        std::lock_guard lock(log_mutex);
        *log << s.name << ": " << (o.ok ? "ok" : "FAILED: " + o.error) << '\n';
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(cells.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentResult result;
  std::string csv = metric_csv_header();
  for (auto& o : outcomes) {
    if (!o.ok) result.exit_status = 1;
    for (const auto& r : o.metrics) {
      csv += metric_csv_row(r);
      result.metrics.push_back(r);
    }
  }
  detail::write_text_file(out / "metrics.csv", csv);
  result.cells = std::move(outcomes);
  return result;
}

}  // namespace regs
