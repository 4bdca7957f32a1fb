#pragma once

// Experiment configuration: JSON in, validated struct with defaults out.
//
// {
//   "target": "8gaussians" | {"name": "ar_gaussian", "dimension": 10, ...},
//   "sampler": "regs"  or  "samplers": ["regs", "svgd", {"name": "ula_50", "step_size": 0.05}],
//   "metrics": ["linear", "square", "exp", "cosine", "modes", "accuracy"],
//   "seed": 1, "particles": 2000, "direction": "ones" | "random", "output_dir": "runs"
// }

#include "regs/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace regs {

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Column groups of the step-size table; every target belongs to one.
enum class TargetFamily { two_gaussians, eight_gaussians, nine_gaussians, many_gaussians, bgir, covertype };

enum class TargetKind { scenario, unequal_mixture, ar_gaussian, blr_synthetic, blr_dataset };

struct TargetInfo {
  TargetKind kind;
  TargetFamily family;
  int scenario = 0;    // scenario id, or the base scenario of an unequal preset
  int depth = 3;       // network depth used by REGS on this target
  int particles = 2000;
};

inline std::optional<TargetInfo> lookup_target(const std::string& name) {
  using F = TargetFamily;
  using K = TargetKind;
  struct Entry {
    const char* name;
    TargetInfo info;
  };
  static const Entry table[] = {
      {"2gaussians_1d1", {K::scenario, F::two_gaussians, 1, 3}},
      {"2gaussians_1d2", {K::scenario, F::two_gaussians, 2, 3}},
      {"2gaussians_1d3", {K::scenario, F::two_gaussians, 3, 3}},
      {"2gaussians", {K::scenario, F::two_gaussians, 4, 3}},
      {"8gaussians", {K::scenario, F::eight_gaussians, 5, 4}},
      {"9gaussians", {K::scenario, F::nine_gaussians, 6, 4}},
      {"16gaussians_1c", {K::scenario, F::nine_gaussians, 7, 6}},
      {"16gaussians_2c", {K::scenario, F::nine_gaussians, 8, 6}},
      {"25gaussians", {K::scenario, F::many_gaussians, 9, 6, 5000}},
      {"49gaussians", {K::scenario, F::many_gaussians, 10, 6, 5000}},
      {"81gaussians", {K::scenario, F::many_gaussians, 11, 6, 5000}},
      {"1circle", {K::scenario, F::eight_gaussians, 12, 4}},
      {"2circles", {K::scenario, F::eight_gaussians, 13, 4}},
      {"1spiral", {K::scenario, F::eight_gaussians, 14, 4}},
      {"2spirals", {K::scenario, F::eight_gaussians, 15, 4}},
      {"moons", {K::scenario, F::eight_gaussians, 16, 4}},
      {"2gaussians_unequal", {K::unequal_mixture, F::two_gaussians, 4, 3}},
      {"8gaussians_unequal", {K::unequal_mixture, F::eight_gaussians, 5, 4}},
      {"25gaussians_unequal", {K::unequal_mixture, F::many_gaussians, 9, 6, 5000}},
      {"ar_gaussian", {K::ar_gaussian, F::many_gaussians, 0, 3, 5000}},
      {"blr_synthetic", {K::blr_synthetic, F::bgir, 0, 3, 5000}},
      {"banana", {K::blr_dataset, F::bgir, 0, 3, 5000}},
      {"german", {K::blr_dataset, F::bgir, 0, 3, 5000}},
      {"image", {K::blr_dataset, F::bgir, 0, 3, 5000}},
      {"ringnorm", {K::blr_dataset, F::bgir, 0, 3, 5000}},
      {"covertype", {K::blr_dataset, F::covertype, 0, 3, 5000}},
  };
  for (const auto& e : table)
    if (name == e.name) return e.info;
  if (name.rfind("scenario", 0) == 0) {
    int id = 0;
    const char* b = name.data() + 8;
    const char* e = name.data() + name.size();
    auto res = std::from_chars(b, e, id);
    if (res.ec == std::errc() && res.ptr == e && b != e && id >= 1 && id <= 16) {
      for (const auto& entry : table)
        if (entry.info.kind == K::scenario && entry.info.scenario == id) return entry.info;
    }
  }
  return std::nullopt;
}

inline bool is_blr(const TargetInfo& t) { return t.kind == TargetKind::blr_synthetic || t.kind == TargetKind::blr_dataset; }

enum class SamplerKind { regs, svgd, ula, mala };

/// Step-size table; NaN means no published setting.
inline double default_step_size(SamplerKind s, TargetFamily f) {
  static const double table[4][6] = {
      {5e-4, 5e-4, 5e-4, 5e-4, 2e-3, 2e-3},
      {2e-2, 2e-2, 2e-2, 2e-2, 5e-2, 5e-2},
      {2e-2, 5e-2, 1e-1, 5e-2, 1e-3, 1e-4},
      {5e-2, 2e-1, 5e-1, 5e-1, 1e-3, std::numeric_limits<double>::quiet_NaN()},
  };
  return table[static_cast<int>(s)][static_cast<int>(f)];
}

struct TargetConfig {
  std::string name;
  // Gaussian-mixture scenarios
  double sigma2 = 0.03;
  double radius = 4.0;
  // AR Gaussian
  int dimension = 10;
  double rho = 0.7;
  // logistic regression
  std::string dataset;  // path, required for the dataset targets
  int rows = 2000;      // synthetic data size
  std::vector<double> beta_star;  // synthetic coefficients, intercept last
  double train_fraction = 0.8;
  int repeat_index = 0;
  int subsample = 20000;
  bool standardize = true;
  double gamma_shape = 1.0;
  double gamma_rate = 0.01;

  bool operator==(const TargetConfig&) const = default;
};

struct SamplerConfig {
  std::string name;  // unique within an experiment, e.g. "ula_50"
  SamplerKind kind = SamplerKind::regs;
  int chains = 1;
  double step_size = 0.0;
  int iterations = 0;  // REGS outer iterations / SVGD iterations
  // REGS
  int depth = 3;
  int width = 128;
  double learning_rate = 5e-4;
  int inner_steps_first = 200;
  int inner_steps_warm = 20;
  double reference_inflation = 2.0;
  int snapshot_every = 500;
  // REGS and SVGD initial cloud N(init_mean, init_scale I)
  std::vector<double> init_mean;
  double init_scale = 1.0;
  // ULA / MALA
  int burn_in = 1000;
  int thinning = 1;
  std::string init = "gaussian";

  bool operator==(const SamplerConfig&) const = default;
};

struct ExperimentConfig {
  TargetConfig target;
  std::vector<SamplerConfig> samplers;
  std::vector<std::string> metrics;
  std::uint64_t seed = 0;
  int particles = 2000;
  std::string direction = "ones";
  std::string output_dir = "runs";
  std::vector<std::string> warnings;

  TargetInfo info() const { return *lookup_target(target.name); }
  bool operator==(const ExperimentConfig&) const = default;
};

inline const char* to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::regs: return "regs";
    case SamplerKind::svgd: return "svgd";
    case SamplerKind::ula: return "ula";
    case SamplerKind::mala: return "mala";
  }
  return "?";
}

namespace detail {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError(concat(path, ": ", what));
  }

  std::string at(const std::string& key) const { return concat(path_, ".", key); }
  bool has(const std::string& key) const { return obj_.contains(key); }

  void only(std::initializer_list<const char*> allowed) const {
    for (const auto& [key, value] : obj_.items()) {
      const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
      if (!ok) fail(at(key), "unknown key");
    }
  }

  template <class T>
  void get(const std::string& key, T& out) const {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(at(key), "expected a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(at(key), "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<long long>() < 0 && !v.is_number_unsigned()) fail(at(key), "expected a non-negative integer");
      }
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(at(key), "expected a number");
      out = v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(at(key), "expected a string");
      out = v.get<std::string>();
    } else {
      if (!v.is_array()) fail(at(key), "expected an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) fail(concat(at(key), "[", i, "]"), "expected a number");
        out.push_back(v[i].get<double>());
      }
    }
  }

  void positive(const std::string& key, double v) const {
    if (!(v > 0) || !std::isfinite(v)) fail(at(key), "must be positive");
  }

 private:
  const json& obj_;
  std::string path_;
};

inline SamplerConfig sampler_from_name(const std::string& name, const std::string& path) {
  SamplerConfig s;
  s.name = name;
  if (name == "regs") return s.kind = SamplerKind::regs, s;
  if (name == "svgd") return s.kind = SamplerKind::svgd, s;
  for (auto [prefix, kind] : {std::pair{"ula", SamplerKind::ula}, std::pair{"mala", SamplerKind::mala}}) {
    const std::string p(prefix);
    if (name == p) return s.kind = kind, s;
    if (name.rfind(p + "_", 0) == 0) {
      int k = 0;
      const char* b = name.data() + p.size() + 1;
      const char* e = name.data() + name.size();
      auto res = std::from_chars(b, e, k);
      if (res.ec != std::errc() || res.ptr != e || b == e || k < 1)
        Reader::fail(path, concat("invalid chain count in sampler name '", name, "'"));
      s.kind = kind;
      s.chains = k;
      return s;
    }
  }
  Reader::fail(path, concat("unknown sampler '", name, "' (expected regs, svgd, ula_<k> or mala_<k>)"));
}

inline void parse_target(const json& j, TargetConfig& t, const std::string& path) {
  if (j.is_string()) {
    t.name = j.get<std::string>();
  } else if (j.is_object()) {
    if (!j.contains("name")) Reader::fail(path + ".name", "missing target name");
    Reader r(j, path);
    r.get("name", t.name);
  } else {
    Reader::fail(path, "expected a target name or object");
  }
  const auto info = lookup_target(t.name);
  if (!info) Reader::fail(path, concat("unknown target '", t.name, "'"));
  if (!j.is_object()) {
    if (info->kind == TargetKind::blr_dataset) Reader::fail(path, concat("target '", t.name, "' needs a \"dataset\" path"));
    if (info->kind == TargetKind::blr_synthetic) t.beta_star = {1.0, -1.0, 0.5, -0.5, 0.25};
    return;
  }
  Reader r(j, path);
  switch (info->kind) {
    case TargetKind::scenario:
    case TargetKind::unequal_mixture:
      r.only({"name", "sigma2", "radius"});
      r.get("sigma2", t.sigma2);
      r.get("radius", t.radius);
      r.positive("sigma2", t.sigma2);
      r.positive("radius", t.radius);
      break;
    case TargetKind::ar_gaussian:
      r.only({"name", "dimension", "rho"});
      r.get("dimension", t.dimension);
      r.get("rho", t.rho);
      if (t.dimension < 1) Reader::fail(r.at("dimension"), "must be >= 1");
      if (!(std::abs(t.rho) < 1)) Reader::fail(r.at("rho"), "must lie in (-1, 1)");
      break;
    case TargetKind::blr_synthetic:
    case TargetKind::blr_dataset: {
      if (info->kind == TargetKind::blr_synthetic) {
        r.only({"name", "rows", "beta_star", "train_fraction", "repeat_index", "gamma_shape", "gamma_rate"});
        t.beta_star = {1.0, -1.0, 0.5, -0.5, 0.25};
        r.get("rows", t.rows);
        r.get("beta_star", t.beta_star);
        if (t.rows < 2) Reader::fail(r.at("rows"), "must be >= 2");
        if (t.beta_star.empty()) Reader::fail(r.at("beta_star"), "must not be empty");
      } else {
        r.only({"name", "dataset", "train_fraction", "repeat_index", "subsample", "standardize", "gamma_shape",
                "gamma_rate"});
        if (!r.has("dataset")) Reader::fail(r.at("dataset"), "missing dataset path");
        r.get("dataset", t.dataset);
        r.get("subsample", t.subsample);
        r.get("standardize", t.standardize);
        if (t.subsample < 2) Reader::fail(r.at("subsample"), "must be >= 2");
      }
      r.get("train_fraction", t.train_fraction);
      r.get("repeat_index", t.repeat_index);
      r.get("gamma_shape", t.gamma_shape);
      r.get("gamma_rate", t.gamma_rate);
      if (!(t.train_fraction > 0 && t.train_fraction < 1)) Reader::fail(r.at("train_fraction"), "must lie in (0, 1)");
      if (t.repeat_index < 0) Reader::fail(r.at("repeat_index"), "must be >= 0");
      r.positive("gamma_shape", t.gamma_shape);
      r.positive("gamma_rate", t.gamma_rate);
      break;
    }
  }
}

inline SamplerConfig parse_sampler(const json& j, const TargetInfo& info, const std::string& target_name,
                                   const std::string& path, std::vector<std::string>& warnings) {
  SamplerConfig s;
  bool step_given = false;
  if (j.is_string()) {
    s = sampler_from_name(j.get<std::string>(), path);
  } else if (j.is_object()) {
    if (!j.contains("name") || !j.at("name").is_string()) Reader::fail(path + ".name", "missing sampler name");
    s = sampler_from_name(j.at("name").get<std::string>(), path + ".name");
    step_given = j.contains("step_size");
  } else {
    Reader::fail(path, "expected a sampler name or object");
  }

  s.step_size = default_step_size(s.kind, info.family);
  s.depth = info.depth;
  s.iterations = s.kind == SamplerKind::regs ? 10000 : s.kind == SamplerKind::svgd ? 2000 : 0;

  if (j.is_object()) {
    Reader r(j, path);
    switch (s.kind) {
      case SamplerKind::regs:
        r.only({"name", "step_size", "iterations", "depth", "width", "learning_rate", "inner_steps_first",
                "inner_steps_warm", "reference_inflation", "snapshot_every", "init_mean", "init_scale"});
        break;
      case SamplerKind::svgd:
        r.only({"name", "step_size", "iterations", "init_mean", "init_scale"});
        break;
      default:
        r.only({"name", "step_size", "burn_in", "thinning", "init"});
    }
    r.get("step_size", s.step_size);
    r.get("iterations", s.iterations);
    r.get("depth", s.depth);
    r.get("width", s.width);
    r.get("learning_rate", s.learning_rate);
    r.get("inner_steps_first", s.inner_steps_first);
    r.get("inner_steps_warm", s.inner_steps_warm);
    r.get("reference_inflation", s.reference_inflation);
    r.get("snapshot_every", s.snapshot_every);
    r.get("init_mean", s.init_mean);
    r.get("init_scale", s.init_scale);
    r.get("burn_in", s.burn_in);
    r.get("thinning", s.thinning);
    r.get("init", s.init);
    if (step_given) r.positive("step_size", s.step_size);
    if (s.kind == SamplerKind::regs || s.kind == SamplerKind::svgd) {
      if (s.iterations < 1) Reader::fail(r.at("iterations"), "must be >= 1");
    }
    if (s.kind == SamplerKind::regs) {
      if (s.depth < 2) Reader::fail(r.at("depth"), "must be >= 2");
      if (s.width < 1) Reader::fail(r.at("width"), "must be >= 1");
      r.positive("learning_rate", s.learning_rate);
      r.positive("reference_inflation", s.reference_inflation);
      if (s.inner_steps_first < 0) Reader::fail(r.at("inner_steps_first"), "must be >= 0");
      if (s.inner_steps_warm < 0) Reader::fail(r.at("inner_steps_warm"), "must be >= 0");
      if (s.snapshot_every < 1) Reader::fail(r.at("snapshot_every"), "must be >= 1");
    }
    if (s.init_scale < 0) Reader::fail(r.at("init_scale"), "must be >= 0");
    if (s.burn_in < 0) Reader::fail(r.at("burn_in"), "must be >= 0");
    if (s.thinning < 1) Reader::fail(r.at("thinning"), "must be >= 1");
    if (s.init != "gaussian" && s.init != "zeros") Reader::fail(r.at("init"), "must be \"gaussian\" or \"zeros\"");
  }

  if (std::isnan(s.step_size)) {
    Reader::fail(path, concat("sampler '", s.name, "' has no default step size on target '", target_name,
                              "' (MALA failed to converge there); set \"step_size\" explicitly"));
  }
  if (s.kind == SamplerKind::mala && info.family == TargetFamily::covertype)
    warnings.push_back(concat(path, ": MALA is known not to converge on ", target_name,
                              "; running with the explicit step size ", s.step_size));
  return s;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::Reader;
  ExperimentConfig cfg;
  Reader r(j, "$");
  r.only({"target", "sampler", "samplers", "metrics", "seed", "particles", "direction", "output_dir"});
  if (!r.has("target")) Reader::fail("$.target", "missing target");
  if (!r.has("seed")) Reader::fail("$.seed", "missing seed (seeds must be explicit)");
  if (r.has("sampler") && r.has("samplers")) Reader::fail("$", "give either \"sampler\" or \"samplers\", not both");
  r.get("seed", cfg.seed);
  detail::parse_target(j.at("target"), cfg.target, "$.target");
  const TargetInfo info = cfg.info();

  cfg.particles = info.particles;
  r.get("particles", cfg.particles);
  if (cfg.particles < 2) Reader::fail("$.particles", "must be >= 2");
  r.get("direction", cfg.direction);
  if (cfg.direction != "ones" && cfg.direction != "random")
    Reader::fail("$.direction", "must be \"ones\" or \"random\"");
  r.get("output_dir", cfg.output_dir);

  if (r.has("sampler")) {
    cfg.samplers.push_back(detail::parse_sampler(j.at("sampler"), info, cfg.target.name, "$.sampler", cfg.warnings));
  } else if (r.has("samplers")) {
    const auto& arr = j.at("samplers");
    if (!arr.is_array()) Reader::fail("$.samplers", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i)
      cfg.samplers.push_back(detail::parse_sampler(arr[i], info, cfg.target.name,
                                                   detail::concat("$.samplers[", i, "]"), cfg.warnings));
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < cfg.samplers.size(); ++i)
    if (!names.insert(cfg.samplers[i].name).second)
      Reader::fail(detail::concat("$.samplers[", i, "]"), detail::concat("duplicate sampler '", cfg.samplers[i].name, "'"));

  if (r.has("metrics")) {
    const auto& arr = j.at("metrics");
    if (!arr.is_array()) Reader::fail("$.metrics", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = detail::concat("$.metrics[", i, "]");
      if (!arr[i].is_string()) Reader::fail(path, "expected a metric name");
      const auto m = arr[i].get<std::string>();
      static const std::set<std::string> known{"linear", "square", "exp", "cosine", "modes", "accuracy"};
      if (!known.count(m)) Reader::fail(path, detail::concat("unknown metric '", m, "'"));
      if (m == "accuracy" && !is_blr(info)) Reader::fail(path, "accuracy needs a logistic-regression target");
      if (m == "modes" && info.kind != TargetKind::scenario && info.kind != TargetKind::unequal_mixture)
        Reader::fail(path, "modes needs a Gaussian-mixture target");
      if (std::find(cfg.metrics.begin(), cfg.metrics.end(), m) != cfg.metrics.end())
        Reader::fail(path, detail::concat("duplicate metric '", m, "'"));
      cfg.metrics.push_back(m);
    }
  } else if (is_blr(info)) {
    cfg.metrics = {"accuracy"};
  } else {
    cfg.metrics = {"linear", "square", "exp", "cosine"};
    if (info.kind != TargetKind::ar_gaussian) cfg.metrics.push_back("modes");
  }

  if (cfg.samplers.empty() && is_blr(info))
    Reader::fail("$.samplers", "a metrics-only run needs a target with exact samples");
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(detail::concat("$: malformed JSON: ", e.what()));
  }
  return parse_config(j);
}

inline ExperimentConfig parse_config(const char* text) { return parse_config(std::string(text)); }

/// Fully expanded form; parsing it yields the same config.
inline nlohmann::json serialize_config(const ExperimentConfig& cfg) {
  using nlohmann::json;
  const TargetInfo info = cfg.info();
  const auto& t = cfg.target;
  json target = {{"name", t.name}};
  switch (info.kind) {
    case TargetKind::scenario:
    case TargetKind::unequal_mixture:
      target["sigma2"] = t.sigma2;
      target["radius"] = t.radius;
      break;
    case TargetKind::ar_gaussian:
      target["dimension"] = t.dimension;
      target["rho"] = t.rho;
      break;
    case TargetKind::blr_synthetic:
    case TargetKind::blr_dataset:
      if (info.kind == TargetKind::blr_synthetic) {
        target["rows"] = t.rows;
        target["beta_star"] = t.beta_star;
      } else {
        target["dataset"] = t.dataset;
        target["subsample"] = t.subsample;
        target["standardize"] = t.standardize;
      }
      target["train_fraction"] = t.train_fraction;
      target["repeat_index"] = t.repeat_index;
      target["gamma_shape"] = t.gamma_shape;
      target["gamma_rate"] = t.gamma_rate;
      break;
  }
  json samplers = json::array();
  for (const auto& s : cfg.samplers) {
    json o = {{"name", s.name}, {"step_size", s.step_size}};
    if (s.kind == SamplerKind::regs) {
      o.update({{"iterations", s.iterations},
                {"depth", s.depth},
                {"width", s.width},
                {"learning_rate", s.learning_rate},
                {"inner_steps_first", s.inner_steps_first},
                {"inner_steps_warm", s.inner_steps_warm},
                {"reference_inflation", s.reference_inflation},
                {"snapshot_every", s.snapshot_every},
                {"init_mean", s.init_mean},
                {"init_scale", s.init_scale}});
    } else if (s.kind == SamplerKind::svgd) {
      o.update({{"iterations", s.iterations}, {"init_mean", s.init_mean}, {"init_scale", s.init_scale}});
    } else {
      o.update({{"burn_in", s.burn_in}, {"thinning", s.thinning}, {"init", s.init}});
    }
    samplers.push_back(std::move(o));
  }
  return {{"target", target},     {"samplers", samplers},   {"metrics", cfg.metrics},
          {"seed", cfg.seed},     {"particles", cfg.particles}, {"direction", cfg.direction},
          {"output_dir", cfg.output_dir}};
}

}  // namespace regs
