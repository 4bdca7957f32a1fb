// Command-line front end:
//   regs run <config.json>          run an experiment (exit 0 ok, 1 sampler failures, 2 config error)
//   regs validate <config.json>     print the normalized config
//   regs parse-data <path>          summarize (or re-serialize) a sparse dataset
//   regs figure <samples.csv> <out> scatter plot of 2-D samples
// Worker threads for `run` come from REGS_WORKERS (default 1).

#include "regs/harness/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int kOk = 0;
constexpr int kSamplerFailure = 1;
constexpr int kConfigError = 2;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw regs::ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

regs::ExperimentConfig load_config(const std::string& path) {
  auto cfg = regs::parse_config(slurp(path));
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << '\n';
  return cfg;
}

int cmd_run(const std::string& path, const std::string& output_override) {
  regs::ExperimentConfig cfg;
  try {
    cfg = load_config(path);
    if (!output_override.empty()) cfg.output_dir = output_override;
  } catch (const regs::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  regs::ExperimentResult result;
  try {
    result = regs::run_experiment(cfg, regs::workers_from_env(), &std::cerr);
  } catch (const regs::Error& e) {
    // Target construction (e.g. an unreadable dataset) fails before any sampler runs.
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  std::cout << regs::metric_csv_header();
  for (const auto& r : result.metrics) std::cout << regs::metric_csv_row(r);
  return result.exit_status == 0 ? kOk : kSamplerFailure;
}

int cmd_validate(const std::string& path) {
  try {
    std::cout << regs::serialize_config(load_config(path)).dump(2) << '\n';
    return kOk;
  } catch (const regs::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
}

int cmd_parse_data(const std::string& path, const std::string& output) {
  try {
    const auto ds = regs::load_sparse_dataset(path);
    std::size_t positives = 0;
    for (const auto& r : ds.rows) positives += r.label == 1;
    std::cout << "rows " << ds.rows.size() << "\nmax_index " << ds.max_index << "\nlabel_1 " << positives
              << "\nlabel_0 " << ds.rows.size() - positives << '\n';
    if (!output.empty()) regs::detail::write_text_file(output, regs::serialize_sparse_dataset(ds));
    return kOk;
  } catch (const regs::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

int cmd_figure(const std::string& samples_path, const std::string& out, const std::string& modes_target) {
  try {
    const auto pts = regs::read_points_csv(samples_path);
    std::vector<regs::Vector> modes;
    if (!modes_target.empty()) {
      const auto cfg = regs::parse_config(nlohmann::json{{"target", modes_target}, {"seed", 0}, {"metrics", nlohmann::json::array()}});
      modes = regs::build_target(cfg).target.modes;
    }
    regs::emit_scatter_figure(pts, modes, out);
    return kOk;
  } catch (const regs::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relative-entropy gradient sampler and baselines"};
  app.require_subcommand(1);

  std::string config_path, output_override;
  auto* run = app.add_subcommand("run", "Run an experiment described by a JSON config");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("-o,--output", output_override, "Override the config's output_dir");

  auto* validate = app.add_subcommand("validate", "Check a config and print it with defaults filled in");
  validate->add_option("config", config_path, "Experiment config (JSON)")->required();

  std::string data_path, data_out;
  auto* parse_data = app.add_subcommand("parse-data", "Parse a sparse 'label idx:val' dataset");
  parse_data->add_option("path", data_path, "Dataset file")->required();
  parse_data->add_option("-o,--output", data_out, "Write the dataset back out in canonical form");

  std::string samples_path, figure_out, modes_target;
  auto* figure = app.add_subcommand("figure", "Scatter plot of a 2-D samples CSV as SVG");
  figure->add_option("samples", samples_path, "Samples CSV (one point per row)")->required();
  figure->add_option("out", figure_out, "Output SVG path")->required();
  figure->add_option("--modes", modes_target, "Mark the modes of this named target");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*run) return cmd_run(config_path, output_override);
  if (*validate) return cmd_validate(config_path);
  if (*parse_data) return cmd_parse_data(data_path, data_out);
  return cmd_figure(samples_path, figure_out, modes_target);
}
