#pragma once

#include "regs/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace regs {

struct IterationDiagnostics {
  int iteration = 0;
  double loss = 0.0;
  double mean_sq_velocity = 0.0;
};

struct Snapshot {
  int iteration = 0;
  Points positions;
};

/// One row of a metric table.
struct MetricRow {
  std::string target;
  std::string sampler;
  std::string h_kind;
  double estimate = 0.0;
  double analytic = std::numeric_limits<double>::quiet_NaN();
  double abs_error = std::numeric_limits<double>::quiet_NaN();
};

/// Everything one sampler run produced.
struct RunRecord {
  std::string sampler;
  std::string target;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  std::vector<IterationDiagnostics> diagnostics;
  std::vector<Snapshot> snapshots;
  Points final_samples;
  std::vector<MetricRow> metrics;
  nlohmann::json stats = nlohmann::json::object();  // sampler-specific extras
  nlohmann::json network_checkpoint;                 // null unless the sampler trains a network
};

inline void write_points_csv(const std::filesystem::path& path, const Points& pts) {
  std::ofstream out(path);
  if (!out) throw Error(detail::concat("cannot write ", path.string()));
  for (Eigen::Index j = 0; j < pts.cols(); ++j) out << (j ? "," : "") << 'x' << j;
  out << '\n';
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    for (Eigen::Index j = 0; j < pts.cols(); ++j) out << (j ? "," : "") << format_double(pts(i, j));
    out << '\n';
  }
}

/// Reads a numeric CSV; a first line that does not parse as numbers is a header.
inline Points read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(detail::concat("cannot read ", path.string()));
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (rows.empty() && line_no == 1) continue;
      throw Error(detail::concat(path.string(), ":", line_no, ": non-numeric cell"));
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error(detail::concat(path.string(), ":", line_no, ": ragged row"));
    rows.push_back(std::move(row));
  }
  const auto cols = rows.empty() ? 0 : rows.front().size();
  Points pts(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) pts(i, j) = rows[i][j];
  return pts;
}

inline std::string metric_csv_header() { return "target,sampler,h_kind,estimate,analytic,abs_error\n"; }

inline std::string metric_csv_row(const MetricRow& r) {
  auto num = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  return detail::concat(r.target, ',', r.sampler, ',', r.h_kind, ',', num(r.estimate), ',',
                        num(r.analytic), ',', num(r.abs_error), '\n');
}

/// Directory layout: config.json, diagnostics.csv, samples.csv,
/// snapshot_<iteration>.csv, metrics.csv.
inline void write_run_record(const RunRecord& rec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    nlohmann::json j = {{"sampler", rec.sampler},
                        {"target", rec.target},
                        {"seed", rec.seed},
                        {"config", rec.config},
                        {"stats", rec.stats}};
    std::ofstream out(dir / "config.json");
    out << j.dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "diagnostics.csv");
    out << "iteration,loss,mean_sq_velocity\n";
    for (const auto& d : rec.diagnostics)
      out << d.iteration << ',' << format_double(d.loss) << ',' << format_double(d.mean_sq_velocity)
          << '\n';
  }
  for (const auto& s : rec.snapshots) {
    char name[64];
    std::snprintf(name, sizeof(name), "snapshot_%06d.csv", s.iteration);
    write_points_csv(dir / name, s.positions);
  }
  write_points_csv(dir / "samples.csv", rec.final_samples);
  if (!rec.network_checkpoint.is_null()) {
    std::ofstream out(dir / "network.json");
    out << rec.network_checkpoint.dump() << '\n';
  }
  if (!rec.metrics.empty()) {
    std::ofstream out(dir / "metrics.csv");
    out << metric_csv_header();
    for (const auto& r : rec.metrics) out << metric_csv_row(r);
  }
}

}  // namespace regs
