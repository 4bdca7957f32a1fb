#pragma once

// Static SVG figures. Output depends only on the inputs: numbers are written
// in shortest round-trip form and nothing time- or locale-dependent is emitted.

#include "regs/metrics.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace regs {

namespace detail {

constexpr double kCanvas = 480.0;
constexpr double kMargin = 40.0;

inline std::string num(double v) { return format_double(v); }

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(concat("cannot write ", path.string()));
  out << text;
}

}  // namespace detail

/// Scatter plot of 2-D samples with optional mode markers. Points are drawn in
/// data coordinates under a single transform, with equal scale on both axes.
inline std::string scatter_svg(const Points& samples, const std::vector<Vector>& modes = {}) {
  using detail::num;
  if (!(samples.rows() == 0 && samples.cols() == 0) && samples.cols() != 2)
    throw DimensionError(detail::concat("emit_scatter_figure: samples have dimension ", samples.cols(),
                                        "; project them onto two coordinates first"));
  for (const auto& m : modes)
    if (m.size() != 2)
      throw DimensionError(detail::concat("emit_scatter_figure: mode has dimension ", m.size(), ", expected 2"));

  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = -lo_x;
  auto extend = [&](double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    lo_x = std::min(lo_x, x), hi_x = std::max(hi_x, x), lo_y = std::min(lo_y, y), hi_y = std::max(hi_y, y);
  };
  for (Eigen::Index i = 0; i < samples.rows(); ++i) extend(samples(i, 0), samples(i, 1));
  for (const auto& m : modes) extend(m[0], m[1]);
  if (!(lo_x <= hi_x)) lo_x = lo_y = -1.0, hi_x = hi_y = 1.0;

  const double cx = 0.5 * (lo_x + hi_x), cy = 0.5 * (lo_y + hi_y);
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9}) * 1.1;
  const double plot = detail::kCanvas - 2.0 * detail::kMargin;
  const double scale = plot / span;
  const double mid = 0.5 * detail::kCanvas;

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" viewBox=\"0 0 480 480\">\n";
  out += "<rect width=\"480\" height=\"480\" fill=\"white\"/>\n";
  out += "<rect class=\"axes\" x=\"40\" y=\"40\" width=\"400\" height=\"400\" fill=\"none\" stroke=\"black\"/>\n";
  const double x_min = cx - 0.5 * span, x_max = cx + 0.5 * span;
  const double y_min = cy - 0.5 * span, y_max = cy + 0.5 * span;
  out += detail::concat("<g font-family=\"sans-serif\" font-size=\"10\">",
                        "<text x=\"40\" y=\"455\">", num(x_min), "</text>",
                        "<text x=\"440\" y=\"455\" text-anchor=\"end\">", num(x_max), "</text>",
                        "<text x=\"35\" y=\"440\" text-anchor=\"end\">", num(y_min), "</text>",
                        "<text x=\"35\" y=\"48\" text-anchor=\"end\">", num(y_max), "</text></g>\n");
  out += detail::concat("<g transform=\"matrix(", num(scale), " 0 0 ", num(-scale), " ", num(mid - scale * cx), " ",
                        num(mid + scale * cy), ")\">\n");
  const std::string r = num(1.5 / scale);
  out += "<g class=\"samples\" fill=\"#1f77b4\" fill-opacity=\"0.5\">\n";
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    if (!std::isfinite(samples(i, 0)) || !std::isfinite(samples(i, 1))) continue;
    out += detail::concat("<circle cx=\"", num(samples(i, 0)), "\" cy=\"", num(samples(i, 1)), "\" r=\"", r,
                          "\"/>\n");
  }
  out += "</g>\n";
  if (!modes.empty()) {
    out += detail::concat("<g class=\"modes\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"", num(1.5 / scale),
                          "\">\n");
    const std::string mr = num(5.0 / scale);
    for (const auto& m : modes)
      out += detail::concat("<circle class=\"mode\" cx=\"", num(m[0]), "\" cy=\"", num(m[1]), "\" r=\"", mr,
                            "\"/>\n");
    out += "</g>\n";
  }
  out += "</g>\n</svg>\n";
  return out;
}

inline void emit_scatter_figure(const Points& samples, const std::vector<Vector>& modes,
                                const std::filesystem::path& path) {
  detail::write_text_file(path, scatter_svg(samples, modes));
}

/// Bar chart of nearest-mode fractions; `expected` (mixture weights) is drawn
/// as a tick over each bar when given.
inline std::string histogram_svg(const ModeHistogram& hist, const std::vector<double>& expected = {}) {
  using detail::num;
  const auto fractions = hist.fractions();
  const std::size_t k = fractions.size();
  detail::require(expected.empty() || expected.size() == k, "histogram_svg: expected weights size mismatch");
  double top = 0.0;
  for (double f : fractions) top = std::max(top, f);
  for (double e : expected) top = std::max(top, e);
  if (top <= 0.0) top = 1.0;
  top *= 1.1;
  const double plot = detail::kCanvas - 2.0 * detail::kMargin;
  const double bar = k ? plot / static_cast<double>(k) : plot;

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" viewBox=\"0 0 480 480\">\n";
  out += "<rect width=\"480\" height=\"480\" fill=\"white\"/>\n";
  out += "<rect class=\"axes\" x=\"40\" y=\"40\" width=\"400\" height=\"400\" fill=\"none\" stroke=\"black\"/>\n";
  out += detail::concat("<g font-family=\"sans-serif\" font-size=\"10\"><text x=\"35\" y=\"440\" "
                        "text-anchor=\"end\">0</text><text x=\"35\" y=\"48\" text-anchor=\"end\">",
                        num(top), "</text></g>\n");
  for (std::size_t j = 0; j < k; ++j) {
    const double h = plot * fractions[j] / top;
    const double x = detail::kMargin + bar * static_cast<double>(j);
    out += detail::concat("<rect class=\"bar\" x=\"", num(x + 0.1 * bar), "\" y=\"", num(detail::kMargin + plot - h),
                          "\" width=\"", num(0.8 * bar), "\" height=\"", num(h), "\" fill=\"#1f77b4\"/>\n");
    if (!expected.empty()) {
      const double y = detail::kMargin + plot - plot * expected[j] / top;
      out += detail::concat("<line class=\"expected\" x1=\"", num(x), "\" x2=\"", num(x + bar), "\" y1=\"", num(y),
                            "\" y2=\"", num(y), "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n");
    }
  }
  out += "</svg>\n";
  return out;
}

inline void emit_histogram_figure(const ModeHistogram& hist, const std::vector<double>& expected,
                                  const std::filesystem::path& path) {
  detail::write_text_file(path, histogram_svg(hist, expected));
}

}  // namespace regs
