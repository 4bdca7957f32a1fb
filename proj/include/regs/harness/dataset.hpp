#pragma once

// Sparse "label index:value ..." text datasets and train/test utilities for
// the logistic-regression experiments.

#include "regs/targets.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace regs {

struct SparseRow {
  int label = 0;  // 0 or 1 after remapping
  std::vector<std::pair<int, double>> entries;

  bool operator==(const SparseRow&) const = default;
};

struct SparseDataset {
  std::vector<SparseRow> rows;
  int max_index = 0;

  bool operator==(const SparseDataset&) const = default;
};

class DatasetError : public Error {
 public:
  DatasetError(const std::string& what, std::size_t line) : Error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline bool parse_int(const std::string& s, long& out) {
  const char* b = s.data();
  if (!s.empty() && s[0] == '+') ++b;
  auto res = std::from_chars(b, s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool parse_real(const std::string& s, double& out) {
  const char* b = s.data();
  if (!s.empty() && s[0] == '+') ++b;
  auto res = std::from_chars(b, s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace detail

/// Parses the sparse format. Labels {-1,+1} or {1,2} are remapped to {0,1};
/// a file containing only label 1 is read under the {-1,+1} convention.
inline SparseDataset parse_sparse_dataset(std::istream& in, const std::string& source = "<input>") {
  SparseDataset ds;
  std::vector<long> raw_labels;
  std::vector<std::size_t> label_lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tok;
    if (!(ss >> tok)) continue;  // blank line
    auto fail = [&](const std::string& what) {
      throw DatasetError(detail::concat(source, ":", line_no, ": ", what), line_no);
    };
    long label = 0;
    if (!detail::parse_int(tok, label)) fail(detail::concat("malformed label '", tok, "'"));
    SparseRow row;
    int prev = 0;
    while (ss >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) fail(detail::concat("malformed token '", tok, "' (expected index:value)"));
      long idx = 0;
      double val = 0.0;
      if (!detail::parse_int(tok.substr(0, colon), idx) || idx < 1)
        fail(detail::concat("malformed index in token '", tok, "'"));
      if (!detail::parse_real(tok.substr(colon + 1), val) || !std::isfinite(val))
        fail(detail::concat("malformed value in token '", tok, "'"));
      if (idx <= prev) fail(detail::concat("indices must be strictly increasing (", idx, " after ", prev, ")"));
      prev = static_cast<int>(idx);
      row.entries.emplace_back(static_cast<int>(idx), val);
    }
    ds.max_index = std::max(ds.max_index, prev);
    raw_labels.push_back(label);
    label_lines.push_back(line_no);
    ds.rows.push_back(std::move(row));
  }

  const std::set<long> seen(raw_labels.begin(), raw_labels.end());
  const bool plus_minus = std::all_of(seen.begin(), seen.end(), [](long l) { return l == -1 || l == 1; });
  const bool one_two = std::all_of(seen.begin(), seen.end(), [](long l) { return l == 1 || l == 2; });
  if (!plus_minus && !one_two) {
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
      const long l = raw_labels[i];
      if (!(l == -1 || l == 1 || l == 2))
        throw DatasetError(detail::concat(source, ":", label_lines[i], ": label ", l,
                                          " is outside the supported sets {-1,+1} and {1,2}"),
                           label_lines[i]);
    }
    throw DatasetError(detail::concat(source, ": labels mix the {-1,+1} and {1,2} conventions"), 0);
  }
  for (std::size_t i = 0; i < raw_labels.size(); ++i)
    ds.rows[i].label = plus_minus ? (raw_labels[i] == 1 ? 1 : 0) : (raw_labels[i] == 2 ? 1 : 0);
  return ds;
}

inline SparseDataset load_sparse_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError(detail::concat("cannot open dataset ", path.string()), 0);
  return parse_sparse_dataset(in, path.string());
}

/// Writes labels as -1/+1 so that parsing reproduces the dataset exactly.
inline std::string serialize_sparse_dataset(const SparseDataset& ds) {
  std::string out;
  for (const auto& row : ds.rows) {
    out += row.label == 1 ? "+1" : "-1";
    for (const auto& [idx, val] : row.entries) {
      out += ' ';
      out += std::to_string(idx);
      out += ':';
      out += format_double(val);
    }
    out += '\n';
  }
  return out;
}

/// Dense design matrix with an intercept column appended after the features.
inline LogisticRegressionData to_logistic_data(const SparseDataset& ds) {
  LogisticRegressionData data;
  const auto n = static_cast<Eigen::Index>(ds.rows.size());
  const Eigen::Index p = ds.max_index + 1;
  data.features = Matrix::Zero(n, p);
  data.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (const auto& [idx, val] : ds.rows[i].entries) data.features(i, idx - 1) = val;
    data.features(i, p - 1) = 1.0;
    data.labels[i] = ds.rows[i].label;
  }
  return data;
}

inline LogisticRegressionData select_rows(const LogisticRegressionData& data,
                                          const std::vector<Eigen::Index>& rows) {
  LogisticRegressionData out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(i) = data.features.row(rows[i]);
    out.labels[i] = data.labels[rows[i]];
  }
  return out;
}

/// Deterministic shuffle keyed by (seed, repeat_index); the first
/// floor(fraction * N) shuffled rows form the training set.
inline std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_indices(
    Eigen::Index n, double fraction, int repeat_index, std::uint64_t seed) {
  if (n < 2) throw Error("split_train_test: need at least two rows");
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("split_train_test: fraction must lie in (0,1)");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(repeat_index)));
  for (std::size_t i = idx.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(idx[i], idx[pick(rng)]);
  }
  const auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  return {std::vector<Eigen::Index>(idx.begin(), idx.begin() + n_train),
          std::vector<Eigen::Index>(idx.begin() + n_train, idx.end())};
}

inline std::pair<LogisticRegressionData, LogisticRegressionData> split_train_test(
    const LogisticRegressionData& data, double fraction, int repeat_index, std::uint64_t seed) {
  const auto [train, test] = split_indices(data.rows(), fraction, repeat_index, seed);
  return {select_rows(data, train), select_rows(data, test)};
}

/// Keeps a seeded random subset of at most `max_rows` rows, in original order.
inline LogisticRegressionData subsample_rows(const LogisticRegressionData& data, Eigen::Index max_rows,
                                             std::uint64_t seed) {
  if (data.rows() <= max_rows) return data;
  auto [keep, rest] = split_indices(data.rows(), static_cast<double>(max_rows) / data.rows(), 0, seed);
  std::sort(keep.begin(), keep.end());
  return select_rows(data, keep);
}

/// Standardizes every non-constant column using training-set statistics.
inline void standardize(LogisticRegressionData& train, LogisticRegressionData& test) {
  for (Eigen::Index j = 0; j < train.features.cols(); ++j) {
    const double mean = train.features.col(j).mean();
    const double sd = std::sqrt((train.features.col(j).array() - mean).square().mean());
    if (sd < 1e-12) continue;
    train.features.col(j) = (train.features.col(j).array() - mean) / sd;
    test.features.col(j) = (test.features.col(j).array() - mean) / sd;
  }
}

/// Logistic data with an intercept (last column) and standard normal
/// features, labels drawn from the model with coefficients `beta`.
inline LogisticRegressionData make_synthetic_logistic(Eigen::Index rows, const Vector& beta, std::uint64_t seed) {
  const auto p = beta.size();
  detail::require(p >= 1, "make_synthetic_logistic: need at least one coefficient");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LogisticRegressionData data;
  data.features = standard_normal_points(rows, p, rng);
  data.features.col(p - 1).setOnes();
  data.labels.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i)
    data.labels[i] = unit(rng) < sigmoid(data.features.row(i).dot(beta)) ? 1.0 : 0.0;
  return data;
}

}  // namespace regs
