#pragma once

#include <charconv>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pipeline.hpp"

namespace fairgrid {

struct CsvSchema {
  std::vector<std::string> features;
  std::string sensitive;  // empty means the column is absent
  std::string target;     // empty means the column is absent
};

struct Dataset {
  Eigen::MatrixXd X;
  std::vector<int> s;  // 0-based group ids; empty when no sensitive column
  Eigen::VectorXd y;   // empty when no target column
  std::vector<std::string> feature_names;
  std::vector<std::string> group_names;  // sorted distinct sensitive values
  std::string sensitive_name;
  std::string target_name;

  bool has_sensitive() const { return !s.empty(); }
  bool has_target() const { return y.size() > 0; }
  int groups() const { return int(group_names.size()); }
  Eigen::Index rows() const { return X.rows(); }
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r')
    cells.back().pop_back();
  return cells;
}

// row and col are 1-based file coordinates (the header is row 1).
inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw parse_error("malformed numeric cell '" + cell + "'", row, col);
  if (!std::isfinite(value))
    throw parse_error("non-finite cell '" + cell + "'", row, col);
  return value;
}

}  // namespace detail

// Comma-separated file with a header row; feature and target cells must be
// finite numbers, the sensitive column may hold arbitrary tokens which are
// mapped to 0-based ids in sorted order of their distinct values.
inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  if (schema.features.empty()) throw invalid_parameter("load_csv: no feature columns named");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw parse_error("empty file", 1, 1);
  const std::vector<std::string> header = detail::split_line(line);
  auto column_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw invalid_parameter("load_csv: column '" + name + "' not found in " + path);
  };

  std::vector<std::size_t> feature_cols;
  for (const std::string& name : schema.features) feature_cols.push_back(column_of(name));
  const bool with_s = !schema.sensitive.empty();
  const bool with_y = !schema.target.empty();
  const std::size_t s_col = with_s ? column_of(schema.sensitive) : 0;
  const std::size_t y_col = with_y ? column_of(schema.target) : 0;

  std::vector<std::vector<double>> feature_rows;
  std::vector<std::string> s_tokens;
  std::vector<double> targets;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> cells = detail::split_line(line);
    if (cells.size() != header.size())
      throw parse_error("expected " + std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()),
                        row, cells.size() + 1);
    std::vector<double> features(feature_cols.size());
    for (std::size_t j = 0; j < feature_cols.size(); ++j)
      features[j] = detail::parse_cell(cells[feature_cols[j]], row, feature_cols[j] + 1);
    feature_rows.push_back(std::move(features));
    if (with_s) s_tokens.push_back(cells[s_col]);
    if (with_y) targets.push_back(detail::parse_cell(cells[y_col], row, y_col + 1));
  }
  if (feature_rows.empty()) throw invalid_parameter("load_csv: no data rows in " + path);

  Dataset data;
  data.feature_names = schema.features;
  data.sensitive_name = schema.sensitive;
  data.target_name = schema.target;
  data.X.resize(Eigen::Index(feature_rows.size()), Eigen::Index(schema.features.size()));
  for (std::size_t i = 0; i < feature_rows.size(); ++i)
    for (std::size_t j = 0; j < feature_rows[i].size(); ++j)
      data.X(Eigen::Index(i), Eigen::Index(j)) = feature_rows[i][j];
  if (with_y) data.y = detail::from_std(targets);
  if (with_s) {
    std::map<std::string, int> ids;
    for (const std::string& token : s_tokens) ids.emplace(token, 0);
    int next = 0;
    for (auto& [token, id] : ids) id = next++;
    data.group_names.resize(std::size_t(next));
    for (const auto& [token, id] : ids) data.group_names[std::size_t(id)] = token;
    data.s.reserve(s_tokens.size());
    for (const std::string& token : s_tokens) data.s.push_back(ids.at(token));
  }
  return data;
}

// 17 significant digits, so reading the file back reproduces every double.
inline void write_csv(const std::string& path, const Dataset& data) {
  std::string content;
  for (std::size_t j = 0; j < data.feature_names.size(); ++j) {
    if (j) content += ',';
    content += data.feature_names[j];
  }
  if (data.has_sensitive()) content += ',' + data.sensitive_name;
  if (data.has_target()) content += ',' + data.target_name;
  content += '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) {
      if (j) content += ',';
      std::snprintf(buf, sizeof(buf), "%.17g", data.X(i, j));
      content += buf;
    }
    if (data.has_sensitive()) content += ',' + data.group_names[std::size_t(data.s[std::size_t(i)])];
    if (data.has_target()) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.y[i]);
      content += ',';
      content += buf;
    }
    content += '\n';
  }
  detail::atomic_write(path, content);
}

namespace detail {

inline Dataset take_rows(const Dataset& data, const std::vector<Eigen::Index>& idx,
                         bool keep_labels) {
  Dataset out;
  out.feature_names = data.feature_names;
  out.X.resize(Eigen::Index(idx.size()), data.X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.X.row(Eigen::Index(i)) = data.X.row(idx[i]);
  if (keep_labels) {
    out.sensitive_name = data.sensitive_name;
    out.target_name = data.target_name;
    out.group_names = data.group_names;
    if (data.has_sensitive()) {
      out.s.reserve(idx.size());
      for (Eigen::Index r : idx) out.s.push_back(data.s[std::size_t(r)]);
    }
    if (data.has_target()) {
      out.y.resize(Eigen::Index(idx.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) out.y[Eigen::Index(i)] = data.y[idx[i]];
    }
  }
  return out;
}

}  // namespace detail

struct SplitResult {
  Dataset train;
  Dataset unlabeled;  // targets and sensitive labels dropped by construction
  Dataset test;
};

// Shuffled split with floor-sized first two parts and the remainder as test.
// When sensitive labels are present, reshuffles until every group appears in
// every part (up to 100 attempts), so downstream frequency estimates and
// group metrics are well defined.
inline SplitResult split(const Dataset& data, double f_train, double f_pool,
                         std::uint64_t seed) {
  const Eigen::Index n = data.rows();
  if (!(f_train >= 0.0) || !(f_pool >= 0.0) || f_train + f_pool > 1.0)
    throw invalid_parameter("split: fractions must be nonnegative and sum to at most 1");
  const Eigen::Index n_train = Eigen::Index(std::floor(f_train * double(n)));
  const Eigen::Index n_pool = Eigen::Index(std::floor(f_pool * double(n)));
  const Eigen::Index n_test = n - n_train - n_pool;
  if (n_train < 1 || n_pool < 1 || n_test < 1)
    throw invalid_parameter("split: every part must be nonempty");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::shuffle(order.begin(), order.end(), rng);
    const std::vector<Eigen::Index> train_idx(order.begin(), order.begin() + n_train);
    const std::vector<Eigen::Index> pool_idx(order.begin() + n_train,
                                             order.begin() + n_train + n_pool);
    const std::vector<Eigen::Index> test_idx(order.begin() + n_train + n_pool, order.end());
    if (data.has_sensitive()) {
      auto covered = [&](const std::vector<Eigen::Index>& idx) {
        std::vector<bool> seen(std::size_t(data.groups()), false);
        for (Eigen::Index r : idx) seen[std::size_t(data.s[std::size_t(r)])] = true;
        for (bool b : seen)
          if (!b) return false;
        return true;
      };
      if (!covered(train_idx) || !covered(pool_idx) || !covered(test_idx)) continue;
    }
    SplitResult out;
    out.train = detail::take_rows(data, train_idx, true);
    out.unlabeled = detail::take_rows(data, pool_idx, false);
    out.test = detail::take_rows(data, test_idx, true);
    return out;
  }
  throw degenerate_group("split: some group missing from a part after 100 reshuffles");
}

// Three independent standard normal features; the group is which of the four
// cells of the first feature split at (-0.7, 0, 0.7) the row falls into; the
// target is 4(x1 + x2 + x3) + x1 plus unit noise.
inline Dataset generate_synthetic(Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw invalid_parameter("generate_synthetic: n must be positive");
  Dataset data;
  data.feature_names = {"x1", "x2", "x3"};
  data.sensitive_name = "s";
  data.target_name = "y";
  data.group_names = {"1", "2", "3", "4"};
  data.X.resize(n, 3);
  data.y.resize(n);
  data.s.reserve(std::size_t(n));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x1 = normal(rng);
    const double x2 = normal(rng);
    const double x3 = normal(rng);
    const double noise = normal(rng);
    data.X(i, 0) = x1;
    data.X(i, 1) = x2;
    data.X(i, 2) = x3;
    data.y[i] = 4.0 * (x1 + x2 + x3) + x1 + noise;
    int group = 3;
    if (x1 <= -0.7)
      group = 0;
    else if (x1 <= 0.0)
      group = 1;
    else if (x1 <= 0.7)
      group = 2;
    data.s.push_back(group);
  }
  return data;
}

// Everything one full run needs; the command line populates this.
struct RunConfig {
  std::string data_path;
  CsvSchema schema;
  double f_train = 0.4;
  double f_pool = 0.4;
  std::uint64_t split_seed = 0;
  PostprocessConfig post;
};

}  // namespace fairgrid
