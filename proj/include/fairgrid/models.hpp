#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace fairgrid {

// Affine regressor with predictions clamped to [-bound, bound].
struct LinearModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double bound = 1.0;

  double predict(const Eigen::VectorXd& x) const {
    return std::clamp(weights.dot(x) + intercept, -bound, bound);
  }
};

// Ridge-regularized least squares via the normal equations; the intercept is
// never penalized. Without regularization a rank-deficient design is an error.
// The clamp bound defaults to max(1, max |target|) so normalized data gets
// bound 1 and raw data covers its own range.
inline LinearModel fit_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     double ridge = 0.0,
                                     std::optional<double> bound = std::nullopt) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n < 1 || d < 1) throw invalid_parameter("fit_least_squares: empty design");
  if (y.size() != n) throw invalid_parameter("fit_least_squares: target length mismatch");
  if (!(ridge >= 0.0)) throw invalid_parameter("fit_least_squares: negative ridge");
  if (n <= d && ridge == 0.0)
    throw invalid_parameter("fit_least_squares: need n > d or ridge > 0");

  Eigen::MatrixXd G(n, d + 1);
  G.leftCols(d) = X;
  G.col(d).setOnes();
  Eigen::MatrixXd A = G.transpose() * G;
  for (Eigen::Index j = 0; j < d; ++j) A(j, j) += ridge;
  const Eigen::VectorXd b = G.transpose() * y;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (ridge == 0.0 && !lu.isInvertible())
    throw rank_deficient("fit_least_squares: singular design matrix, add ridge");
  const Eigen::VectorXd w = lu.solve(b);

  LinearModel m;
  m.weights = w.head(d);
  m.intercept = w[d];
  m.bound = bound ? *bound : std::max(1.0, y.size() > 0 ? y.cwiseAbs().maxCoeff() : 1.0);
  if (!(m.bound > 0.0)) throw invalid_parameter("fit_least_squares: bound must be positive");
  return m;
}

// Softmax-linear group model; row s of the weight matrix scores group s.
struct MulticlassLogistic {
  Eigen::MatrixXd weights;
  Eigen::VectorXd intercepts;

  int groups() const { return int(weights.rows()); }

  SimplexVector predict_proba(const Eigen::VectorXd& x) const {
    return softmax(weights * x + intercepts);
  }
};

namespace detail {

inline double multinomial_loss(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                               const Eigen::MatrixXd& X, const std::vector<int>& s,
                               double l2) {
  const Eigen::Index n = X.rows();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd z = W * X.row(i).transpose() + b;
    const double top = z.maxCoeff();
    double acc = 0.0;
    for (Eigen::Index k = 0; k < z.size(); ++k) acc += std::exp(z[k] - top);
    loss += top + std::log(acc) - z[s[std::size_t(i)]];
  }
  return loss / double(n) + 0.5 * l2 * W.squaredNorm();
}

}  // namespace detail

// Full-batch gradient descent on the multinomial cross entropy with an Armijo
// backtracking line search, so the training loss is monotone nonincreasing.
// Labels are 0-based group indices below `groups`.
inline MulticlassLogistic fit_logistic(const Eigen::MatrixXd& X, const std::vector<int>& s,
                                       int groups, double l2 = 0.0, int max_iters = 500,
                                       double step0 = 1.0) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n < 1) throw invalid_parameter("fit_logistic: empty design");
  if (s.size() != std::size_t(n)) throw invalid_parameter("fit_logistic: label length mismatch");
  if (groups < 1) throw invalid_parameter("fit_logistic: need at least one group");
  for (int label : s)
    if (label < 0 || label >= groups)
      throw invalid_parameter("fit_logistic: label outside [0, groups)");
  if (!(l2 >= 0.0)) throw invalid_parameter("fit_logistic: negative l2");

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(groups, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(groups);
  double loss = detail::multinomial_loss(W, b, X, s, l2);
  for (int iter = 0; iter < max_iters; ++iter) {
    Eigen::MatrixXd gW = Eigen::MatrixXd::Zero(groups, d);
    Eigen::VectorXd gb = Eigen::VectorXd::Zero(groups);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd probs = softmax(W * X.row(i).transpose() + b).values();
      probs[s[std::size_t(i)]] -= 1.0;
      gW += probs * X.row(i);
      gb += probs;
    }
    gW /= double(n);
    gb /= double(n);
    gW += l2 * W;
    const double gnorm2 = gW.squaredNorm() + gb.squaredNorm();
    if (gnorm2 < 1e-16) break;

    double step = step0;
    while (step > 1e-12) {
      const Eigen::MatrixXd Wn = W - step * gW;
      const Eigen::VectorXd bn = b - step * gb;
      const double next = detail::multinomial_loss(Wn, bn, X, s, l2);
      if (next <= loss - 1e-4 * step * gnorm2) {
        W = Wn;
        b = bn;
        loss = next;
        break;
      }
      step *= 0.5;
    }
  }

  MulticlassLogistic m;
  m.weights = std::move(W);
  m.intercepts = std::move(b);
  return m;
}

// Truncation onto the grid: floor toward zero of L h / bound, mapped back to
// an atom with the same arithmetic build_grid uses, so outputs match atoms
// bitwise. h = bound lands exactly on the top atom.
inline double discretize_tl(double h, const Grid& grid) {
  if (!(std::abs(h) <= grid.bound))
    throw value_out_of_range("discretize_tl: |h| exceeds the grid bound");
  const int k = int(std::trunc(double(grid.half_size) * (h / grid.bound)));
  return grid.bound * (double(k) / double(grid.half_size));
}

namespace detail {

// Write-then-rename so readers never observe a partial file.
inline void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("atomic_write: cannot open " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("atomic_write: write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

inline std::vector<std::vector<double>> to_rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> rows(std::size_t(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows[std::size_t(i)].resize(std::size_t(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) rows[std::size_t(i)][std::size_t(j)] = m(i, j);
  }
  return rows;
}

inline Eigen::MatrixXd from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size())
      throw std::runtime_error("from_rows: ragged matrix");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
  }
  return m;
}

}  // namespace detail

inline void save_linear_model(const std::string& path, const LinearModel& m) {
  nlohmann::json j;
  j["type"] = "linear";
  j["weights"] = detail::to_std(m.weights);
  j["intercept"] = m.intercept;
  j["bound"] = m.bound;
  detail::atomic_write(path, j.dump(2) + "\n");
}

inline LinearModel load_linear_model(const std::string& path) {
  const nlohmann::json j = detail::read_json_file(path);
  if (j.value("type", "") != "linear")
    throw std::runtime_error("load_linear_model: not a linear model file: " + path);
  LinearModel m;
  m.weights = detail::from_std(j.at("weights").get<std::vector<double>>());
  m.intercept = j.at("intercept").get<double>();
  m.bound = j.at("bound").get<double>();
  return m;
}

inline void save_logistic_model(const std::string& path, const MulticlassLogistic& m) {
  nlohmann::json j;
  j["type"] = "logistic";
  j["weights"] = detail::to_rows(m.weights);
  j["intercepts"] = detail::to_std(m.intercepts);
  detail::atomic_write(path, j.dump(2) + "\n");
}

inline MulticlassLogistic load_logistic_model(const std::string& path) {
  const nlohmann::json j = detail::read_json_file(path);
  if (j.value("type", "") != "logistic")
    throw std::runtime_error("load_logistic_model: not a logistic model file: " + path);
  MulticlassLogistic m;
  m.weights = detail::from_rows(j.at("weights").get<std::vector<std::vector<double>>>());
  m.intercepts = detail::from_std(j.at("intercepts").get<std::vector<double>>());
  if (m.intercepts.size() != m.weights.rows())
    throw std::runtime_error("load_logistic_model: inconsistent shapes in " + path);
  return m;
}

}  // namespace fairgrid
