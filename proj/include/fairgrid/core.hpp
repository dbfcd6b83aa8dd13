#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "common.hpp"

namespace fairgrid {

// Uniform grid of 2L+1 prediction values spanning [-bound, bound].
struct Grid {
  double bound = 0.0;  // half-width of the prediction range
  int half_size = 0;   // L; atom spacing is bound / L
  Eigen::VectorXd atoms;

  int size() const { return 2 * half_size + 1; }
};

// atoms[i] = bound * (i - L) / L, so the endpoints are exactly -bound and bound
// and the grid is exactly symmetric around the middle atom 0.
inline Grid build_grid(double bound, int half_size) {
  if (!(bound > 0.0)) throw invalid_parameter("build_grid: bound must be positive");
  if (half_size < 1) throw invalid_parameter("build_grid: half_size must be at least 1");
  Grid g;
  g.bound = bound;
  g.half_size = half_size;
  g.atoms.resize(2 * half_size + 1);
  for (int i = 0; i <= 2 * half_size; ++i)
    g.atoms[i] = bound * (double(i - half_size) / double(half_size));
  return g;
}

// Probability vector over a finite set. Construction validates nonnegativity
// and that the entries sum to 1 within 1e-9 (absolute).
class SimplexVector {
 public:
  explicit SimplexVector(Eigen::VectorXd v) : v_(std::move(v)) {
    if (v_.size() == 0) throw invalid_parameter("SimplexVector: empty vector");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < v_.size(); ++i) {
      if (!(v_[i] >= 0.0)) throw invalid_parameter("SimplexVector: negative or NaN entry");
      sum += v_[i];
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw invalid_parameter("SimplexVector: entries sum to " + std::to_string(sum));
  }

  const Eigen::VectorXd& values() const { return v_; }
  double operator[](Eigen::Index i) const { return v_[i]; }
  Eigen::Index size() const { return v_.size(); }

 private:
  Eigen::VectorXd v_;
};

// beta^{-1} log sum_j exp(beta w_j), evaluated with the max subtracted so the
// largest exponent is 0. Sits between max(w) and max(w) + log(m)/beta.
inline double lse(const Eigen::VectorXd& w, double beta) {
  if (w.size() == 0) throw invalid_parameter("lse: empty input");
  if (!(beta > 0.0)) throw invalid_parameter("lse: beta must be positive");
  const double top = w.maxCoeff();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) acc += std::exp(beta * (w[i] - top));
  return top + std::log(acc) / beta;
}

// Normalized exponentials of w, max-subtracted. Any inverse-temperature scaling
// is applied by the caller, so one implementation serves both the policy map
// and the gradient weights.
inline SimplexVector softmax(const Eigen::VectorXd& w) {
  if (w.size() == 0) throw invalid_parameter("softmax: empty input");
  const double top = w.maxCoeff();
  Eigen::VectorXd e(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) e[i] = std::exp(w[i] - top);
  e /= e.sum();
  return SimplexVector(std::move(e));
}

// sum_j mu_j log mu_j with 0 log 0 = 0; ranges over [-log m, 0].
inline double neg_entropy(const SimplexVector& mu) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    if (mu[i] > 0.0) acc += mu[i] * std::log(mu[i]);
  return acc;
}

// t_s = 1 - tau_s / p_s. Under exact marginals, sum_s p_s t_s = 0.
inline Eigen::VectorXd t_vector(const SimplexVector& tau, const SimplexVector& p) {
  if (tau.size() != p.size())
    throw invalid_parameter("t_vector: tau and p have different lengths");
  Eigen::VectorXd t(p.size());
  for (Eigen::Index s = 0; s < p.size(); ++s) {
    if (!(p[s] > 0.0)) throw degenerate_group("t_vector: group with zero marginal");
    t[s] = 1.0 - tau[s] / p[s];
  }
  return t;
}

// Squared distance from eta to every grid atom. Callers keep eta inside
// [-bound, bound]; the pipeline clamps before building these rows.
inline Eigen::VectorXd r_vector(double eta, const Grid& grid) {
  Eigen::VectorXd r(grid.size());
  for (int i = 0; i < grid.size(); ++i) {
    const double d = eta - grid.atoms[i];
    r[i] = d * d;
  }
  return r;
}

}  // namespace fairgrid
