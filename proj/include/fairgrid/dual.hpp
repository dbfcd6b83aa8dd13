#pragma once

#include <cmath>

#include "core.hpp"

namespace fairgrid {

// Dual variables of the parity-constrained problem: one row per grid atom, one
// column per group. lambda multiplies the upper slack constraints, nu the lower.
struct DualVars {
  Eigen::MatrixXd lambda;
  Eigen::MatrixXd nu;

  static DualVars zero(int grid_size, int groups) {
    return {Eigen::MatrixXd::Zero(grid_size, groups),
            Eigen::MatrixXd::Zero(grid_size, groups)};
  }

  DualVars& operator+=(const DualVars& o) {
    lambda += o.lambda;
    nu += o.nu;
    return *this;
  }

  double squared_norm() const { return lambda.squaredNorm() + nu.squaredNorm(); }
  double norm() const { return std::sqrt(squared_norm()); }
};

// Gradients and gradient mappings share the (lambda, nu) shape.
using GradientPair = DualVars;

// Fixed data of the dual objective: temperature, per-group slack, marginals and
// the prediction grid.
struct ProblemParams {
  double beta = 0.0;
  Eigen::VectorXd eps;
  Eigen::VectorXd p;
  Grid grid;

  int groups() const { return int(p.size()); }

  void validate() const {
    if (!(beta > 0.0)) throw invalid_parameter("ProblemParams: beta must be positive");
    if (eps.size() != p.size())
      throw invalid_parameter("ProblemParams: eps and p have different lengths");
    if (p.size() == 0) throw invalid_parameter("ProblemParams: no groups");
    for (Eigen::Index s = 0; s < eps.size(); ++s)
      if (!(eps[s] >= 0.0)) throw invalid_parameter("ProblemParams: eps must be nonnegative");
    for (Eigen::Index s = 0; s < p.size(); ++s)
      if (!(p[s] > 0.0)) throw degenerate_group("ProblemParams: group with zero marginal");
    if (grid.size() < 3 || grid.atoms.size() != grid.size())
      throw invalid_parameter("ProblemParams: grid not built");
  }
};

// Cached per-row dual features: rows of t (n x K) and of r (n x (2L+1)).
struct FeaturePool {
  Eigen::MatrixXd t;
  Eigen::MatrixXd r;

  Eigen::Index rows() const { return t.rows(); }
};

// Per-atom scores <lambda_l - nu_l, t> - r_l before temperature scaling.
inline Eigen::VectorXd dual_scores(const DualVars& dual, const Eigen::VectorXd& t,
                                   const Eigen::VectorXd& r) {
  return (dual.lambda - dual.nu) * t - r;
}

// pi(l | x) = softmax_l(beta * (<lambda_l - nu_l, t(x)> - r_l(x))).
inline SimplexVector policy_probs(const DualVars& dual, const Eigen::VectorXd& t,
                                  const Eigen::VectorXd& r, double beta) {
  if (!(beta > 0.0)) throw invalid_parameter("policy_probs: beta must be positive");
  return softmax(beta * dual_scores(dual, t, r));
}

// Worst-case second moment of the stochastic dual gradient, sum_s (1 - p_s)/p_s.
inline double sigma_squared(const SimplexVector& p) {
  double acc = 0.0;
  for (Eigen::Index s = 0; s < p.size(); ++s) {
    if (!(p[s] > 0.0)) throw degenerate_group("sigma_squared: group with zero marginal");
    acc += (1.0 - p[s]) / p[s];
  }
  return acc;
}

// Plug-in variance proxy: mean over rows of sum_s (p_s - tau_s)^2 / p_s^2.
inline double sigma_hat_squared(const Eigen::MatrixXd& tau_rows, const Eigen::VectorXd& p) {
  if (tau_rows.rows() < 1) throw invalid_parameter("sigma_hat_squared: empty rows");
  if (tau_rows.cols() != p.size())
    throw invalid_parameter("sigma_hat_squared: tau and p have different widths");
  for (Eigen::Index s = 0; s < p.size(); ++s)
    if (!(p[s] > 0.0)) throw degenerate_group("sigma_hat_squared: group with zero marginal");
  const std::size_t n = std::size_t(tau_rows.rows());
  const double total = detail::pairwise_sum<double>(0, n, [&](std::size_t i) {
    double acc = 0.0;
    for (Eigen::Index s = 0; s < p.size(); ++s) {
      const double d = (p[s] - tau_rows(Eigen::Index(i), s)) / p[s];
      acc += d * d;
    }
    return acc;
  });
  return total / double(n);
}

// Same quantity computed from cached t rows: (p_s - tau_s)/p_s equals t_s.
inline double pool_variance_proxy(const FeaturePool& pool) {
  if (pool.rows() < 1) throw invalid_parameter("pool_variance_proxy: empty pool");
  const std::size_t n = std::size_t(pool.rows());
  const double total = detail::pairwise_sum<double>(
      0, n, [&](std::size_t i) { return pool.t.row(Eigen::Index(i)).squaredNorm(); });
  return total / double(n);
}

// Gradient Lipschitz constant of the dual objective, 2 * beta * sigma2.
inline double smoothness_constant(double beta, double sigma2) {
  if (!(beta > 0.0)) throw invalid_parameter("smoothness_constant: beta must be positive");
  if (!(sigma2 >= 0.0)) throw invalid_parameter("smoothness_constant: sigma2 must be nonnegative");
  return 2.0 * beta * sigma2;
}

// F(Lambda, V) = mean_x lse(scores(x)) + sum_l <lambda_l + nu_l, eps>.
inline double objective_value(const DualVars& dual, const ProblemParams& params,
                              const FeaturePool& pool) {
  params.validate();
  if (pool.rows() < 1) throw invalid_parameter("objective_value: empty pool");
  const std::size_t n = std::size_t(pool.rows());
  const double mean_lse = detail::pairwise_sum<double>(0, n, [&](std::size_t i) {
    const Eigen::Index row = Eigen::Index(i);
    return lse(dual_scores(dual, pool.t.row(row).transpose(), pool.r.row(row).transpose()),
               params.beta);
  }) / double(n);
  const double linear = ((dual.lambda + dual.nu) * params.eps).sum();
  return mean_lse + linear;
}

// One-sample gradient at a single (t, r) row:
//   d/dlambda_{ls} = pi_l t_s + eps_s,   d/dnu_{ls} = -pi_l t_s + eps_s,
// where pi is exactly policy_probs at the same point. The two blocks sum to
// 2 eps_s entrywise.
inline GradientPair stochastic_gradient(const DualVars& dual, const ProblemParams& params,
                                        const Eigen::VectorXd& t, const Eigen::VectorXd& r) {
  const SimplexVector probs = policy_probs(dual, t, r, params.beta);
  const Eigen::MatrixXd outer = probs.values() * t.transpose();
  GradientPair g;
  g.lambda = outer.rowwise() + params.eps.transpose();
  g.nu = (-outer).rowwise() + params.eps.transpose();
  return g;
}

// Pool average of stochastic_gradient over all rows, with the same pairwise
// reduction used everywhere else, so the average is reproducible exactly.
inline GradientPair full_gradient(const DualVars& dual, const ProblemParams& params,
                                  const FeaturePool& pool) {
  params.validate();
  if (pool.rows() < 1) throw invalid_parameter("full_gradient: empty pool");
  const std::size_t n = std::size_t(pool.rows());
  GradientPair sum = detail::pairwise_sum<GradientPair>(0, n, [&](std::size_t i) {
    const Eigen::Index row = Eigen::Index(i);
    return stochastic_gradient(dual, params, pool.t.row(row).transpose(),
                               pool.r.row(row).transpose());
  });
  sum.lambda /= double(n);
  sum.nu /= double(n);
  return sum;
}

// Entrywise projection onto the nonnegative orthant.
inline DualVars project_nonneg(const GradientPair& point) {
  return {point.lambda.cwiseMax(0.0), point.nu.cwiseMax(0.0)};
}

// G_alpha(w) = (w - (w - alpha g)_+) / alpha; the projected residual of one
// gradient step of size alpha.
inline GradientPair gradient_mapping(const DualVars& dual, const GradientPair& grad,
                                     double alpha) {
  if (!(alpha > 0.0)) throw invalid_parameter("gradient_mapping: alpha must be positive");
  GradientPair m;
  m.lambda = (dual.lambda - (dual.lambda - alpha * grad.lambda).cwiseMax(0.0)) / alpha;
  m.nu = (dual.nu - (dual.nu - alpha * grad.nu).cwiseMax(0.0)) / alpha;
  return m;
}

// Frobenius norm of the clipped negative part (-g)_+ across both blocks. At a
// dual point this is dominated by ||G_alpha|| for every alpha > 0.
inline double clipped_gradient_norm(const GradientPair& grad) {
  return std::sqrt((-grad.lambda).cwiseMax(0.0).squaredNorm() +
                   (-grad.nu).cwiseMax(0.0).squaredNorm());
}

// Flattened coordinates for generic vector-space optimizers.
inline Eigen::VectorXd to_vector(const DualVars& d) {
  Eigen::VectorXd v(d.lambda.size() + d.nu.size());
  v << Eigen::Map<const Eigen::VectorXd>(d.lambda.data(), d.lambda.size()),
      Eigen::Map<const Eigen::VectorXd>(d.nu.data(), d.nu.size());
  return v;
}

inline DualVars from_vector(const Eigen::VectorXd& v, int grid_size, int groups) {
  const Eigen::Index block = Eigen::Index(grid_size) * groups;
  if (v.size() != 2 * block)
    throw invalid_parameter("from_vector: size does not match the dual shape");
  DualVars d;
  d.lambda = Eigen::Map<const Eigen::MatrixXd>(v.data(), grid_size, groups);
  d.nu = Eigen::Map<const Eigen::MatrixXd>(v.data() + block, grid_size, groups);
  return d;
}

}  // namespace fairgrid
