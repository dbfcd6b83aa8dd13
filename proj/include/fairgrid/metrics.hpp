#pragma once

#include <algorithm>
#include <numeric>

#include "pipeline.hpp"

namespace fairgrid {

// Mean over rows of sum_l (atom_l - y_i)^2 pi(l | x_i): the exact expected
// squared error of the randomized predictor, no sampling involved.
inline double empirical_risk(const FairPolicy& policy, const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y) {
  if (X.rows() < 1) throw invalid_parameter("empirical_risk: no rows");
  if (y.size() != X.rows()) throw invalid_parameter("empirical_risk: target length mismatch");
  const std::size_t n = std::size_t(X.rows());
  const double total = detail::pairwise_sum<double>(0, n, [&](std::size_t i) {
    const Eigen::Index row = Eigen::Index(i);
    const SimplexVector probs = policy.predict_distribution(X.row(row).transpose());
    double acc = 0.0;
    for (Eigen::Index l = 0; l < probs.size(); ++l) {
      const double d = policy.grid.atoms[l] - y[row];
      acc += d * d * probs[l];
    }
    return acc;
  });
  return total / double(n);
}

// Kolmogorov-Smirnov parity gap per group: sup over thresholds of the gap
// between the group-conditional and overall mean prediction CDFs. All mass
// sits on grid atoms, so evaluating at the atoms is exact.
inline Eigen::VectorXd ks_unfairness(const FairPolicy& policy, const Eigen::MatrixXd& X,
                                     const std::vector<int>& s, int groups) {
  if (X.rows() < 1) throw invalid_parameter("ks_unfairness: no rows");
  if (s.size() != std::size_t(X.rows()))
    throw invalid_parameter("ks_unfairness: label length mismatch");
  const int m = policy.grid.size();
  Eigen::MatrixXd group_sum = Eigen::MatrixXd::Zero(groups, m);
  Eigen::VectorXd total_sum = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(groups);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int g = s[std::size_t(i)];
    if (g < 0 || g >= groups) throw invalid_parameter("ks_unfairness: label outside [0, groups)");
    const SimplexVector probs = policy.predict_distribution(X.row(i).transpose());
    double cum = 0.0;
    for (int l = 0; l < m; ++l) {
      cum += probs[l];
      group_sum(g, l) += cum;
      total_sum[l] += cum;
    }
    counts[g] += 1.0;
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(groups);
  for (int g = 0; g < groups; ++g) {
    if (counts[g] == 0.0) throw degenerate_group("ks_unfairness: group with no rows");
    double sup = 0.0;
    for (int l = 0; l < m; ++l)
      sup = std::max(sup, std::abs(group_sum(g, l) / counts[g] -
                                   total_sum[l] / double(X.rows())));
    out[g] = sup;
  }
  return out;
}

// Same gap for a deterministic real-valued predictor, with thresholds at the
// observed prediction values.
inline Eigen::VectorXd ks_deterministic(const Eigen::VectorXd& values, const std::vector<int>& s,
                                        int groups) {
  const Eigen::Index n = values.size();
  if (n < 1) throw invalid_parameter("ks_deterministic: no values");
  if (s.size() != std::size_t(n)) throw invalid_parameter("ks_deterministic: label length mismatch");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return values[a] < values[b]; });
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(groups);
  for (int g : s) {
    if (g < 0 || g >= groups)
      throw invalid_parameter("ks_deterministic: label outside [0, groups)");
    counts[g] += 1.0;
  }
  for (int g = 0; g < groups; ++g)
    if (counts[g] == 0.0) throw degenerate_group("ks_deterministic: group with no rows");

  Eigen::VectorXd out = Eigen::VectorXd::Zero(groups);
  Eigen::VectorXd below = Eigen::VectorXd::Zero(groups);
  Eigen::Index seen = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    // advance over ties so the CDF is evaluated after a full value class
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) {
      below[s[std::size_t(order[j])]] += 1.0;
      ++seen;
      ++j;
    }
    for (int g = 0; g < groups; ++g)
      out[g] = std::max(out[g],
                        std::abs(below[g] / counts[g] - double(seen) / double(n)));
    i = j;
  }
  return out;
}

// Per-atom, per-group parity gaps U_{ls} = |E[pi(l|X) | S=s] - E[pi(l|X)]|.
inline Eigen::MatrixXd discretized_unfairness(const FairPolicy& policy, const Eigen::MatrixXd& X,
                                              const std::vector<int>& s, int groups) {
  if (X.rows() < 1) throw invalid_parameter("discretized_unfairness: no rows");
  if (s.size() != std::size_t(X.rows()))
    throw invalid_parameter("discretized_unfairness: label length mismatch");
  const int m = policy.grid.size();
  Eigen::MatrixXd group_sum = Eigen::MatrixXd::Zero(m, groups);
  Eigen::VectorXd total_sum = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(groups);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int g = s[std::size_t(i)];
    if (g < 0 || g >= groups)
      throw invalid_parameter("discretized_unfairness: label outside [0, groups)");
    const SimplexVector probs = policy.predict_distribution(X.row(i).transpose());
    group_sum.col(g) += probs.values();
    total_sum += probs.values();
    counts[g] += 1.0;
  }
  Eigen::MatrixXd out(m, groups);
  for (int g = 0; g < groups; ++g) {
    if (counts[g] == 0.0) throw degenerate_group("discretized_unfairness: group with no rows");
    out.col(g) =
        (group_sum.col(g) / counts[g] - total_sum / double(X.rows())).cwiseAbs();
  }
  return out;
}

// Policy probabilities over every pool row, one row per sample.
inline Eigen::MatrixXd policy_matrix(const DualVars& dual, const ProblemParams& params,
                                     const FeaturePool& pool) {
  Eigen::MatrixXd probs(pool.rows(), params.grid.size());
  for (Eigen::Index i = 0; i < pool.rows(); ++i)
    probs.row(i) = policy_probs(dual, pool.t.row(i).transpose(), pool.r.row(i).transpose(),
                                params.beta)
                       .values()
                       .transpose();
  return probs;
}

// Risk of arbitrary per-row atom distributions against the cached costs.
inline double pool_risk(const Eigen::MatrixXd& probs, const FeaturePool& pool) {
  if (probs.rows() != pool.rows() || probs.cols() != pool.r.cols())
    throw invalid_parameter("pool_risk: shape mismatch");
  const std::size_t n = std::size_t(pool.rows());
  const double total = detail::pairwise_sum<double>(0, n, [&](std::size_t i) {
    const Eigen::Index row = Eigen::Index(i);
    return pool.r.row(row).dot(probs.row(row));
  });
  return total / double(n);
}

// Parity gaps |mean_i probs_{il} t_{is}| under the pool measure; no group
// labels needed because the t rows already encode the group reweighting.
inline Eigen::MatrixXd pool_unfairness(const Eigen::MatrixXd& probs, const FeaturePool& pool) {
  if (probs.rows() != pool.rows()) throw invalid_parameter("pool_unfairness: shape mismatch");
  return ((probs.transpose() * pool.t) / double(pool.rows())).cwiseAbs();
}

// Aggregated constraint violation sqrt(sum_{ls} (U_{ls} - eps_s)_+^2).
inline double clipped_unfairness_norm(const Eigen::MatrixXd& unfairness,
                                      const Eigen::VectorXd& eps) {
  if (unfairness.cols() != eps.size())
    throw invalid_parameter("clipped_unfairness_norm: eps length mismatch");
  return std::sqrt(
      (unfairness.rowwise() - eps.transpose()).cwiseMax(0.0).squaredNorm());
}

// Violation of the optimality conditions of the nonnegatively-constrained dual
// at (Lambda, V): the clipped-stationarity, slack-feasibility and
// complementary-slackness norms, summed unweighted. Exact optima give 0.
inline double kkt_residual(const DualVars& dual, const ProblemParams& params,
                           const FeaturePool& pool) {
  const GradientPair g = full_gradient(dual, params, pool);
  const double stationarity = clipped_gradient_norm(g);
  const Eigen::MatrixXd mean_pt = g.lambda.rowwise() - params.eps.transpose();
  const double feasibility = clipped_unfairness_norm(mean_pt.cwiseAbs(), params.eps);
  const double slack = std::sqrt(dual.lambda.cwiseProduct(g.lambda).squaredNorm() +
                                 dual.nu.cwiseProduct(g.nu).squaredNorm());
  return stationarity + feasibility + slack;
}

// Certificate that the entropic policy's risk exceeds a feasible comparator's
// by at most the entropy slack: risk(star) <= risk(feasible) + log(2L+1)/beta
// + tol. The comparator must itself satisfy the parity constraints.
inline bool risk_gain_check(const Eigen::MatrixXd& star_probs,
                            const Eigen::MatrixXd& feasible_probs,
                            const ProblemParams& params, const FeaturePool& pool,
                            double tol = 1e-6) {
  const Eigen::MatrixXd fair_gap = pool_unfairness(feasible_probs, pool);
  for (Eigen::Index l = 0; l < fair_gap.rows(); ++l)
    for (Eigen::Index s = 0; s < fair_gap.cols(); ++s)
      if (fair_gap(l, s) > params.eps[s] + 1e-7)
        throw invalid_parameter("risk_gain_check: comparator violates the parity slack");
  const double slack = std::log(double(params.grid.size())) / params.beta;
  return pool_risk(star_probs, pool) <= pool_risk(feasible_probs, pool) + slack + tol;
}

struct MetricsReport {
  long step = 0;
  long oracle_calls = 0;
  double risk = 0.0;
  Eigen::VectorXd ks;
  double ks_max = 0.0;
  double clipped_unfairness = 0.0;
  double grad_map_norm = 0.0;
};

// Evaluate every recorded snapshot: risk and KS gaps on held-out labeled data,
// constraint violations and gradient mapping under the training pool measure.
inline std::vector<MetricsReport> metric_history(const PostprocessResult& run,
                                                 const Eigen::MatrixXd& X_eval,
                                                 const std::vector<int>& s_eval,
                                                 const Eigen::VectorXd& y_eval, int groups) {
  std::vector<MetricsReport> out;
  const double alpha = run.alpha > 0.0
                           ? run.alpha
                           : (run.smoothness > 0.0 ? 1.0 / (2.0 * run.smoothness) : 1.0);
  FairPolicy probe = run.policy;
  for (const HistorySnapshot& snap : run.history) {
    probe.dual = snap.dual;
    MetricsReport row;
    row.step = snap.step;
    row.oracle_calls = snap.oracle_calls;
    row.risk = empirical_risk(probe, X_eval, y_eval);
    row.ks = ks_unfairness(probe, X_eval, s_eval, groups);
    row.ks_max = row.ks.maxCoeff();
    const GradientPair g = full_gradient(snap.dual, run.params, run.pool);
    const Eigen::MatrixXd gaps =
        (g.lambda.rowwise() - run.params.eps.transpose()).cwiseAbs();
    row.clipped_unfairness = clipped_unfairness_norm(gaps, run.params.eps);
    row.grad_map_norm = gradient_mapping(snap.dual, g, alpha).norm();
    out.push_back(std::move(row));
  }
  return out;
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsReport>& rows) {
  std::string content = "step,oracle_calls,risk,ks_max,clipped_unfairness_norm,grad_map_norm\n";
  char buf[160];
  for (const MetricsReport& r : rows) {
    std::snprintf(buf, sizeof(buf), "%ld,%ld,%.17g,%.17g,%.17g,%.17g\n", r.step,
                  r.oracle_calls, r.risk, r.ks_max, r.clipped_unfairness, r.grad_map_norm);
    content += buf;
  }
  detail::atomic_write(path, content);
}

}  // namespace fairgrid
