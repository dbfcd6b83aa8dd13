// Shared test fixtures: random problem instances, a finite-difference
// gradient, an exact LP reference solver and a scoped temp directory.
#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fairgrid/fairgrid.hpp"

namespace testsupport {

struct TestInstance {
  fairgrid::ProblemParams params;
  fairgrid::FeaturePool pool;
};

// Generic instance: random marginals, random bounded predictions, group
// posteriors drawn from a Dirichlet-like normalization of uniforms.
inline TestInstance random_instance(std::mt19937_64& rng, int n, int groups, int half_size,
                                    double beta, double eps_scale) {
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  Eigen::VectorXd raw(groups);
  for (int s = 0; s < groups; ++s) raw[s] = unif(rng);
  raw /= raw.sum();

  TestInstance inst;
  inst.params.beta = beta;
  inst.params.p = raw;
  inst.params.grid = fairgrid::build_grid(1.0, half_size);
  inst.params.eps = Eigen::VectorXd::Constant(groups, eps_scale);

  const fairgrid::SimplexVector marginals(raw);
  const Eigen::Index m = inst.params.grid.size();
  inst.pool.t.resize(n, groups);
  inst.pool.r.resize(n, m);
  std::uniform_real_distribution<double> pred(-1.0, 1.0);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd tau(groups);
    for (int s = 0; s < groups; ++s) tau[s] = unif(rng);
    tau /= tau.sum();
    inst.pool.t.row(i) =
        fairgrid::t_vector(fairgrid::SimplexVector(tau), marginals).transpose();
    inst.pool.r.row(i) =
        fairgrid::r_vector(pred(rng), inst.params.grid).transpose();
  }
  return inst;
}

// Pool whose group posteriors are exact indicators and whose marginals are the
// empirical frequencies, so the pool mean of |t|^2 equals the variance proxy.
inline TestInstance indicator_instance(std::mt19937_64& rng, const std::vector<int>& counts,
                                       int half_size, double beta, double eps) {
  const int groups = int(counts.size());
  int n = 0;
  for (int c : counts) n += c;
  Eigen::VectorXd p(groups);
  for (int s = 0; s < groups; ++s) p[s] = double(counts[s]) / double(n);

  TestInstance inst;
  inst.params.beta = beta;
  inst.params.p = p;
  inst.params.grid = fairgrid::build_grid(1.0, half_size);
  inst.params.eps = Eigen::VectorXd::Constant(groups, eps);

  const fairgrid::SimplexVector marginals(p);
  const Eigen::Index m = inst.params.grid.size();
  inst.pool.t.resize(n, groups);
  inst.pool.r.resize(n, m);
  std::uniform_real_distribution<double> pred(-1.0, 1.0);
  int row = 0;
  for (int s = 0; s < groups; ++s) {
    for (int c = 0; c < counts[s]; ++c, ++row) {
      Eigen::VectorXd tau = Eigen::VectorXd::Zero(groups);
      tau[s] = 1.0;
      inst.pool.t.row(row) =
          fairgrid::t_vector(fairgrid::SimplexVector(tau), marginals).transpose();
      inst.pool.r.row(row) =
          fairgrid::r_vector(pred(rng), inst.params.grid).transpose();
    }
  }
  return inst;
}

inline fairgrid::DualVars random_dual(std::mt19937_64& rng, Eigen::Index m, Eigen::Index groups,
                                      double scale) {
  std::uniform_real_distribution<double> unif(0.0, scale);
  fairgrid::DualVars dual = fairgrid::DualVars::zero(m, groups);
  for (Eigen::Index l = 0; l < m; ++l)
    for (Eigen::Index s = 0; s < groups; ++s) {
      dual.lambda(l, s) = unif(rng);
      dual.nu(l, s) = unif(rng);
    }
  return dual;
}

// Central-difference gradient of the pool objective in flattened coordinates.
inline Eigen::VectorXd fd_gradient(const fairgrid::DualVars& dual,
                                   const fairgrid::ProblemParams& params,
                                   const fairgrid::FeaturePool& pool, double h) {
  const Eigen::VectorXd w = fairgrid::to_vector(dual);
  Eigen::VectorXd grad(w.size());
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    Eigen::VectorXd hi = w, lo = w;
    hi[j] += h;
    lo[j] -= h;
    const double f_hi = fairgrid::objective_value(
        fairgrid::from_vector(hi, params.grid.size(), params.p.size()), params, pool);
    const double f_lo = fairgrid::objective_value(
        fairgrid::from_vector(lo, params.grid.size(), params.p.size()), params, pool);
    grad[j] = (f_hi - f_lo) / (2.0 * h);
  }
  return grad;
}

struct LpResult {
  bool ok = false;
  double value = 0.0;
  Eigen::VectorXd x;
};

// Two-phase dense simplex with Bland's rule for
//   min c'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0.
// Exact reference for tiny instances only; no attention to sparsity.
inline LpResult solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& A_eq,
                         const Eigen::VectorXd& b_eq, const Eigen::MatrixXd& A_ub,
                         const Eigen::VectorXd& b_ub) {
  const Eigen::Index n = c.size();
  const Eigen::Index me = A_eq.rows();
  const Eigen::Index mu = A_ub.rows();
  const Eigen::Index m = me + mu;
  const Eigen::Index total = n + mu + m;  // structural + slack + artificial

  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, total + 1);
  T.block(0, 0, me, n) = A_eq;
  T.block(me, 0, mu, n) = A_ub;
  T.block(me, n, mu, mu) = Eigen::MatrixXd::Identity(mu, mu);
  T.block(0, total, me, 1) = b_eq;
  T.block(me, total, mu, 1) = b_ub;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (T(i, total) < 0.0) T.row(i) = -T.row(i);
    T(i, n + mu + i) = 1.0;
  }
  std::vector<Eigen::Index> basis(m);
  for (Eigen::Index i = 0; i < m; ++i) basis[i] = n + mu + i;

  const double tol = 1e-10;
  auto pivot = [&](Eigen::Index row, Eigen::Index col) {
    T.row(row) /= T(row, col);
    for (Eigen::Index i = 0; i < m; ++i)
      if (i != row && std::abs(T(i, col)) > 0.0) T.row(i) -= T(i, col) * T.row(row);
    basis[row] = col;
  };
  // Bland: entering = lowest eligible index, leaving = lowest-index tie winner.
  auto iterate = [&](const Eigen::VectorXd& cost, Eigen::Index ncols) {
    Eigen::VectorXd reduced(ncols);
    while (true) {
      Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
      for (Eigen::Index i = 0; i < m; ++i) y[i] = cost[basis[i]];
      for (Eigen::Index j = 0; j < ncols; ++j) reduced[j] = cost[j] - y.dot(T.col(j));
      Eigen::Index enter = -1;
      for (Eigen::Index j = 0; j < ncols; ++j)
        if (reduced[j] < -tol) {
          enter = j;
          break;
        }
      if (enter < 0) return true;
      Eigen::Index leave = -1;
      double best = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (T(i, enter) > tol) {
          const double ratio = T(i, total) / T(i, enter);
          if (leave < 0 || ratio < best - tol ||
              (ratio < best + tol && basis[i] < basis[leave])) {
            leave = i;
            best = ratio;
          }
        }
      }
      if (leave < 0) return false;  // unbounded
      pivot(leave, enter);
    }
  };

  Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(total);
  phase1.tail(m).setOnes();
  // Price out the artificial basis before phase 1.
  if (!iterate(phase1, total)) return {};
  double infeas = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    if (basis[i] >= n + mu) infeas += T(i, total);
  if (infeas > 1e-7) return {};
  // Drive leftover artificials out of the basis where possible.
  for (Eigen::Index i = 0; i < m; ++i) {
    if (basis[i] < n + mu) continue;
    for (Eigen::Index j = 0; j < n + mu; ++j)
      if (std::abs(T(i, j)) > tol) {
        pivot(i, j);
        break;
      }
  }

  Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(total);
  phase2.head(n) = c;
  for (Eigen::Index i = 0; i < m; ++i)
    if (basis[i] >= n + mu) phase2[basis[i]] = 1e18;  // degenerate leftover artificial
  if (!iterate(phase2, n + mu)) return {};

  LpResult out;
  out.ok = true;
  out.x = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i)
    if (basis[i] < n) out.x[basis[i]] = T(i, total);
  out.value = c.dot(out.x);
  return out;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    path = base / ("fairgrid_test_" + std::to_string(rd()) + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testsupport
