#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dual.hpp"
#include "models.hpp"
#include "optimize.hpp"

namespace fairgrid {

// Plug-in estimates feeding the dual problem. When plug_in is true the
// variance proxy is estimated from the pool's tau rows; when false the
// functions are treated as exact and the analytic bound from the marginals is
// used instead.
struct Predictors {
  std::function<double(const Eigen::VectorXd&)> eta;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> tau;
  bool plug_in = true;
};

// Budget-driven defaults: beta = T/(8 log2 T), L = floor(sqrt(T)),
// mu = 2 sigma^2 / beta, M = 2 beta sigma^2, so M/mu = beta^2 whatever the
// variance. A budget small enough that beta < 1 inverts mu and M; that is
// reported as a warning and the ladder quantities are left unset.
struct DerivedParams {
  double beta = 0.0;
  int half_size = 1;
  double mu = 0.0;
  double smoothness = 0.0;
  double alpha = 0.0;
  int ladder = 0;
  std::vector<std::string> warnings;
};

inline DerivedParams default_params(long budget, double sigma2) {
  if (budget < 2) throw invalid_parameter("default_params: budget must be at least 2");
  if (!(sigma2 >= 0.0)) throw invalid_parameter("default_params: negative sigma2");
  DerivedParams d;
  d.beta = double(budget) / (8.0 * std::log2(double(budget)));
  d.half_size = std::max(1, int(std::floor(std::sqrt(double(budget)))));
  if (d.beta < 1.0)
    d.warnings.push_back("default_params: budget gives beta < 1; defaults leave mu > M");
  d.mu = sigma2 > 0.0 ? 2.0 * sigma2 / d.beta : 0.0;
  d.smoothness = smoothness_constant(d.beta, sigma2);
  if (sigma2 > 0.0 && d.beta >= 1.0) {
    d.ladder = int(std::floor(std::log2(d.smoothness / d.mu)));
    d.alpha = grad_map_alpha_default(d.mu, d.smoothness);
  }
  return d;
}

// Empirical group frequencies over 0-based labels; every group must appear.
inline SimplexVector estimate_marginals(const std::vector<int>& labels, int groups) {
  if (labels.empty()) throw invalid_parameter("estimate_marginals: no labels");
  if (groups < 1) throw invalid_parameter("estimate_marginals: need at least one group");
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(groups);
  for (int s : labels) {
    if (s < 0 || s >= groups)
      throw invalid_parameter("estimate_marginals: label outside [0, groups)");
    counts[s] += 1.0;
  }
  for (int s = 0; s < groups; ++s)
    if (counts[s] == 0.0)
      throw degenerate_group("estimate_marginals: group " + std::to_string(s) +
                             " has no observations");
  return SimplexVector(counts / double(labels.size()));
}

// Evaluate the predictors over the unlabeled rows, clamping eta to the grid
// range. tau outputs are validated on the simplex row by row.
inline FeaturePool build_pool(const Eigen::MatrixXd& X, const Predictors& pred,
                              const SimplexVector& p, const Grid& grid) {
  if (X.rows() < 1) throw invalid_parameter("build_pool: no rows");
  if (!pred.eta || !pred.tau) throw invalid_parameter("build_pool: predictors not set");
  FeaturePool pool;
  pool.t.resize(X.rows(), p.size());
  pool.r.resize(X.rows(), grid.size());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::VectorXd x = X.row(i).transpose();
    const SimplexVector tau(pred.tau(x));
    pool.t.row(i) = t_vector(tau, p).transpose();
    const double eta = std::clamp(pred.eta(x), -grid.bound, grid.bound);
    pool.r.row(i) = r_vector(eta, grid).transpose();
  }
  return pool;
}

enum class Method { sgd3_acsa, sgd3_acsa2, acsa, acsa2, sgd };

struct PostprocessConfig {
  long budget = 0;         // T, drives the theory defaults
  long iterations = 0;     // oracle calls; 0 means equal to budget
  double bound = 0.0;      // grid half-width B, required
  int half_size = 0;       // L; 0 means floor(sqrt(budget))
  double beta = 0.0;       // 0 means budget/(8 log2 budget)
  Eigen::VectorXd eps;     // per-group slack; a single entry broadcasts
  Method method = Method::sgd3_acsa2;
  std::uint64_t seed = 0;
  long record_every = 0;   // 0 means max(1, iterations/50)
  double mu = 0.0;         // 0 means 2 sigma^2 / beta
  double smoothness = 0.0; // 0 means 2 beta sigma^2
  double alpha = 0.0;      // 0 means the ladder default
};

// Randomized post-processed regressor: a group-blind distribution over grid
// atoms for every feature vector.
struct FairPolicy {
  Grid grid;
  DualVars dual;
  double beta = 0.0;
  Eigen::VectorXd eps;
  Eigen::VectorXd marginals;
  Predictors predictors;
  std::string eta_ref;
  std::string tau_ref;

  SimplexVector predict_distribution(const Eigen::VectorXd& x) const {
    if (!predictors.eta || !predictors.tau)
      throw invalid_parameter("FairPolicy: predictors not attached");
    const SimplexVector tau(predictors.tau(x));
    const SimplexVector p(marginals);
    const Eigen::VectorXd t = t_vector(tau, p);
    const double eta = std::clamp(predictors.eta(x), -grid.bound, grid.bound);
    return policy_probs(dual, t, r_vector(eta, grid), beta);
  }

  double sample_prediction(const Eigen::VectorXd& x, std::mt19937_64& rng) const {
    const SimplexVector probs = predict_distribution(x);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (Eigen::Index l = 0; l < probs.size(); ++l) {
      acc += probs[l];
      if (u < acc) return grid.atoms[l];
    }
    return grid.atoms[grid.size() - 1];
  }
};

struct HistorySnapshot {
  long step = 0;
  long oracle_calls = 0;
  DualVars dual;
};

struct PostprocessResult {
  FairPolicy policy;
  std::vector<HistorySnapshot> history;
  ProblemParams params;
  FeaturePool pool;
  double sigma2 = 0.0;
  double mu = 0.0;
  double smoothness = 0.0;
  double alpha = 0.0;
  long oracle_calls = 0;
  std::vector<std::string> warnings;
};

// Fit the dual variables on an unlabeled pool by stochastic minimization of
// the smooth dual objective, sampling pool rows uniformly with replacement.
// With a single group the t rows vanish, every gradient is eps >= 0, and the
// zero dual is already optimal, so the optimizer is skipped.
inline PostprocessResult dp_postprocess(const PostprocessConfig& cfg, const SimplexVector& p,
                                        const Predictors& pred,
                                        const Eigen::MatrixXd& unlabeled) {
  if (cfg.budget < 2) throw invalid_parameter("dp_postprocess: budget must be at least 2");
  if (!(cfg.bound > 0.0)) throw invalid_parameter("dp_postprocess: bound must be positive");
  if (cfg.eps.size() == 0) throw invalid_parameter("dp_postprocess: eps not set");

  const int groups = int(p.size());
  Eigen::VectorXd eps;
  if (cfg.eps.size() == 1)
    eps = Eigen::VectorXd::Constant(groups, cfg.eps[0]);
  else if (cfg.eps.size() == groups)
    eps = cfg.eps;
  else
    throw invalid_parameter("dp_postprocess: eps length is neither 1 nor the group count");

  PostprocessResult out;
  const DerivedParams def = default_params(cfg.budget, 0.0);
  out.warnings = def.warnings;

  const int half_size = cfg.half_size > 0 ? cfg.half_size : def.half_size;
  const Grid grid = build_grid(cfg.bound, half_size);
  out.pool = build_pool(unlabeled, pred, p, grid);
  out.sigma2 = pred.plug_in ? pool_variance_proxy(out.pool) : sigma_squared(p);

  const double beta = cfg.beta > 0.0 ? cfg.beta : def.beta;
  out.mu = cfg.mu > 0.0 ? cfg.mu : (out.sigma2 > 0.0 ? 2.0 * out.sigma2 / beta : 0.0);
  out.smoothness =
      cfg.smoothness > 0.0 ? cfg.smoothness : smoothness_constant(beta, out.sigma2);
  if (cfg.alpha > 0.0)
    out.alpha = cfg.alpha;
  else if (out.mu > 0.0 && out.mu <= out.smoothness)
    out.alpha = grad_map_alpha_default(out.mu, out.smoothness);

  out.params.beta = beta;
  out.params.eps = eps;
  out.params.p = p.values();
  out.params.grid = grid;
  out.params.validate();

  const long iterations = cfg.iterations > 0 ? cfg.iterations : cfg.budget;
  const long record_every = cfg.record_every > 0 ? cfg.record_every
                                                 : std::max<long>(1, iterations / 50);

  DualVars dual = DualVars::zero(grid.size(), groups);
  out.history.push_back({0, 0, dual});

  if (out.sigma2 > 0.0) {
    const Eigen::Index rows = out.pool.rows();
    StochasticOracle oracle;
    oracle.dim = int(2 * grid.size() * groups);
    oracle.gradient = [&](const Eigen::VectorXd& w, std::mt19937_64& rng) {
      const Eigen::Index i =
          std::uniform_int_distribution<Eigen::Index>(0, rows - 1)(rng);
      const GradientPair g =
          stochastic_gradient(from_vector(w, grid.size(), groups), out.params,
                              out.pool.t.row(i).transpose(), out.pool.r.row(i).transpose());
      return to_vector(g);
    };

    const IterateObserver observer = [&](long calls, const Eigen::VectorXd& w) {
      if (calls % record_every == 0 && calls < iterations)
        out.history.push_back({long(out.history.size()), calls,
                               from_vector(w, grid.size(), groups)});
    };

    std::mt19937_64 rng(cfg.seed);
    const Eigen::VectorXd start = to_vector(dual);
    OptimizerResult run;
    switch (cfg.method) {
      case Method::sgd3_acsa:
        run = sgd3_refined(oracle, start, out.mu, out.smoothness, iterations,
                           InnerSolver::acsa, rng, observer);
        break;
      case Method::sgd3_acsa2:
        run = sgd3_refined(oracle, start, out.mu, out.smoothness, iterations,
                           InnerSolver::acsa2, rng, observer);
        break;
      case Method::acsa:
        run = ac_sa(oracle, start, out.mu, out.smoothness, iterations, rng, observer);
        break;
      case Method::acsa2:
        run = ac_sa2(oracle, start, out.mu, out.smoothness, iterations, rng, observer);
        break;
      case Method::sgd: {
        const double mu = out.mu;
        const double top = 1.0 / out.smoothness;
        run = projected_sgd(
            oracle, start,
            [mu, top](long t) { return std::min(top, 1.0 / (mu * double(t))); }, iterations,
            rng, observer);
        break;
      }
    }
    dual = from_vector(run.point, grid.size(), groups);
    out.oracle_calls = run.oracle_calls;
    out.warnings.insert(out.warnings.end(), run.warnings.begin(), run.warnings.end());
  }

  out.history.push_back({long(out.history.size()), out.oracle_calls, dual});

  out.policy.grid = grid;
  out.policy.dual = dual;
  out.policy.beta = beta;
  out.policy.eps = eps;
  out.policy.marginals = p.values();
  out.policy.predictors = pred;
  return out;
}

inline void save_policy(const std::string& path, const FairPolicy& policy) {
  nlohmann::json j;
  j["type"] = "policy";
  j["bound"] = policy.grid.bound;
  j["half_size"] = policy.grid.half_size;
  j["beta"] = policy.beta;
  j["eps"] = detail::to_std(policy.eps);
  j["marginals"] = detail::to_std(policy.marginals);
  j["lambda"] = detail::to_rows(policy.dual.lambda);
  j["nu"] = detail::to_rows(policy.dual.nu);
  j["eta_model"] = policy.eta_ref;
  j["tau_model"] = policy.tau_ref;
  detail::atomic_write(path, j.dump(2) + "\n");
}

// Loads grid, duals and references; predictors must be attached afterwards
// from the referenced model files before the policy can predict.
inline FairPolicy load_policy(const std::string& path) {
  const nlohmann::json j = detail::read_json_file(path);
  if (j.value("type", "") != "policy")
    throw std::runtime_error("load_policy: not a policy file: " + path);
  FairPolicy policy;
  policy.grid = build_grid(j.at("bound").get<double>(), j.at("half_size").get<int>());
  policy.beta = j.at("beta").get<double>();
  policy.eps = detail::from_std(j.at("eps").get<std::vector<double>>());
  policy.marginals = detail::from_std(j.at("marginals").get<std::vector<double>>());
  policy.dual.lambda = detail::from_rows(j.at("lambda").get<std::vector<std::vector<double>>>());
  policy.dual.nu = detail::from_rows(j.at("nu").get<std::vector<std::vector<double>>>());
  policy.eta_ref = j.value("eta_model", "");
  policy.tau_ref = j.value("tau_model", "");
  if (policy.dual.lambda.rows() != policy.grid.size() ||
      policy.dual.nu.rows() != policy.grid.size() ||
      policy.dual.lambda.cols() != policy.marginals.size() ||
      policy.dual.nu.cols() != policy.marginals.size())
    throw std::runtime_error("load_policy: inconsistent shapes in " + path);
  return policy;
}

// Wire a loaded policy to its base models.
inline void attach_predictors(FairPolicy& policy, const LinearModel& eta,
                              const MulticlassLogistic& tau, bool plug_in = true) {
  policy.predictors.eta = [eta](const Eigen::VectorXd& x) { return eta.predict(x); };
  policy.predictors.tau = [tau](const Eigen::VectorXd& x) {
    return tau.predict_proba(x).values();
  };
  policy.predictors.plug_in = plug_in;
}

}  // namespace fairgrid
