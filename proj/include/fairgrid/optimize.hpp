#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace fairgrid {

// Stochastic first-order oracle over R^dim. Gradients are unbiased draws with
// variance the caller asserts to be bounded; the engine passed in is the only
// source of randomness, so a fixed seed fixes the iterate sequence.
struct StochasticOracle {
  int dim = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, std::mt19937_64&)> gradient;
};

struct StageInfo {
  int stage = 0;
  double mu = 0.0;
  long oracle_calls = 0;
};

struct OptimizerResult {
  Eigen::VectorXd point;
  long oracle_calls = 0;
  std::vector<std::string> warnings;
  std::vector<StageInfo> stages;
};

// Called after every iteration with the cumulative oracle-call count and the
// current output-sequence iterate; recording cadence is the observer's choice.
using IterateObserver = std::function<void(long, const Eigen::VectorXd&)>;

namespace detail {

inline Eigen::VectorXd clamp_nonneg(Eigen::VectorXd v) { return v.cwiseMax(0.0); }

inline double acsa_alpha(long t) { return 2.0 / double(t + 1); }

inline double acsa_gamma(long t, double smoothness) {
  return 4.0 * smoothness / (double(t) * double(t + 1));
}

}  // namespace detail

// Accelerated stochastic approximation over the nonnegative orthant with the
// alpha_t = 2/(t+1), gamma_t = 4M/(t(t+1)) schedule. Three sequences are kept:
// the proximal iterate w, the interpolation point w_md where gradients are
// drawn, and the aggregate w_ag that is returned. At t = 1 the interpolation
// weights collapse so the first gradient is taken at the start point.
inline OptimizerResult ac_sa(const StochasticOracle& oracle, const Eigen::VectorXd& start,
                             double mu, double smoothness, long budget, std::mt19937_64& rng,
                             const IterateObserver& observer = {}, long call_offset = 0) {
  if (!oracle.gradient || oracle.dim < 1) throw invalid_parameter("ac_sa: oracle not set");
  if (!(smoothness > 0.0)) throw invalid_parameter("ac_sa: smoothness must be positive");
  if (!(mu >= 0.0) || mu > smoothness) throw invalid_parameter("ac_sa: need 0 <= mu <= M");
  if (budget < 0) throw invalid_parameter("ac_sa: negative budget");

  Eigen::VectorXd w = detail::clamp_nonneg(start);
  Eigen::VectorXd w_ag = w;
  for (long t = 1; t <= budget; ++t) {
    const double alpha = detail::acsa_alpha(t);
    const double gamma = detail::acsa_gamma(t, smoothness);
    const double md_den = gamma + (1.0 - alpha * alpha) * mu;
    const Eigen::VectorXd w_md = ((1.0 - alpha) * (mu + gamma) / md_den) * w_ag +
                                 (alpha * ((1.0 - alpha) * mu + gamma) / md_den) * w;
    const Eigen::VectorXd g = oracle.gradient(w_md, rng);
    const double den = mu + gamma;
    w = detail::clamp_nonneg((((1.0 - alpha) * mu + gamma) / den) * w +
                             (alpha * mu / den) * w_md - (alpha / den) * g);
    w_ag = alpha * w + (1.0 - alpha) * w_ag;
    if (observer) observer(call_offset + t, w_ag);
  }

  OptimizerResult out;
  out.point = std::move(w_ag);
  out.oracle_calls = budget;
  return out;
}

// Restarted variant: the stepsize schedule is reset halfway through the
// budget, continuing from the first half's aggregate. An odd budget gives the
// extra call to the second half.
inline OptimizerResult ac_sa2(const StochasticOracle& oracle, const Eigen::VectorXd& start,
                              double mu, double smoothness, long budget, std::mt19937_64& rng,
                              const IterateObserver& observer = {}, long call_offset = 0) {
  const long first = budget / 2;
  const long second = budget - first;
  OptimizerResult a = ac_sa(oracle, start, mu, smoothness, first, rng, observer, call_offset);
  OptimizerResult b =
      ac_sa(oracle, a.point, mu, smoothness, second, rng, observer, call_offset + first);
  b.oracle_calls = budget;
  return b;
}

enum class InnerSolver { acsa, acsa2 };

// Proximal-ladder meta-algorithm for driving the gradient mapping to zero.
// Stage j solves the previous objective plus a proximal term whose weight
// doubles each stage, warm-started at the previous stage's output:
//   F^(0) = F + (mu/2)||. - w0||^2,  F^(j) = F^(j-1) + (mu_j/2)||. - w_j||^2,
// with mu_0 = mu, mu_j = 2 mu_{j-1}, J = floor(log2(M/mu)) stages, inner
// smoothness 2(M + mu), and inner budget T/J (remainder on the last stage).
// When M < 2 mu there is no ladder and the single stage minimizes F^(0).
inline OptimizerResult sgd3_refined(const StochasticOracle& oracle, const Eigen::VectorXd& start,
                                    double mu, double smoothness, long budget, InnerSolver inner,
                                    std::mt19937_64& rng, const IterateObserver& observer = {}) {
  if (!(mu > 0.0)) throw invalid_parameter("sgd3_refined: mu must be positive");
  if (mu > smoothness)
    throw invalid_parameter("sgd3_refined: mu exceeds the smoothness constant");
  if (budget < 1) throw invalid_parameter("sgd3_refined: budget must be at least 1");

  OptimizerResult out;
  const int ladder = int(std::floor(std::log2(smoothness / mu)));
  const int stages = std::max(ladder, 1);
  const double threshold = (inner == InnerSolver::acsa ? 4.0 : std::pow(2.0, 11.0 / 4.0)) *
                           std::sqrt(smoothness / mu) * double(ladder);
  if (double(budget) <= threshold)
    out.warnings.push_back("sgd3_refined: budget " + std::to_string(budget) +
                           " is below the rate threshold " + std::to_string(threshold) +
                           "; running anyway");

  // Proximal anchors (weight, center) accumulated across stages; the base
  // regularizer (mu, w0) is always present.
  std::vector<std::pair<double, Eigen::VectorXd>> anchors;
  anchors.emplace_back(mu, detail::clamp_nonneg(start));
  Eigen::VectorXd w = anchors.front().second;
  const double inner_smoothness = 2.0 * (smoothness + mu);
  double stage_mu = mu;
  long used = 0;
  for (int j = 1; j <= stages; ++j) {
    const long stage_budget = (j == stages) ? budget - used : budget / stages;
    StochasticOracle wrapped;
    wrapped.dim = oracle.dim;
    wrapped.gradient = [&](const Eigen::VectorXd& point, std::mt19937_64& r) {
      Eigen::VectorXd g = oracle.gradient(point, r);
      for (const auto& anchor : anchors) g += anchor.first * (point - anchor.second);
      return g;
    };
    OptimizerResult stage =
        (inner == InnerSolver::acsa)
            ? ac_sa(wrapped, w, stage_mu, inner_smoothness, stage_budget, rng, observer, used)
            : ac_sa2(wrapped, w, stage_mu, inner_smoothness, stage_budget, rng, observer, used);
    used += stage_budget;
    w = stage.point;
    out.stages.push_back({j, stage_mu, stage_budget});
    stage_mu *= 2.0;
    anchors.emplace_back(stage_mu, w);
  }
  out.point = std::move(w);
  out.oracle_calls = used;
  return out;
}

// Plain projected stochastic gradient descent, w <- (w - eta_t g)_+.
inline OptimizerResult projected_sgd(const StochasticOracle& oracle, const Eigen::VectorXd& start,
                                     const std::function<double(long)>& step, long budget,
                                     std::mt19937_64& rng, const IterateObserver& observer = {}) {
  if (!oracle.gradient || oracle.dim < 1) throw invalid_parameter("projected_sgd: oracle not set");
  if (!step) throw invalid_parameter("projected_sgd: step schedule not set");
  if (budget < 0) throw invalid_parameter("projected_sgd: negative budget");
  Eigen::VectorXd w = detail::clamp_nonneg(start);
  for (long t = 1; t <= budget; ++t) {
    w = detail::clamp_nonneg(w - step(t) * oracle.gradient(w, rng));
    if (observer) observer(t, w);
  }
  OptimizerResult out;
  out.point = std::move(w);
  out.oracle_calls = budget;
  return out;
}

// Diagnostic step size alpha = 1 / (2^{J+2} mu) with J = floor(log2(M/mu)).
// Since 2^J >= M/(2 mu) this always satisfies alpha <= 1/(2M).
inline double grad_map_alpha_default(double mu, double smoothness) {
  if (!(mu > 0.0) || smoothness < mu)
    throw invalid_parameter("grad_map_alpha_default: need 0 < mu <= M");
  const int ladder = int(std::floor(std::log2(smoothness / mu)));
  return 1.0 / (std::pow(2.0, ladder + 2) * mu);
}

}  // namespace fairgrid
