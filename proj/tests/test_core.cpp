#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "support.hpp"

using namespace fairgrid;
using Catch::Approx;

TEST_CASE("pairwise sum matches straight summation at long-double precision") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> terms(100000);
  long double reference = 0.0L;
  for (double& v : terms) {
    v = unif(rng);
    reference += v;
  }
  const double got = detail::pairwise_sum<double>(
      0, terms.size(), [&](std::size_t i) { return terms[i]; });
  REQUIRE(got == Approx(double(reference)).margin(1e-10));

  // Integer-valued doubles sum exactly.
  const std::size_t n = 12345;
  const double ints =
      detail::pairwise_sum<double>(0, n, [](std::size_t i) { return double(i + 1); });
  REQUIRE(ints == double(n) * double(n + 1) / 2.0);

  // Base-case sizes.
  for (std::size_t k = 1; k <= 9; ++k) {
    const double small =
        detail::pairwise_sum<double>(0, k, [](std::size_t i) { return double(i); });
    REQUIRE(small == double(k) * double(k - 1) / 2.0);
  }
  REQUIRE_THROWS_AS(
      detail::pairwise_sum<double>(3, 3, [](std::size_t) { return 0.0; }),
      invalid_parameter);
}

TEST_CASE("grid atoms hit the endpoints and center exactly") {
  const Grid g = build_grid(2.5, 4);
  REQUIRE(g.size() == 9);
  REQUIRE(g.atoms[0] == -2.5);
  REQUIRE(g.atoms[8] == 2.5);
  REQUIRE(g.atoms[4] == 0.0);
  for (Eigen::Index i = 0; i < g.size(); ++i)
    REQUIRE(g.atoms[i] == -g.atoms[g.size() - 1 - i]);
  for (Eigen::Index i = 1; i < g.size(); ++i)
    REQUIRE(g.atoms[i] - g.atoms[i - 1] == Approx(2.5 / 4.0).epsilon(1e-14));

  REQUIRE_THROWS_AS(build_grid(0.0, 4), invalid_parameter);
  REQUIRE_THROWS_AS(build_grid(1.0, 0), invalid_parameter);
}

TEST_CASE("simplex vector validates its invariants") {
  REQUIRE_NOTHROW(SimplexVector(Eigen::Vector2d(0.25, 0.75)));
  REQUIRE_THROWS_AS(SimplexVector(Eigen::Vector2d(0.5, 0.6)), invalid_parameter);
  REQUIRE_THROWS_AS(SimplexVector(Eigen::Vector2d(-0.1, 1.1)), invalid_parameter);
  REQUIRE_THROWS_AS(SimplexVector(Eigen::VectorXd()), invalid_parameter);
  const SimplexVector v(Eigen::Vector3d(0.2, 0.3, 0.5));
  REQUIRE(v.size() == 3);
  REQUIRE(v[1] == 0.3);
}

TEST_CASE("soft maximum: frozen values, sandwich and shift equivariance") {
  REQUIRE(lse(Eigen::Vector2d(0.0, 0.0), 1.0) == Approx(std::log(2.0)).epsilon(1e-15));
  // Independent high-precision evaluation of the defining formula.
  {
    const long double b = 2.0L;
    const long double direct =
        std::log(std::exp(b * 1.0L) + std::exp(b * 2.0L) + std::exp(b * 3.0L)) / b;
    REQUIRE(lse(Eigen::Vector3d(1.0, 2.0, 3.0), 2.0) == Approx(double(direct)).epsilon(1e-14));
  }

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(-50.0, 50.0);
  std::uniform_real_distribution<double> betas(0.01, 100.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = 1 + int(rng() % 12);
    Eigen::VectorXd w(m);
    for (int j = 0; j < m; ++j) w[j] = unif(rng);
    const double beta = betas(rng);
    const double value = lse(w, beta);
    const double top = w.maxCoeff();
    REQUIRE(value >= top - 1e-12);
    REQUIRE(value <= top + std::log(double(m)) / beta + 1e-12);

    const double c = unif(rng);
    REQUIRE(lse(w.array() + c, beta) == Approx(value + c).margin(1e-10));
  }

  // Sharper temperature pushes the value toward the maximum.
  const Eigen::Vector3d w(0.3, -0.2, 0.1);
  REQUIRE(lse(w, 0.5) >= lse(w, 2.0));
  REQUIRE(lse(w, 2.0) >= lse(w, 8.0));
  REQUIRE(lse(w, 8.0) >= w.maxCoeff());

  // Extreme inputs stay finite thanks to max subtraction.
  REQUIRE(std::isfinite(lse(Eigen::Vector2d(1000.0, -1000.0), 5.0)));

  REQUIRE_THROWS_AS(lse(Eigen::VectorXd(), 1.0), invalid_parameter);
  REQUIRE_THROWS_AS(lse(w, 0.0), invalid_parameter);
}

TEST_CASE("softmax is the soft maximum gradient") {
  {
    const SimplexVector s = softmax(Eigen::Vector2d(0.0, std::log(3.0)));
    REQUIRE(s[0] == Approx(0.25).epsilon(1e-15));
    REQUIRE(s[1] == Approx(0.75).epsilon(1e-15));
  }
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unif(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 2 + int(rng() % 6);
    Eigen::VectorXd w(m);
    for (int j = 0; j < m; ++j) w[j] = unif(rng);
    const double beta = 0.5 + 3.0 * std::generate_canonical<double, 53>(rng);
    const SimplexVector s = softmax(beta * w);
    const double h = 1e-6;
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXd hi = w, lo = w;
      hi[j] += h;
      lo[j] -= h;
      const double fd = (lse(hi, beta) - lse(lo, beta)) / (2.0 * h);
      REQUIRE(s[j] == Approx(fd).margin(2e-8));
    }
  }
  // Saturation at extreme scores.
  const SimplexVector sat = softmax(Eigen::Vector2d(800.0, -800.0));
  REQUIRE(sat[0] == Approx(1.0).margin(1e-15));
}

TEST_CASE("negative entropy: frozen value and zero convention") {
  REQUIRE(neg_entropy(SimplexVector(Eigen::Vector2d(0.25, 0.75))) ==
          Approx(0.25 * std::log(0.25) + 0.75 * std::log(0.75)).epsilon(1e-15));
  REQUIRE(neg_entropy(SimplexVector(Eigen::Vector2d(0.0, 1.0))) == 0.0);
  REQUIRE(neg_entropy(SimplexVector(Eigen::Vector3d(1.0 / 3, 1.0 / 3, 1.0 / 3))) ==
          Approx(-std::log(3.0)).epsilon(1e-14));
}

namespace {

// Coordinate ternary search over the 3-simplex: an oracle for the entropic
// argmax that never touches the closed form.
Eigen::Vector3d maximize_simplex3(const Eigen::Vector3d& w, double beta) {
  auto value = [&](double a, double b) {
    const double c = 1.0 - a - b;
    if (a < 0 || b < 0 || c < 0) return -1e300;
    Eigen::Vector3d mu(a, b, c);
    double ent = 0.0;
    for (int j = 0; j < 3; ++j)
      if (mu[j] > 0.0) ent += mu[j] * std::log(mu[j]);
    return mu.dot(w) - ent / beta;
  };
  double a = 1.0 / 3, b = 1.0 / 3;
  for (int round = 0; round < 400; ++round) {
    for (int coord = 0; coord < 2; ++coord) {
      double lo = 0.0, hi = coord == 0 ? 1.0 - b : 1.0 - a;
      for (int it = 0; it < 200; ++it) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        const double v1 = coord == 0 ? value(m1, b) : value(a, m1);
        const double v2 = coord == 0 ? value(m2, b) : value(a, m2);
        if (v1 < v2)
          lo = m1;
        else
          hi = m2;
      }
      (coord == 0 ? a : b) = (lo + hi) / 2.0;
    }
  }
  return {a, b, 1.0 - a - b};
}

}  // namespace

TEST_CASE("softmax solves the entropic maximization over the simplex") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Vector3d w(unif(rng), unif(rng), unif(rng));
    const double beta = 0.5 + 2.5 * std::generate_canonical<double, 53>(rng);
    const Eigen::Vector3d oracle = maximize_simplex3(w, beta);
    const SimplexVector s = softmax(beta * w);
    for (int j = 0; j < 3; ++j) REQUIRE(s[j] == Approx(oracle[j]).margin(1e-6));

    // Variational identity: the maximum value equals the soft maximum.
    const double best = oracle.dot(w) - neg_entropy(SimplexVector(oracle)) / beta;
    REQUIRE(lse(w, beta) == Approx(best).margin(1e-9));
  }
}

TEST_CASE("group reweighting vector") {
  const SimplexVector p(Eigen::Vector2d(0.5, 0.5));
  const Eigen::VectorXd t = t_vector(SimplexVector(Eigen::Vector2d(0.3, 0.7)), p);
  REQUIRE(t[0] == Approx(0.4).epsilon(1e-15));
  REQUIRE(t[1] == Approx(-0.4).epsilon(1e-15));

  // Posterior equal to the marginals cancels exactly.
  const Eigen::VectorXd zero = t_vector(p, p);
  REQUIRE(zero[0] == 0.0);
  REQUIRE(zero[1] == 0.0);

  const SimplexVector degenerate(Eigen::Vector2d(0.0, 1.0));
  REQUIRE_THROWS_AS(t_vector(SimplexVector(Eigen::Vector2d(0.2, 0.8)), degenerate), degenerate_group);
  REQUIRE_THROWS_AS(t_vector(SimplexVector(Eigen::Vector3d(0.2, 0.3, 0.5)), p), invalid_parameter);
}

TEST_CASE("squared distances to the grid atoms") {
  const Grid g = build_grid(1.0, 1);
  const Eigen::VectorXd r0 = r_vector(0.0, g);
  REQUIRE(r0[0] == 1.0);
  REQUIRE(r0[1] == 0.0);
  REQUIRE(r0[2] == 1.0);
  const Eigen::VectorXd rh = r_vector(0.5, g);
  REQUIRE(rh[0] == Approx(2.25).epsilon(1e-15));
  REQUIRE(rh[1] == Approx(0.25).epsilon(1e-15));
  REQUIRE(rh[2] == Approx(0.25).epsilon(1e-15));

  // The minimizing atom is the closest one.
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  const Grid fine = build_grid(2.0, 37);
  for (int trial = 0; trial < 200; ++trial) {
    const double eta = unif(rng);
    const Eigen::VectorXd r = r_vector(eta, fine);
    Eigen::Index argmin = 0;
    r.minCoeff(&argmin);
    double best = 1e300;
    Eigen::Index nearest = 0;
    for (Eigen::Index i = 0; i < fine.size(); ++i) {
      const double d = std::abs(fine.atoms[i] - eta);
      if (d < best) {
        best = d;
        nearest = i;
      }
    }
    REQUIRE(argmin == nearest);
  }
}
