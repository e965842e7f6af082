#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "ppdmpc/qp.hpp"

namespace ppdmpc {
namespace {

Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = normal(rng);
  return m * m.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

// Oracle: enumerate every active subset, solve the equality-constrained
// system, keep KKT-valid candidates, return the best objective.
struct OracleResult {
  double objective = std::numeric_limits<double>::infinity();
  Eigen::VectorXd x;
  bool found = false;
};

OracleResult brute_force_qp(const Eigen::MatrixXd& g, const Eigen::VectorXd& a,
                            const Eigen::MatrixXd& c,
                            const Eigen::VectorXd& d) {
  const int n = static_cast<int>(g.rows());
  const int m = static_cast<int>(c.rows());
  OracleResult best;
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i) {
      if (mask & (1 << i)) act.push_back(i);
    }
    const int q = static_cast<int>(act.size());
    if (q > n) continue;
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + q, n + q);
    kkt.topLeftCorner(n, n) = g;
    Eigen::VectorXd rhs(n + q);
    rhs.head(n) = -a;
    for (int k = 0; k < q; ++k) {
      kkt.block(n + k, 0, 1, n) = c.row(act[static_cast<std::size_t>(k)]);
      kkt.block(0, n + k, n, 1) =
          c.row(act[static_cast<std::size_t>(k)]).transpose();
      rhs[n + k] = d[act[static_cast<std::size_t>(k)]];
    }
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    if ((kkt * sol - rhs).norm() > 1e-8 * (1.0 + rhs.norm())) continue;
    const Eigen::VectorXd x = sol.head(n);
    const Eigen::VectorXd mult = sol.tail(q);
    if ((c * x - d).maxCoeff() > 1e-8) continue;
    if (q > 0 && mult.minCoeff() < -1e-8) continue;
    const double f = 0.5 * x.dot(g * x) + a.dot(x);
    if (f < best.objective) {
      best.objective = f;
      best.x = x;
      best.found = true;
    }
  }
  return best;
}

TEST(DualActiveSetQp, UnconstrainedOptimum) {
  std::mt19937_64 rng(1);
  const auto g = random_spd(rng, 4);
  Eigen::VectorXd a(4);
  a << 1, -2, 0.5, 3;
  const auto res = solve_qp(g, a, Eigen::MatrixXd::Zero(0, 4),
                            Eigen::VectorXd::Zero(0));
  ASSERT_EQ(res.status, QpResult::Status::optimal);
  EXPECT_LT((g * res.x + a).norm(), 1e-10);
}

TEST(DualActiveSetQp, MatchesBruteForceEnumeration) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  int solved = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 4);  // 2..5
    const int m = 1 + static_cast<int>(rng() % 6);  // 1..6
    const auto g = random_spd(rng, n);
    Eigen::VectorXd a(n);
    for (int i = 0; i < n; ++i) a[i] = 2.0 * normal(rng);
    Eigen::MatrixXd c(m, n);
    Eigen::VectorXd d(m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) c(i, j) = normal(rng);
      d[i] = normal(rng);
    }
    const auto oracle = brute_force_qp(g, a, c, d);
    const auto res = solve_qp(g, a, c, d);
    if (!oracle.found) {
      EXPECT_EQ(res.status, QpResult::Status::infeasible) << "trial " << trial;
      continue;
    }
    ASSERT_EQ(res.status, QpResult::Status::optimal) << "trial " << trial;
    const double f = 0.5 * res.x.dot(g * res.x) + a.dot(res.x);
    EXPECT_NEAR(f, oracle.objective, 1e-7 * (1.0 + std::abs(f)))
        << "trial " << trial;
    EXPECT_LT((res.x - oracle.x).norm(), 1e-5 * (1.0 + oracle.x.norm()))
        << "trial " << trial;
    ++solved;
  }
  EXPECT_GT(solved, 150);  // most random instances are feasible
}

TEST(DualActiveSetQp, KktConditionsOnLargerProblems) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 30;
    const int m = 60;
    const auto g = random_spd(rng, n);
    Eigen::VectorXd a(n);
    for (int i = 0; i < n; ++i) a[i] = 3.0 * normal(rng);
    Eigen::MatrixXd c(m, n);
    Eigen::VectorXd d(m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) c(i, j) = normal(rng);
      d[i] = 0.5 + std::abs(normal(rng));  // origin feasible: never infeasible
    }
    const auto res = solve_qp(g, a, c, d);
    ASSERT_EQ(res.status, QpResult::Status::optimal) << "trial " << trial;

    const Eigen::VectorXd slack = c * res.x - d;
    EXPECT_LT(slack.maxCoeff(), 1e-8);
    EXPECT_GE(res.multipliers.minCoeff(), 0.0);
    const Eigen::VectorXd station =
        g * res.x + a + c.transpose() * res.multipliers;
    EXPECT_LT(station.cwiseAbs().maxCoeff(), 1e-7 * (1.0 + a.cwiseAbs().maxCoeff()));
    for (int i = 0; i < m; ++i) {
      EXPECT_LT(std::abs(res.multipliers[i] * slack[i]), 1e-6);
    }
  }
}

TEST(DualActiveSetQp, DetectsInfeasibility) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd c(2, 2);
  c << 1, 0, -1, 0;  // x0 <= -1 and -x0 <= -1: empty
  Eigen::VectorXd d(2);
  d << -1, -1;
  const auto res = solve_qp(g, a, c, d);
  EXPECT_EQ(res.status, QpResult::Status::infeasible);
}

TEST(DualActiveSetQp, Deterministic) {
  std::mt19937_64 rng(4);
  const auto g = random_spd(rng, 6);
  Eigen::VectorXd a = Eigen::VectorXd::LinSpaced(6, -1.0, 2.0);
  Eigen::MatrixXd c(4, 6);
  c.setZero();
  c(0, 0) = 1;
  c(1, 1) = -1;
  c(2, 2) = 1;
  c(3, 3) = 1;
  Eigen::VectorXd d(4);
  d << 0.1, 0.1, -0.05, 0.2;
  const auto r1 = solve_qp(g, a, c, d);
  const auto r2 = solve_qp(g, a, c, d);
  ASSERT_EQ(r1.status, QpResult::Status::optimal);
  EXPECT_EQ(r1.x, r2.x);
  EXPECT_EQ(r1.multipliers, r2.multipliers);
}

}  // namespace
}  // namespace ppdmpc
