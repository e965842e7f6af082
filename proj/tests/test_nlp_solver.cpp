#include <gtest/gtest.h>

#include <random>

#include "ppdmpc/nlp_solver.hpp"

namespace ppdmpc {
namespace {

PredictionBundle constant_velocity_bundle(
    const std::vector<TrafficVehicleState>& snapshot, int n, double dt) {
  PredictionBundle b;
  for (const auto& v : snapshot) {
    PredictedTrack t;
    t.states = Eigen::MatrixXd::Zero(4, n + 1);
    t.accels = Eigen::VectorXd::Zero(n);
    for (int k = 0; k <= n; ++k) {
      t.states(0, k) = v.px + k * dt * v.vx;
      t.states(1, k) = v.py;
      t.states(2, k) = v.vx;
      t.states(3, k) = v.heading;
    }
    b.tracks.push_back(std::move(t));
  }
  return b;
}

TrafficVehicleState veh_at(double px, double py, int lane, double vx) {
  TrafficVehicleState v;
  v.px = px;
  v.py = py;
  v.vx = vx;
  v.lane = lane;
  return v;
}

NlpInstance make_instance(Maneuver tag, const EgoState& x0,
                          const std::vector<TrafficVehicleState>& snapshot,
                          int n) {
  OcpConfig cfg;
  cfg.horizon.steps = n;
  const auto pred = constant_velocity_bundle(snapshot, n, cfg.horizon.dt);
  return assemble_nlp(tag, x0, pred, snapshot, cfg);
}

TEST(NlpSolver, ReferenceStartIsAlreadyOptimal) {
  EgoState x0;
  x0.py = 3.5;
  x0.vx = 30.0 / 3.6;
  const auto inst = make_instance(Maneuver::keep_lane, x0, {}, 10);
  const auto sol = solve(inst, std::nullopt);
  EXPECT_EQ(sol.status, NlpStatus::converged);
  EXPECT_LT(sol.objective, 1e-9);
  EXPECT_LT(sol.point.u.cwiseAbs().maxCoeff(), 1e-5);
  for (int k = 1; k <= inst.n(); ++k) {
    EXPECT_NEAR(sol.point.x(1, k), 3.5, 1e-6);
    EXPECT_NEAR(sol.point.x(2, k), 30.0 / 3.6, 1e-6);
  }
}

// Brute-force oracle: exhaustive per-step control grid on an N=2 instance
// with an active acceleration bound.
TEST(NlpSolver, MatchesControlGridSearch) {
  EgoState x0;
  x0.py = 3.2;               // slightly off center
  x0.vx = 30.0 / 3.6 - 4.0;  // wants more accel than the bound allows
  const auto inst = make_instance(Maneuver::keep_lane, x0, {}, 2);
  const auto sol = solve(inst, std::nullopt);
  ASSERT_EQ(sol.status, NlpStatus::converged);

  const int pts = 21;
  const auto& b = inst.bounds;
  auto delta_of = [&](int i) {
    return -b.delta_max + 2.0 * b.delta_max * i / (pts - 1);
  };
  auto accel_of = [&](int i) {
    return b.accel_min + (b.accel_max - b.accel_min) * i / (pts - 1);
  };

  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector4i best_idx;
  PrimalPoint p = PrimalPoint::zeros(2, 0);
  for (int d0 = 0; d0 < pts; ++d0) {
    for (int a0 = 0; a0 < pts; ++a0) {
      for (int d1 = 0; d1 < pts; ++d1) {
        for (int a1 = 0; a1 < pts; ++a1) {
          p.u(0, 0) = delta_of(d0);
          p.u(1, 0) = accel_of(a0);
          p.u(0, 1) = delta_of(d1);
          p.u(1, 1) = accel_of(a1);
          p.x = ego_rollout(inst.x0, p.u, inst.geometry, inst.horizon.dt);
          if (eval_inequalities(inst, p).maxCoeff() > 1e-9) continue;
          const double f = objective_value(inst, p);
          if (f < best) {
            best = f;
            best_idx << d0, a0, d1, a1;
          }
        }
      }
    }
  }
  ASSERT_TRUE(std::isfinite(best));

  // Local objective variation across one grid cell around the argmin.
  double cell = 0.0;
  for (int dd0 = -1; dd0 <= 1; ++dd0) {
    for (int da0 = -1; da0 <= 1; ++da0) {
      for (int dd1 = -1; dd1 <= 1; ++dd1) {
        for (int da1 = -1; da1 <= 1; ++da1) {
          const int i0 = best_idx[0] + dd0, i1 = best_idx[1] + da0;
          const int i2 = best_idx[2] + dd1, i3 = best_idx[3] + da1;
          if (i0 < 0 || i0 >= pts || i1 < 0 || i1 >= pts || i2 < 0 ||
              i2 >= pts || i3 < 0 || i3 >= pts) {
            continue;
          }
          p.u(0, 0) = delta_of(i0);
          p.u(1, 0) = accel_of(i1);
          p.u(0, 1) = delta_of(i2);
          p.u(1, 1) = accel_of(i3);
          p.x = ego_rollout(inst.x0, p.u, inst.geometry, inst.horizon.dt);
          cell = std::max(cell, std::abs(objective_value(inst, p) - best));
        }
      }
    }
  }

  EXPECT_LE(sol.objective, best + 1e-9);        // no feasible grid point beats it
  EXPECT_LE(best - sol.objective, 2.0 * cell);  // and it is within one cell
}

TEST(NlpSolver, SlowLeaderActivatesHeadwayBound) {
  EgoState x0;
  x0.py = 3.5;
  x0.vx = 30.0 / 3.6;
  const auto lead = veh_at(25.0, 3.5, 1, 4.0);
  const auto inst = make_instance(Maneuver::keep_lane, x0, {lead}, 25);
  const auto sol = solve(inst, std::nullopt);
  ASSERT_EQ(sol.status, NlpStatus::converged);

  EXPECT_LT(sol.point.x(2, inst.n()), inst.refs.v_ref - 0.5);

  double max_residual = -std::numeric_limits<double>::infinity();
  for (int k = 1; k <= inst.n(); ++k) {
    const EgoState ego = EgoState::from_vec(sol.point.x.col(k));
    const double r = lane_keep_residual(ego, inst.predicted_vehicle(0, k),
                                        inst.safety, inst.geometry,
                                        sol.point.s(0, k));
    max_residual = std::max(max_residual, r);
  }
  EXPECT_GT(max_residual, -0.05);  // rides the bound
  EXPECT_LT(max_residual, 1e-6);
}

TEST(NlpSolver, KktResidualSmallAtSolutionLargerWhenPerturbed) {
  EgoState x0;
  x0.py = 3.5;
  x0.vx = 30.0 / 3.6;
  const auto lead = veh_at(25.0, 3.5, 1, 4.0);
  const auto inst = make_instance(Maneuver::keep_lane, x0, {lead}, 12);
  const auto sol = solve(inst, std::nullopt);
  ASSERT_EQ(sol.status, NlpStatus::converged);

  const double at_solution =
      kkt_residual(inst, sol.point, sol.eq_multipliers, sol.ineq_multipliers);
  PrimalPoint shifted = sol.point;
  shifted.u.array() += 0.1;
  const double perturbed =
      kkt_residual(inst, shifted, sol.eq_multipliers, sol.ineq_multipliers);
  EXPECT_LT(at_solution, 1e-3);
  EXPECT_GT(perturbed, at_solution * 10.0);
}

TEST(NlpSolver, HandBuiltKktPointOfOneStepInstance) {
  EgoState x0;
  x0.py = 3.5;
  x0.vx = 30.0 / 3.6;
  const auto inst = make_instance(Maneuver::keep_lane, x0, {}, 1);
  // At the reference with zero control, everything weighted is exact:
  // the zero-multiplier KKT point.
  PrimalPoint p = PrimalPoint::zeros(1, 0);
  p.x = ego_rollout(x0, p.u, inst.geometry, inst.horizon.dt);
  const double res =
      kkt_residual(inst, p, Eigen::VectorXd::Zero(inst.num_eq()),
                   Eigen::VectorXd::Zero(inst.num_ineq()));
  EXPECT_LT(res, 1e-10);
}

TEST(NlpSolver, WarmStartFromOwnOptimumTerminatesImmediately) {
  EgoState x0;
  x0.py = 3.0;
  x0.vx = 7.0;
  const auto lead = veh_at(30.0, 3.5, 1, 6.0);
  const auto inst = make_instance(Maneuver::keep_lane, x0, {lead}, 25);
  const auto cold = solve(inst, std::nullopt);
  ASSERT_EQ(cold.status, NlpStatus::converged);

  const auto warm = solve(inst, cold.point);
  EXPECT_EQ(warm.status, NlpStatus::converged);
  EXPECT_LE(warm.iterations, 3);
  EXPECT_NEAR(warm.objective, cold.objective,
              1e-8 * (1.0 + cold.objective));
}

TEST(NlpSolver, NeverWorseThanFeasibleWarmStart) {
  EgoState x0;
  x0.py = 3.5;
  x0.vx = 6.0;
  const auto lead = veh_at(35.0, 3.5, 1, 7.0);
  const auto inst = make_instance(Maneuver::keep_lane, x0, {lead}, 25);

  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(2, inst.n());
  for (int k = 0; k < inst.n(); ++k) u(1, k) = 0.3;  // gentle feasible accel
  const PrimalPoint warm = make_primal(
      inst, ego_rollout(x0, u, inst.geometry, inst.horizon.dt), u);
  ASSERT_LT(eval_inequalities(inst, warm).maxCoeff(), 1e-9);
  const double f_warm = objective_value(inst, warm);

  const auto sol = solve(inst, warm);
  EXPECT_EQ(sol.status, NlpStatus::converged);
  EXPECT_LE(sol.objective, f_warm + 1e-8);
}

TEST(NlpSolver, DeterministicAcrossRepeatedSolves) {
  EgoState x0;
  x0.py = 3.5;
  x0.vx = 8.0;
  const auto lead = veh_at(22.0, 3.5, 1, 5.0);
  const auto inst = make_instance(Maneuver::keep_lane, x0, {lead}, 25);
  const auto a = solve(inst, std::nullopt);
  const auto b = solve(inst, std::nullopt);
  EXPECT_EQ(pack_point(inst, a.point), pack_point(inst, b.point));
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(NlpSolver, BoundConflictReportsInfeasibleRelaxed) {
  EgoState x0;
  x0.py = 3.5;
  x0.vx = 8.0;
  OcpConfig cfg;
  cfg.horizon.steps = 5;
  cfg.bounds.accel_min = 3.0;  // conflicts with accel_max = 2
  const auto inst = assemble_nlp(Maneuver::keep_lane, x0, {}, {}, cfg);
  const auto sol = solve(inst, std::nullopt);
  EXPECT_EQ(sol.status, NlpStatus::infeasible_relaxed);
}

// The lane-change instance around a slower target-lane pair: solvable, and
// the plan stays clear of both footprints.
TEST(NlpSolver, RightChangeThreadsTheGap) {
  EgoState x0;
  x0.py = 3.5;
  x0.vx = 8.0;
  const std::vector<TrafficVehicleState> snapshot = {
      veh_at(-14.0, 0.0, 0, 7.0), veh_at(16.0, 0.0, 0, 7.0),
      veh_at(40.0, 3.5, 1, 8.0)};
  const auto inst = make_instance(Maneuver::change_right, x0, snapshot, 25);
  const auto sol = solve(inst, std::nullopt);
  ASSERT_EQ(sol.status, NlpStatus::converged);
  EXPECT_LT(sol.max_violation, 1e-6);
  // Heads toward the target lane without ramming the slack penalty.
  EXPECT_LT(sol.point.x(1, inst.n()), 3.0);
  EXPECT_LT(sol.point.s.maxCoeff(), 0.05);
}

}  // namespace
}  // namespace ppdmpc
