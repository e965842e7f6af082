#include <gtest/gtest.h>

#include <cmath>

#include "ppdmpc/predictor.hpp"

namespace ppdmpc {
namespace {

EgoTrajectory straight_plan(const EgoState& x0, int n, double dt) {
  EgoTrajectory t = EgoTrajectory::zeros(n);
  for (int k = 0; k <= n; ++k) {
    EgoState x = x0;
    x.px += k * dt * x0.vx;
    t.states.col(k) = x.vec();
  }
  return t;
}

Observations two_lane_obs() {
  Observations obs;
  TrafficVehicleState a;  // right lane, behind the ego
  a.px = -5.0;
  a.vx = 8.0;
  a.lane = 0;
  TrafficVehicleState b;  // right lane leader
  b.px = 25.0;
  b.py = 0.0;
  b.vx = 8.0;
  b.lane = 0;
  obs.vehicles = {a, b};
  TrafficParams p;
  p.v_ref = 8.0;
  p.cooperativeness = 0.8;
  obs.params = {p, p};
  return obs;
}

TEST(Predictor, NoiselessMatchesGroundTruthRollout) {
  const double dt = 0.2;
  const int n = 25;
  EgoGeometry g;
  TrafficPolicyConfig policy;
  ModelBasedPredictor pred(g, policy, dt);

  const auto obs = two_lane_obs();
  EgoState x0;
  x0.py = 2.0;  // encroaching toward lane 0
  x0.vx = 8.0;
  const auto plan = straight_plan(x0, n, dt);

  PredictorConfig cfg;
  cfg.sigma_a = 0.0;
  cfg.seed = 99;
  const auto bundle = pred.predict(obs, plan, cfg);

  // Oracle: explicit policy + step loop.
  auto current = obs.vehicles;
  for (int k = 0; k < n; ++k) {
    const auto accels = traffic_policy(current, obs.params, plan.state(k),
                                       g.half_span, policy);
    for (std::size_t i = 0; i < current.size(); ++i) {
      EXPECT_NEAR(bundle.tracks[i].accels[k], accels[i], 1e-12);
      current[i] = traffic_step(current[i], accels[i], dt);
      EXPECT_NEAR(bundle.tracks[i].states(0, k + 1), current[i].px, 1e-12);
      EXPECT_NEAR(bundle.tracks[i].states(2, k + 1), current[i].vx, 1e-12);
    }
  }
}

TEST(Predictor, CooperativeFollowerSlowsUnderEncroachingPlan) {
  const double dt = 0.2;
  const int n = 25;
  EgoGeometry g;
  ModelBasedPredictor pred(g, TrafficPolicyConfig{}, dt);

  const auto obs = two_lane_obs();
  EgoState x0;
  x0.px = 5.0;  // ahead of the follower
  x0.py = 2.0;  // nosing rightward
  x0.vx = 8.0;
  const auto plan = straight_plan(x0, n, dt);

  PredictorConfig cfg;
  cfg.sigma_a = 0.0;
  const auto bundle = pred.predict(obs, plan, cfg);
  const auto& follower = bundle.tracks[0];
  EXPECT_LT(follower.states(2, n), follower.states(2, 0) - 0.2);
  for (int k = 0; k < n; ++k) {
    EXPECT_LE(follower.states(2, k + 1), follower.states(2, k) + 1e-12);
  }
}

// With the policy pinned at zero, noisy-minus-noiseless accelerations are
// exactly the clamped noise; its sample std dev must come out near sigma.
TEST(Predictor, NoiseMomentsMatchSigma) {
  const double dt = 0.2;
  const int n = 1000;
  EgoGeometry g;
  ModelBasedPredictor pred(g, TrafficPolicyConfig{}, dt);

  Observations obs;
  TrafficParams quiet;
  quiet.headway_gain = 0.0;
  quiet.gap_gain = 0.0;
  quiet.cooperativeness = 0.0;
  for (int i = 0; i < 10; ++i) {
    TrafficVehicleState v;
    v.px = 1000.0 * i;
    v.vx = 8.0;
    v.lane = i % 3;
    obs.vehicles.push_back(v);
    obs.params.push_back(quiet);
  }

  EgoState x0;
  x0.py = 3.5;
  x0.vx = 8.0;
  const auto plan = straight_plan(x0, n, dt);

  PredictorConfig noisy;
  noisy.sigma_a = 1.0;
  noisy.seed = 7;
  PredictorConfig clean;
  clean.sigma_a = 0.0;
  clean.seed = 7;
  const auto nb = pred.predict(obs, plan, noisy);
  const auto cb = pred.predict(obs, plan, clean);

  double sum = 0.0, sum2 = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < obs.vehicles.size(); ++i) {
    for (int k = 0; k < n; ++k) {
      const double d = nb.tracks[i].accels[k] - cb.tracks[i].accels[k];
      sum += d;
      sum2 += d * d;
      ++count;
    }
  }
  ASSERT_EQ(count, 10000);
  const double mean = sum / count;
  const double stddev = std::sqrt(sum2 / count - mean * mean);
  EXPECT_NEAR(stddev, 1.0, 0.05);
}

TEST(Predictor, AccelerationsRespectPhysicalLimit) {
  const double dt = 0.2;
  const int n = 50;
  EgoGeometry g;
  ModelBasedPredictor pred(g, TrafficPolicyConfig{}, dt);
  const auto obs = two_lane_obs();
  const auto plan = straight_plan(EgoState{0, 2, 8, 0, 0}, n, dt);

  PredictorConfig cfg;
  cfg.sigma_a = 50.0;  // almost every raw draw exceeds the limit
  const auto bundle = pred.predict(obs, plan, cfg);
  for (const auto& t : bundle.tracks) {
    EXPECT_LE(t.accels.maxCoeff(), 4.0);
    EXPECT_GE(t.accels.minCoeff(), -4.0);
  }
}

TEST(Predictor, DeterministicInSeed) {
  const double dt = 0.2;
  const int n = 20;
  EgoGeometry g;
  ModelBasedPredictor pred(g, TrafficPolicyConfig{}, dt);
  const auto obs = two_lane_obs();
  const auto plan = straight_plan(EgoState{0, 2, 8, 0, 0}, n, dt);

  PredictorConfig cfg;
  cfg.sigma_a = 0.5;
  cfg.seed = 123;
  const auto a = pred.predict(obs, plan, cfg);
  const auto b = pred.predict(obs, plan, cfg);
  cfg.seed = 124;
  const auto c = pred.predict(obs, plan, cfg);
  for (std::size_t i = 0; i < a.tracks.size(); ++i) {
    EXPECT_EQ(a.tracks[i].states, b.tracks[i].states);
    EXPECT_EQ(a.tracks[i].accels, b.tracks[i].accels);
  }
  EXPECT_NE(a.tracks[0].accels, c.tracks[0].accels);
}

// Plans sharing a prefix get identical predictions over that prefix.
TEST(Predictor, PrefixConditioningDeterminism) {
  const double dt = 0.2;
  const int n = 20;
  const int split = 8;
  EgoGeometry g;
  ModelBasedPredictor pred(g, TrafficPolicyConfig{}, dt);
  const auto obs = two_lane_obs();

  auto plan_a = straight_plan(EgoState{0, 2, 8, 0, 0}, n, dt);
  auto plan_b = plan_a;
  for (int k = split; k <= n; ++k) {
    plan_b.states(1, k) = 3.5;  // diverges laterally after the split
  }

  PredictorConfig cfg;
  cfg.sigma_a = 0.7;
  cfg.seed = 5;
  const auto a = pred.predict(obs, plan_a, cfg);
  const auto b = pred.predict(obs, plan_b, cfg);
  for (std::size_t i = 0; i < a.tracks.size(); ++i) {
    EXPECT_EQ(a.tracks[i].states.leftCols(split + 1),
              b.tracks[i].states.leftCols(split + 1));
    EXPECT_EQ(a.tracks[i].accels.head(split), b.tracks[i].accels.head(split));
  }
  EXPECT_NE(a.tracks[0].states, b.tracks[0].states);
}

}  // namespace
}  // namespace ppdmpc
