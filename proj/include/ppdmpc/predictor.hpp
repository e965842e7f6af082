#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ppdmpc/rng.hpp"
#include "ppdmpc/traffic_model.hpp"
#include "ppdmpc/types.hpp"

namespace ppdmpc {

struct PredictorConfig {
  double sigma_a = 0.1;   ///< std dev of acceleration noise [m/s^2]
  std::uint64_t seed = 0;
};

/// What the predictor observes at one planning instant. Past trajectories
/// are part of the interface for predictors that condition on history; the
/// model-based predictor ignores them.
struct Observations {
  std::vector<TrafficVehicleState> vehicles;
  std::vector<TrafficParams> params;
  std::vector<Eigen::MatrixXd> history;  ///< unused by ModelBasedPredictor
};

/// Anything that maps observations plus a candidate ego plan to predicted
/// surrounding-vehicle trajectories can stand in here, including learned
/// predictors.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual PredictionBundle predict(const Observations& obs,
                                   const EgoTrajectory& ego_plan,
                                   const PredictorConfig& cfg) const = 0;
};

/// Model-based predictor: repeatedly applies the ground-truth traffic policy
/// conditioned on the planned ego states, adding N(0, sigma_a) noise to each
/// acceleration before the physical +-4 m/s^2 clamp.
///
/// Noise is drawn once per (vehicle, step) through a counter-based generator,
/// so plans sharing a prefix receive identical draws over that prefix and a
/// zero sigma reproduces the ground-truth rollout exactly.
class ModelBasedPredictor : public Predictor {
 public:
  ModelBasedPredictor(EgoGeometry geometry, TrafficPolicyConfig policy,
                      double dt)
      : geometry_(geometry), policy_(std::move(policy)), dt_(dt) {}

  PredictionBundle predict(const Observations& obs,
                           const EgoTrajectory& ego_plan,
                           const PredictorConfig& cfg) const override {
    if (obs.vehicles.size() != obs.params.size()) {
      throw std::invalid_argument("predict: vehicles/params mismatch");
    }
    const int n = ego_plan.steps();
    if (ego_plan.states.cols() != n + 1) {
      throw std::invalid_argument("predict: ego plan horizon mismatch");
    }

    const std::size_t m = obs.vehicles.size();
    PredictionBundle bundle;
    bundle.tracks.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      bundle.tracks[i].states = Eigen::MatrixXd::Zero(4, n + 1);
      bundle.tracks[i].accels = Eigen::VectorXd::Zero(n);
    }

    std::vector<TrafficVehicleState> current = obs.vehicles;
    for (std::size_t i = 0; i < m; ++i) {
      write_state(bundle.tracks[i], 0, current[i]);
    }

    for (int k = 0; k < n; ++k) {
      const EgoState ego_point = ego_plan.state(k);
      const std::vector<double> accels = traffic_policy(
          current, obs.params, ego_point, geometry_.half_span, policy_);
      for (std::size_t i = 0; i < m; ++i) {
        const double noise =
            cfg.sigma_a *
            standard_normal(hash_combine(cfg.seed, static_cast<std::uint64_t>(i),
                                         static_cast<std::uint64_t>(k)));
        const double a = std::clamp(accels[i] + noise, -kTrafficAccelLimit,
                                    kTrafficAccelLimit);
        bundle.tracks[i].accels[k] = a;
        current[i] = traffic_step(current[i], a, dt_);
        write_state(bundle.tracks[i], k + 1, current[i]);
      }
    }
    return bundle;
  }

 private:
  static void write_state(PredictedTrack& t, int k,
                          const TrafficVehicleState& v) {
    t.states(0, k) = v.px;
    t.states(1, k) = v.py;
    t.states(2, k) = v.vx;
    t.states(3, k) = v.heading;
  }

  EgoGeometry geometry_;
  TrafficPolicyConfig policy_;
  double dt_ = 0.2;
};

}  // namespace ppdmpc
