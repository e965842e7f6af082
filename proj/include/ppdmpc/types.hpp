#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace ppdmpc {

using Vec2 = Eigen::Vector2d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat55 = Eigen::Matrix<double, 5, 5>;
using Mat52 = Eigen::Matrix<double, 5, 2>;

/// Tractor-trailer configuration. Position and speed refer to the
/// tractor-trailer joint in the inertial frame.
struct EgoState {
  double px = 0.0;      ///< longitudinal position [m]
  double py = 0.0;      ///< lateral position [m]
  double vx = 0.0;      ///< longitudinal speed [m/s]
  double theta1 = 0.0;  ///< tractor heading [rad]
  double theta2 = 0.0;  ///< trailer heading [rad]

  Vec5 vec() const {
    Vec5 v;
    v << px, py, vx, theta1, theta2;
    return v;
  }
  static EgoState from_vec(const Vec5& v) {
    return EgoState{v[0], v[1], v[2], v[3], v[4]};
  }
};

struct EgoControl {
  double delta = 0.0;  ///< steering angle [rad]
  double accel = 0.0;  ///< longitudinal acceleration, body frame [m/s^2]

  Vec2 vec() const { return Vec2(delta, accel); }
  static EgoControl from_vec(const Vec2& v) { return EgoControl{v[0], v[1]}; }
};

struct EgoGeometry {
  double tractor_wheelbase = 4.0;  ///< l1 [m]
  double trailer_wheelbase = 8.0;  ///< l2 [m]
  double width = 2.5;              ///< [m]
  double half_span = 1.25;         ///< max lateral half-span d_we [m]
  double length = 16.0;            ///< total combination length [m]

  // The constrained reference point sits at the hitch; the tractor occupies
  // one wheelbase ahead of it, the trailer the rest behind.
  double front_extent() const { return tractor_wheelbase; }
  double rear_extent() const { return length - tractor_wheelbase; }
};

/// Surrounding vehicle: bicycle state without a trailer. Steering is zero in
/// all studied scenarios, so heading stays at its initial value.
struct TrafficVehicleState {
  double px = 0.0;
  double py = 0.0;
  double vx = 0.0;
  double heading = 0.0;
  double width = 2.0;
  double length = 5.0;
  int lane = 0;  ///< 0 = rightmost
};

/// Per-vehicle behavioral parameters (the randomized phi vector).
struct TrafficParams {
  double v_ref = 8.333;         ///< reference speed [m/s]
  double headway_gain = 0.5;    ///< gain on speed errors
  double gap_gain = 0.3;        ///< gain on gap errors
  double cooperativeness = 0.5; ///< in [0, 1]
  double a_min = -4.0;
  double a_max = 4.0;
};

struct HorizonConfig {
  int steps = 25;   ///< N
  double dt = 0.2;  ///< [s]
};

/// Horizon-indexed ego plan: states over k = 0..N, controls over k = 0..N-1.
struct EgoTrajectory {
  Eigen::MatrixXd states;    ///< 5 x (N+1)
  Eigen::MatrixXd controls;  ///< 2 x N

  int steps() const { return static_cast<int>(controls.cols()); }

  static EgoTrajectory zeros(int n) {
    EgoTrajectory t;
    t.states = Eigen::MatrixXd::Zero(5, n + 1);
    t.controls = Eigen::MatrixXd::Zero(2, n);
    return t;
  }

  EgoState state(int k) const { return EgoState::from_vec(states.col(k)); }
  EgoControl control(int k) const { return EgoControl::from_vec(controls.col(k)); }
};

/// One surrounding vehicle's predicted motion over the horizon.
struct PredictedTrack {
  Eigen::MatrixXd states;  ///< 4 x (N+1): px, py, vx, heading
  Eigen::VectorXd accels;  ///< N: acceleration producing state k+1
};

/// Predicted trajectories of all surrounding vehicles, conditioned on one
/// ego plan.
struct PredictionBundle {
  std::vector<PredictedTrack> tracks;

  int steps() const {
    return tracks.empty() ? 0 : static_cast<int>(tracks[0].accels.size());
  }
};

enum class Maneuver { keep_lane, change_left, change_right };

inline const char* to_string(Maneuver m) {
  switch (m) {
    case Maneuver::keep_lane: return "nc";
    case Maneuver::change_left: return "lc";
    case Maneuver::change_right: return "rc";
  }
  return "?";
}

inline bool maneuver_from_string(const std::string& s, Maneuver& out) {
  if (s == "nc") { out = Maneuver::keep_lane; return true; }
  if (s == "lc") { out = Maneuver::change_left; return true; }
  if (s == "rc") { out = Maneuver::change_right; return true; }
  return false;
}

}  // namespace ppdmpc
