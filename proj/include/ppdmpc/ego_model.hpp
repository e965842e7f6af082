#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ppdmpc/types.hpp"

namespace ppdmpc {

/// Continuous-time kinematic bicycle model extended with a trailer.
///
/// xdot = [ vx,
///          vx * tan(theta1),
///          accel * cos(theta1),
///          vx * tan(delta) / (l1 * cos(theta1)),
///          vx * sin(theta1 - theta2) / (l2 * cos(theta1)) ]
inline Vec5 ego_derivative(const EgoState& x, const EgoControl& u,
                           const EgoGeometry& g) {
  if (std::abs(x.theta1) >= std::numbers::pi / 2.0) {
    throw std::domain_error("ego_derivative: |theta1| >= pi/2");
  }
  const double c1 = std::cos(x.theta1);
  Vec5 d;
  d[0] = x.vx;
  d[1] = x.vx * std::tan(x.theta1);
  d[2] = u.accel * c1;
  d[3] = x.vx * std::tan(u.delta) / (g.tractor_wheelbase * c1);
  d[4] = x.vx * std::sin(x.theta1 - x.theta2) / (g.trailer_wheelbase * c1);
  return d;
}

/// Partials of ego_derivative w.r.t. state and control.
inline void ego_derivative_jacobians(const EgoState& x, const EgoControl& u,
                                     const EgoGeometry& g, Mat55& dfdx,
                                     Mat52& dfdu) {
  const double c1 = std::cos(x.theta1);
  const double s1 = std::sin(x.theta1);
  const double cd = std::cos(u.delta);
  const double td = std::tan(u.delta);
  const double s12 = std::sin(x.theta1 - x.theta2);
  const double c12 = std::cos(x.theta1 - x.theta2);
  const double l1 = g.tractor_wheelbase;
  const double l2 = g.trailer_wheelbase;

  dfdx.setZero();
  dfdx(0, 2) = 1.0;
  dfdx(1, 2) = std::tan(x.theta1);
  dfdx(1, 3) = x.vx / (c1 * c1);
  dfdx(2, 3) = -u.accel * s1;
  dfdx(3, 2) = td / (l1 * c1);
  dfdx(3, 3) = x.vx * td * s1 / (l1 * c1 * c1);
  dfdx(4, 2) = s12 / (l2 * c1);
  dfdx(4, 3) = x.vx * std::cos(x.theta2) / (l2 * c1 * c1);
  dfdx(4, 4) = -x.vx * c12 / (l2 * c1);

  dfdu.setZero();
  dfdu(2, 1) = c1;
  dfdu(3, 0) = x.vx / (l1 * c1 * cd * cd);
}

/// One explicit RK4 step of the ego dynamics.
inline EgoState ego_step(const EgoState& x, const EgoControl& u,
                         const EgoGeometry& g, double dt) {
  const Vec5 x0 = x.vec();
  const Vec5 k1 = ego_derivative(x, u, g);
  const Vec5 k2 = ego_derivative(EgoState::from_vec(x0 + 0.5 * dt * k1), u, g);
  const Vec5 k3 = ego_derivative(EgoState::from_vec(x0 + 0.5 * dt * k2), u, g);
  const Vec5 k4 = ego_derivative(EgoState::from_vec(x0 + dt * k3), u, g);
  return EgoState::from_vec(x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

struct EgoStepJacobians {
  Mat55 a;  ///< d x(k+1) / d x(k)
  Mat52 b;  ///< d x(k+1) / d u(k)
};

/// Exact Jacobians of the RK4 step obtained by differentiating each stage.
inline EgoStepJacobians ego_step_jacobians(const EgoState& x,
                                           const EgoControl& u,
                                           const EgoGeometry& g, double dt) {
  const Vec5 x0 = x.vec();

  Mat55 a1, a2, a3, a4;
  Mat52 b1, b2, b3, b4;

  const Vec5 k1 = ego_derivative(x, u, g);
  ego_derivative_jacobians(x, u, g, a1, b1);

  const EgoState x2 = EgoState::from_vec(x0 + 0.5 * dt * k1);
  const Vec5 k2 = ego_derivative(x2, u, g);
  ego_derivative_jacobians(x2, u, g, a2, b2);

  const EgoState x3 = EgoState::from_vec(x0 + 0.5 * dt * k2);
  const Vec5 k3 = ego_derivative(x3, u, g);
  ego_derivative_jacobians(x3, u, g, a3, b3);

  const EgoState x4 = EgoState::from_vec(x0 + dt * k3);
  ego_derivative_jacobians(x4, u, g, a4, b4);

  const Mat55 id = Mat55::Identity();
  const Mat55 dk1 = a1;
  const Mat55 dk2 = a2 * (id + 0.5 * dt * dk1);
  const Mat55 dk3 = a3 * (id + 0.5 * dt * dk2);
  const Mat55 dk4 = a4 * (id + dt * dk3);

  const Mat52 db1 = b1;
  const Mat52 db2 = a2 * (0.5 * dt * db1) + b2;
  const Mat52 db3 = a3 * (0.5 * dt * db2) + b3;
  const Mat52 db4 = a4 * (dt * db3) + b4;

  EgoStepJacobians j;
  j.a = id + (dt / 6.0) * (dk1 + 2.0 * dk2 + 2.0 * dk3 + dk4);
  j.b = (dt / 6.0) * (db1 + 2.0 * db2 + 2.0 * db3 + db4);
  return j;
}

/// Rolls controls forward from x0 with ego_step; returns states 0..N.
inline Eigen::MatrixXd ego_rollout(const EgoState& x0,
                                   const Eigen::MatrixXd& controls,
                                   const EgoGeometry& g, double dt) {
  const int n = static_cast<int>(controls.cols());
  Eigen::MatrixXd states(5, n + 1);
  EgoState x = x0;
  states.col(0) = x.vec();
  for (int k = 0; k < n; ++k) {
    x = ego_step(x, EgoControl::from_vec(controls.col(k)), g, dt);
    states.col(k + 1) = x.vec();
  }
  return states;
}

}  // namespace ppdmpc
