#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ppdmpc/types.hpp"

namespace ppdmpc {

struct SafetyParams {
  double margin = 2.0;        ///< longitudinal distance margin d_s [m]
  double time_headway = 1.5;  ///< T_s [s]
  double lane_width = 3.5;
  std::vector<double> lane_centers = {0.0, 3.5, 7.0};  ///< right to left
};

inline int nearest_lane(const SafetyParams& p, double py) {
  int best = 0;
  double best_d = std::abs(py - p.lane_centers[0]);
  for (std::size_t i = 1; i < p.lane_centers.size(); ++i) {
    const double d = std::abs(py - p.lane_centers[i]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

/// Target lane index of a controller, clamped to the road.
inline int target_lane(const SafetyParams& p, int current, Maneuver j) {
  const int last = static_cast<int>(p.lane_centers.size()) - 1;
  switch (j) {
    case Maneuver::change_left: return std::min(current + 1, last);
    case Maneuver::change_right: return std::max(current - 1, 0);
    case Maneuver::keep_lane: break;
  }
  return current;
}

/// Longitudinal headway constraint behind a same-lane leader. Feasible iff
/// the returned value is negative; slack enters with relaxing sign.
inline double lane_keep_residual(const EgoState& ego,
                                 const TrafficVehicleState& lead_pred,
                                 const SafetyParams& p, const EgoGeometry& g,
                                 double slack) {
  return ego.px - lead_pred.px + g.tractor_wheelbase + p.margin +
         p.time_headway * ego.vx - slack;
}

/// Smooth lateral boundary around one predicted vehicle.
///
/// The two tanh terms cancel far from the vehicle (boundary = alpha3) and
/// saturate near it (boundary = alpha0 + alpha3 for positive offsets). For
/// an upper-side constraint the offsets alpha1/alpha2 are negative, which
/// turns the plateau into a dip of depth alpha0 over the same longitudinal
/// interval.
struct SmoothBoundaryParams {
  double alpha0 = 1.0;   ///< lateral scale [m], > 0
  double alpha1 = 0.0;   ///< rear extent offset [m]
  double alpha2 = 0.0;   ///< front extent offset [m]
  double alpha3 = 0.0;   ///< lateral shift [m]
  double beta = 1.0;     ///< +1: bound from below, -1: from above
  double sharpness = 0.5;  ///< tanh argument scale [1/m]
};

inline double smooth_boundary(const EgoState& ego,
                              const TrafficVehicleState& veh_pred,
                              const SmoothBoundaryParams& p) {
  const double d = ego.px - veh_pred.px;
  return 0.5 * p.alpha0 *
             (std::tanh(p.sharpness * (d + p.alpha1)) +
              std::tanh(p.sharpness * (-d + p.alpha2))) +
         p.alpha3;
}

/// d(smooth_boundary) / d(ego.px).
inline double smooth_boundary_slope(const EgoState& ego,
                                    const TrafficVehicleState& veh_pred,
                                    const SmoothBoundaryParams& p) {
  const double d = ego.px - veh_pred.px;
  const double t1 = std::tanh(p.sharpness * (d + p.alpha1));
  const double t2 = std::tanh(p.sharpness * (-d + p.alpha2));
  return 0.5 * p.alpha0 * p.sharpness * ((1.0 - t1 * t1) - (1.0 - t2 * t2));
}

/// Lateral collision constraint against one predicted vehicle. Feasible iff
/// negative; beta selects whether the boundary binds from below or above.
inline double lane_change_residual(const EgoState& ego,
                                   const TrafficVehicleState& veh_pred,
                                   const SmoothBoundaryParams& p,
                                   const EgoGeometry& g, double slack) {
  return p.beta * (smooth_boundary(ego, veh_pred, p) + g.half_span - ego.py) -
         slack;
}

/// Boundary parameters for vehicle `veh` as seen by controller `j`.
///
/// beta = +1 means the ego corridor passes above the vehicle. Far from the
/// vehicle the bound releases to half a lane beyond the vehicle's center;
/// across its longitudinal footprint the bound covers the vehicle's width
/// plus a lateral margin. The +d_we term of the residual is absorbed into
/// alpha3 so both sides clear the ego's half-span.
inline SmoothBoundaryParams make_boundary_params(
    const EgoGeometry& g, const TrafficVehicleState& veh, double beta,
    const SafetyParams& sp, double lateral_margin = 0.25,
    double sharpness = 0.5) {
  const double rear_span = g.front_extent() + 0.5 * veh.length + sp.margin;
  const double front_span = g.rear_extent() + 0.5 * veh.length + sp.margin;
  const double amp = 0.5 * veh.width + lateral_margin + 0.5 * sp.lane_width +
                     g.half_span;

  SmoothBoundaryParams p;
  p.beta = beta;
  p.sharpness = sharpness;
  p.alpha0 = amp;
  if (beta > 0.0) {
    p.alpha1 = rear_span;
    p.alpha2 = front_span;
    p.alpha3 = veh.py - 0.5 * sp.lane_width - g.half_span;
  } else {
    p.alpha1 = -front_span;
    p.alpha2 = -rear_span;
    p.alpha3 = veh.py + 0.5 * sp.lane_width - g.half_span;
  }
  return p;
}

/// Lateral corridor of controller `j`: the current lane for nc, current plus
/// target lane for lc/rc, shrunk by the ego half-span.
inline std::pair<double, double> lane_corridor(const SafetyParams& p,
                                               const EgoGeometry& g,
                                               int current_lane, Maneuver j) {
  const double slack = 0.5 * p.lane_width - g.half_span;
  const double yc = p.lane_centers[static_cast<std::size_t>(current_lane)];
  const double yt =
      p.lane_centers[static_cast<std::size_t>(target_lane(p, current_lane, j))];
  return {std::min(yc, yt) - slack, std::max(yc, yt) + slack};
}

/// Residual pair (lower, upper), both negative strictly inside the corridor.
inline std::pair<double, double> lane_limit_residuals(const EgoState& ego,
                                                      const SafetyParams& p,
                                                      const EgoGeometry& g,
                                                      Maneuver j) {
  const auto [lo, hi] = lane_corridor(p, g, nearest_lane(p, ego.py), j);
  return {lo - ego.py, ego.py - hi};
}

/// Which surrounding vehicles controller `j` constrains, with per-vehicle
/// boundary parameters for the lane-change controllers.
struct ConstraintEntry {
  int vehicle = -1;
  double beta = 1.0;
  SmoothBoundaryParams boundary;
};

struct ConstraintSet {
  Maneuver tag = Maneuver::keep_lane;
  std::vector<ConstraintEntry> entries;
};

/// nc: the nearest same-lane leader. lc/rc: every vehicle in the current or
/// target lane within `window` meters longitudinally, bounded from the side
/// the ego corridor passes on.
inline ConstraintSet build_constraint_set(
    Maneuver j, const EgoState& ego, const EgoGeometry& g,
    const std::vector<TrafficVehicleState>& vehicles, const SafetyParams& sp,
    double window = 60.0, double lateral_margin = 0.25,
    double sharpness = 0.5) {
  ConstraintSet set;
  set.tag = j;
  const int cur = nearest_lane(sp, ego.py);

  if (j == Maneuver::keep_lane) {
    int best = -1;
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      if (vehicles[i].lane != cur) continue;
      if (vehicles[i].px <= ego.px) continue;
      if (best < 0 || vehicles[i].px < vehicles[static_cast<std::size_t>(best)].px) {
        best = static_cast<int>(i);
      }
    }
    if (best >= 0) {
      set.entries.push_back(ConstraintEntry{best, 1.0, {}});
    }
    return set;
  }

  const int tgt = target_lane(sp, cur, j);
  if (tgt == cur) return set;  // no adjacent lane on that side
  const double mid = 0.5 * (sp.lane_centers[static_cast<std::size_t>(cur)] +
                            sp.lane_centers[static_cast<std::size_t>(tgt)]);
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    const TrafficVehicleState& v = vehicles[i];
    if (v.lane != cur && v.lane != tgt) continue;
    if (std::abs(v.px - ego.px) > window) continue;
    const double beta = v.py < mid ? 1.0 : -1.0;
    set.entries.push_back(
        ConstraintEntry{static_cast<int>(i), beta,
                        make_boundary_params(g, v, beta, sp, lateral_margin,
                                             sharpness)});
  }
  return set;
}

}  // namespace ppdmpc
