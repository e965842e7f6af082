#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "ppdmpc/types.hpp"

namespace ppdmpc {

/// Hard physical limit on surrounding-vehicle acceleration [m/s^2], applied
/// both in simulation and in the predictor.
inline constexpr double kTrafficAccelLimit = 4.0;

/// Kinematic update with zero steering. Speed is floored at zero: surrounding
/// vehicles do not reverse.
inline TrafficVehicleState traffic_step(TrafficVehicleState v, double accel,
                                        double dt) {
  const double a =
      std::clamp(accel, -kTrafficAccelLimit, kTrafficAccelLimit);
  v.px += v.vx * dt + 0.5 * a * dt * dt;
  v.vx = std::max(0.0, v.vx + a * dt);
  return v;
}

/// Shared constants of the behavioral policy (per-vehicle variation lives in
/// TrafficParams).
struct TrafficPolicyConfig {
  double standstill_gap = 2.0;   ///< desired bumper gap at rest [m]
  double time_headway = 1.0;     ///< desired gap growth per m/s [s]
  double yield_gain = 2.0;       ///< peak cooperative deceleration [m/s^2]
  double accel_yield_factor = 0.5;  ///< forward-opening share of yield_gain
  double coop_range = 50.0;      ///< longitudinal reach of cooperation [m]
  double lane_width = 3.5;
  std::vector<double> lane_centers = {0.0, 3.5, 7.0};  ///< right to left
};

/// Index of the nearest vehicle ahead of `i` in its own lane, if any.
inline std::optional<std::size_t> find_leader(
    const std::vector<TrafficVehicleState>& all, std::size_t i) {
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < all.size(); ++j) {
    if (j == i || all[j].lane != all[i].lane) continue;
    if (all[j].px <= all[i].px) continue;
    if (!best || all[j].px < all[*best].px) best = j;
  }
  return best;
}

/// How far the ego footprint has pushed toward lane center `lane_y`, in
/// [0, 1]. Zero while the ego is fully outside the lane, one when centered.
inline double lane_encroachment(double ego_py, double ego_half_span,
                                double lane_y, double lane_width) {
  const double reach = lane_width / 2.0 + ego_half_span;
  const double d = std::abs(ego_py - lane_y);
  return std::clamp((reach - d) / reach, 0.0, 1.0);
}

/// Acceleration command for every surrounding vehicle.
///
/// Three ingredients per vehicle: reference-speed tracking, gap keeping
/// behind the same-lane leader (desired gap = standstill + headway * v), and
/// a cooperation term that yields to an ego encroaching on the vehicle's lane.
/// The ego enters only through the cooperation term, so vehicles with zero
/// cooperativeness ignore it entirely.
inline std::vector<double> traffic_policy(
    const std::vector<TrafficVehicleState>& all,
    const std::vector<TrafficParams>& params, const EgoState& ego_point,
    double ego_half_span, const TrafficPolicyConfig& cfg) {
  std::vector<double> out(all.size(), 0.0);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const TrafficVehicleState& v = all[i];
    const TrafficParams& phi = params[i];

    const double a_free = phi.headway_gain * (phi.v_ref - v.vx);

    double a_follow = std::numeric_limits<double>::infinity();
    if (const auto lead = find_leader(all, i)) {
      const TrafficVehicleState& l = all[*lead];
      const double gap =
          l.px - v.px - 0.5 * (l.length + v.length);
      const double desired =
          cfg.standstill_gap + cfg.time_headway * v.vx;
      a_follow = phi.headway_gain * (l.vx - v.vx) +
                 phi.gap_gain * (gap - desired);
    }
    double a = std::min(a_free, a_follow);

    // Cooperation: followers brake to open the gap, leaders pull away.
    const double lane_y = cfg.lane_centers[static_cast<std::size_t>(v.lane)];
    const double encroach = lane_encroachment(ego_point.py, ego_half_span,
                                              lane_y, cfg.lane_width);
    if (phi.cooperativeness > 0.0 && encroach > 0.0) {
      const double ahead = ego_point.px - v.px;
      if (ahead >= 0.0 && ahead <= cfg.coop_range) {
        const double w = 1.0 - ahead / cfg.coop_range;
        a -= phi.cooperativeness * cfg.yield_gain * encroach * w;
      } else if (ahead < 0.0 && -ahead <= cfg.coop_range) {
        const double w = 1.0 + ahead / cfg.coop_range;
        const double boost = phi.cooperativeness * cfg.accel_yield_factor *
                             cfg.yield_gain * encroach * w;
        a = std::min(a + boost, a_follow);
      }
    }

    out[i] = std::clamp(a, phi.a_min, phi.a_max);
  }
  return out;
}

}  // namespace ppdmpc
