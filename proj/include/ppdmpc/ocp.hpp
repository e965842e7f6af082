#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <utility>
#include <vector>

#include "ppdmpc/constraints.hpp"
#include "ppdmpc/ego_model.hpp"
#include "ppdmpc/riccati.hpp"
#include "ppdmpc/types.hpp"

namespace ppdmpc {

/// Weights of the per-controller objective. Only lateral position and speed
/// are tracked in the state; slack violations carry a penalty several orders
/// above the tracking weights.
struct ObjectiveWeights {
  double lateral = 0.5;      ///< q_y
  double speed = 1.0;        ///< q_v
  double steer = 20.0;       ///< on the steering angle
  double accel = 0.1;        ///< on the longitudinal acceleration
  double steer_rate = 50.0;  ///< on steering differences
  double accel_rate = 1.0;   ///< on acceleration differences
  double slack = 1e4;        ///< q_s
  Mat55 terminal = Mat55::Zero();  ///< P

  Mat55 q() const {
    Mat55 m = Mat55::Zero();
    m(1, 1) = lateral;
    m(2, 2) = speed;
    return m;
  }
  Eigen::Matrix2d r() const {  // control order [delta, accel]
    Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
    m(0, 0) = steer;
    m(1, 1) = accel;
    return m;
  }
  Eigen::Matrix2d rd() const {
    Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
    m(0, 0) = steer_rate;
    m(1, 1) = accel_rate;
    return m;
  }
};

struct ReferenceSignal {
  double py_ref = 3.5;        ///< target lane center [m]
  double v_ref = 30.0 / 3.6;  ///< target speed [m/s]

  Vec5 state() const {
    Vec5 x;
    x << 0.0, py_ref, v_ref, 0.0, 0.0;
    return x;
  }
};

struct EgoBounds {
  double delta_max = 0.5;
  double accel_min = -4.0;
  double accel_max = 2.0;
  double vx_min = 0.0;
  double vx_max = 25.0;
};

struct TerminalWeight {
  Mat55 p = Mat55::Zero();
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

/// Terminal matrix from the infinite-horizon LQR of the dynamics linearized
/// at the reference, via the DARE fixed point started at Q. Falls back to
/// the stage weight if the iteration does not converge.
inline TerminalWeight terminal_weight(const ReferenceSignal& refs,
                                      const EgoGeometry& g,
                                      const ObjectiveWeights& w,
                                      const HorizonConfig& h) {
  const EgoState xr = EgoState::from_vec(refs.state());
  const EgoControl ur{};
  const EgoStepJacobians j = ego_step_jacobians(xr, ur, g, h.dt);
  const DareResult res = dare_fixed_point(j.a, j.b, w.q(), w.r());
  TerminalWeight out;
  out.converged = res.converged;
  out.iterations = res.iterations;
  out.residual = res.residual;
  out.p = res.converged ? Mat55(res.p) : Mat55(w.q());
  return out;
}

/// Primal point of one controller's NLP.
struct PrimalPoint {
  Eigen::MatrixXd x;  ///< 5 x (N+1)
  Eigen::MatrixXd u;  ///< 2 x N
  Eigen::MatrixXd s;  ///< Mc x (N+1), zero rows when Mc = 0

  static PrimalPoint zeros(int n, int mc) {
    PrimalPoint p;
    p.x = Eigen::MatrixXd::Zero(5, n + 1);
    p.u = Eigen::MatrixXd::Zero(2, n);
    p.s = Eigen::MatrixXd::Zero(mc, n + 1);
    return p;
  }
};

/// One inequality row of the stacked constraint system.
struct IneqRow {
  enum class Kind {
    headway,   ///< longitudinal gap behind the nc leader
    boundary,  ///< smooth lateral bound around one vehicle
    lane_lo,
    lane_hi,
    delta_lo,
    delta_hi,
    accel_lo,
    accel_hi,
    vx_lo,
    vx_hi,
    slack_nonneg,
  };
  Kind kind;
  int k = 0;      ///< horizon index the row references
  int entry = 0;  ///< constrained-vehicle slot for vehicle/slack rows
};

/// Sparse gradient of one inequality row: at most one state column, one
/// control column and one slack element.
struct RowGradient {
  int x_k = -1;
  Vec5 dx = Vec5::Zero();
  int u_k = -1;
  Vec2 du = Vec2::Zero();
  int s_entry = -1;
  int s_k = -1;
  double ds = 0.0;
};

/// The smooth per-controller optimal control problem with a fixed
/// prediction: decision variables (X, U, Lambda), multiple-shooting dynamics
/// defects, and stacked inequality rows. The predictor equation is
/// deliberately absent — fixing the prediction is what turns the coupled
/// problem into a plain NLP.
struct NlpInstance {
  Maneuver tag = Maneuver::keep_lane;
  EgoState x0;
  HorizonConfig horizon;
  EgoGeometry geometry;
  SafetyParams safety;
  PredictionBundle prediction;
  ConstraintSet cset;
  ObjectiveWeights weights;
  ReferenceSignal refs;
  EgoBounds bounds;
  double corridor_lo = 0.0;
  double corridor_hi = 7.0;
  std::vector<IneqRow> rows;

  int n() const { return horizon.steps; }
  int mc() const { return static_cast<int>(cset.entries.size()); }
  int num_vars() const { return 5 * (n() + 1) + 2 * n() + mc() * (n() + 1); }
  int num_eq() const { return 5 * (n() + 1); }
  int num_ineq() const { return static_cast<int>(rows.size()); }

  TrafficVehicleState predicted_vehicle(int entry, int k) const {
    const auto& e = cset.entries[static_cast<std::size_t>(entry)];
    const auto& track = prediction.tracks[static_cast<std::size_t>(e.vehicle)];
    TrafficVehicleState v;
    v.px = track.states(0, k);
    v.py = track.states(1, k);
    v.vx = track.states(2, k);
    v.heading = track.states(3, k);
    return v;
  }
};

inline void build_rows(NlpInstance& inst) {
  inst.rows.clear();
  const int n = inst.n();
  const int mc = inst.mc();
  // Vehicle rows run k = 1..N: the pinned initial state is not a decision,
  // and the terminal row is what gives the terminal slack its meaning.
  for (int e = 0; e < mc; ++e) {
    for (int k = 1; k <= n; ++k) {
      inst.rows.push_back({inst.tag == Maneuver::keep_lane
                               ? IneqRow::Kind::headway
                               : IneqRow::Kind::boundary,
                           k, e});
    }
  }
  for (int k = 1; k <= n; ++k) {
    inst.rows.push_back({IneqRow::Kind::lane_lo, k, 0});
    inst.rows.push_back({IneqRow::Kind::lane_hi, k, 0});
  }
  for (int k = 0; k < n; ++k) {
    inst.rows.push_back({IneqRow::Kind::delta_lo, k, 0});
    inst.rows.push_back({IneqRow::Kind::delta_hi, k, 0});
    inst.rows.push_back({IneqRow::Kind::accel_lo, k, 0});
    inst.rows.push_back({IneqRow::Kind::accel_hi, k, 0});
  }
  for (int k = 1; k <= n; ++k) {
    inst.rows.push_back({IneqRow::Kind::vx_lo, k, 0});
    inst.rows.push_back({IneqRow::Kind::vx_hi, k, 0});
  }
  for (int e = 0; e < mc; ++e) {
    for (int k = 0; k <= n; ++k) {
      inst.rows.push_back({IneqRow::Kind::slack_nonneg, k, e});
    }
  }
}

/// Evaluate one inequality row. Negative is feasible.
inline double eval_row(const NlpInstance& inst, const IneqRow& row,
                       const PrimalPoint& p) {
  switch (row.kind) {
    case IneqRow::Kind::headway: {
      const EgoState ego = EgoState::from_vec(p.x.col(row.k));
      return lane_keep_residual(ego, inst.predicted_vehicle(row.entry, row.k),
                                inst.safety, inst.geometry,
                                p.s(row.entry, row.k));
    }
    case IneqRow::Kind::boundary: {
      const EgoState ego = EgoState::from_vec(p.x.col(row.k));
      const auto& e = inst.cset.entries[static_cast<std::size_t>(row.entry)];
      return lane_change_residual(ego,
                                  inst.predicted_vehicle(row.entry, row.k),
                                  e.boundary, inst.geometry,
                                  p.s(row.entry, row.k));
    }
    case IneqRow::Kind::lane_lo:
      return inst.corridor_lo - p.x(1, row.k);
    case IneqRow::Kind::lane_hi:
      return p.x(1, row.k) - inst.corridor_hi;
    case IneqRow::Kind::delta_lo:
      return -inst.bounds.delta_max - p.u(0, row.k);
    case IneqRow::Kind::delta_hi:
      return p.u(0, row.k) - inst.bounds.delta_max;
    case IneqRow::Kind::accel_lo:
      return inst.bounds.accel_min - p.u(1, row.k);
    case IneqRow::Kind::accel_hi:
      return p.u(1, row.k) - inst.bounds.accel_max;
    case IneqRow::Kind::vx_lo:
      return inst.bounds.vx_min - p.x(2, row.k);
    case IneqRow::Kind::vx_hi:
      return p.x(2, row.k) - inst.bounds.vx_max;
    case IneqRow::Kind::slack_nonneg:
      return -p.s(row.entry, row.k);
  }
  return 0.0;
}

inline Eigen::VectorXd eval_inequalities(const NlpInstance& inst,
                                         const PrimalPoint& p) {
  Eigen::VectorXd g(inst.num_ineq());
  for (int i = 0; i < inst.num_ineq(); ++i) {
    g[i] = eval_row(inst, inst.rows[static_cast<std::size_t>(i)], p);
  }
  return g;
}

inline RowGradient row_gradient(const NlpInstance& inst, const IneqRow& row,
                                const PrimalPoint& p) {
  RowGradient g;
  switch (row.kind) {
    case IneqRow::Kind::headway:
      g.x_k = row.k;
      g.dx[0] = 1.0;
      g.dx[2] = inst.safety.time_headway;
      g.s_entry = row.entry;
      g.s_k = row.k;
      g.ds = -1.0;
      break;
    case IneqRow::Kind::boundary: {
      const EgoState ego = EgoState::from_vec(p.x.col(row.k));
      const auto& e = inst.cset.entries[static_cast<std::size_t>(row.entry)];
      const double slope = smooth_boundary_slope(
          ego, inst.predicted_vehicle(row.entry, row.k), e.boundary);
      g.x_k = row.k;
      g.dx[0] = e.boundary.beta * slope;
      g.dx[1] = -e.boundary.beta;
      g.s_entry = row.entry;
      g.s_k = row.k;
      g.ds = -1.0;
      break;
    }
    case IneqRow::Kind::lane_lo:
      g.x_k = row.k;
      g.dx[1] = -1.0;
      break;
    case IneqRow::Kind::lane_hi:
      g.x_k = row.k;
      g.dx[1] = 1.0;
      break;
    case IneqRow::Kind::delta_lo:
      g.u_k = row.k;
      g.du[0] = -1.0;
      break;
    case IneqRow::Kind::delta_hi:
      g.u_k = row.k;
      g.du[0] = 1.0;
      break;
    case IneqRow::Kind::accel_lo:
      g.u_k = row.k;
      g.du[1] = -1.0;
      break;
    case IneqRow::Kind::accel_hi:
      g.u_k = row.k;
      g.du[1] = 1.0;
      break;
    case IneqRow::Kind::vx_lo:
      g.x_k = row.k;
      g.dx[2] = -1.0;
      break;
    case IneqRow::Kind::vx_hi:
      g.x_k = row.k;
      g.dx[2] = 1.0;
      break;
    case IneqRow::Kind::slack_nonneg:
      g.s_entry = row.entry;
      g.s_k = row.k;
      g.ds = -1.0;
      break;
  }
  return g;
}

/// Multiple-shooting defects: x(0) - x0 and x(k+1) - g(x(k), u(k)).
inline Eigen::VectorXd eval_defects(const NlpInstance& inst,
                                    const PrimalPoint& p) {
  const int n = inst.n();
  Eigen::VectorXd d(5 * (n + 1));
  d.segment<5>(0) = p.x.col(0) - inst.x0.vec();
  for (int k = 0; k < n; ++k) {
    const EgoState xk = EgoState::from_vec(p.x.col(k));
    const EgoControl uk = EgoControl::from_vec(p.u.col(k));
    d.segment<5>(5 * (k + 1)) =
        p.x.col(k + 1) -
        ego_step(xk, uk, inst.geometry, inst.horizon.dt).vec();
  }
  return d;
}

/// Objective of Eq. form: terminal + stage tracking + slack penalties +
/// control tracking + control differences. All references use a zero control.
inline double objective_value(const NlpInstance& inst, const PrimalPoint& p) {
  const int n = inst.n();
  if (p.x.cols() != n + 1 || p.u.cols() != n ||
      (inst.mc() > 0 && (p.s.rows() != inst.mc() || p.s.cols() != n + 1))) {
    throw std::invalid_argument("objective_value: dimension mismatch");
  }
  const Vec5 xr = inst.refs.state();
  const Mat55 q = inst.weights.q();
  const Eigen::Matrix2d r = inst.weights.r();
  const Eigen::Matrix2d rd = inst.weights.rd();

  double f = 0.0;
  const Vec5 en = p.x.col(n) - xr;
  f += en.dot(inst.weights.terminal * en);
  for (int k = 0; k < n; ++k) {
    const Vec5 e = p.x.col(k) - xr;
    f += e.dot(q * e);
    const Vec2 u = p.u.col(k);
    f += u.dot(r * u);
  }
  for (int k = 0; k + 1 < n; ++k) {
    const Vec2 du = p.u.col(k + 1) - p.u.col(k);
    f += du.dot(rd * du);
  }
  f += inst.weights.slack * p.s.squaredNorm();
  return f;
}

/// Gradient of the objective in the flat layout [vec X; vec U; vec S]
/// (column-major blocks).
inline Eigen::VectorXd objective_gradient(const NlpInstance& inst,
                                          const PrimalPoint& p) {
  const int n = inst.n();
  const int mc = inst.mc();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(inst.num_vars());
  const Vec5 xr = inst.refs.state();
  const Mat55 q = inst.weights.q();
  const Eigen::Matrix2d r = inst.weights.r();
  const Eigen::Matrix2d rd = inst.weights.rd();

  for (int k = 0; k < n; ++k) {
    g.segment<5>(5 * k) = 2.0 * (q * (p.x.col(k) - xr));
  }
  g.segment<5>(5 * n) = 2.0 * (inst.weights.terminal * (p.x.col(n) - xr));

  const int uoff = 5 * (n + 1);
  for (int k = 0; k < n; ++k) {
    Vec2 gu = 2.0 * (r * p.u.col(k));
    if (k > 0) gu += 2.0 * (rd * (p.u.col(k) - p.u.col(k - 1)));
    if (k + 1 < n) gu -= 2.0 * (rd * (p.u.col(k + 1) - p.u.col(k)));
    g.segment<2>(uoff + 2 * k) = gu;
  }

  const int soff = uoff + 2 * n;
  for (int k = 0; k <= n; ++k) {
    for (int e = 0; e < mc; ++e) {
      g[soff + k * mc + e] = 2.0 * inst.weights.slack * p.s(e, k);
    }
  }
  return g;
}

/// Flat layout [vec X; vec U; vec S] used by the solver and the gradient.
inline Eigen::VectorXd pack_point(const NlpInstance& inst,
                                  const PrimalPoint& p) {
  const int n = inst.n();
  const int mc = inst.mc();
  Eigen::VectorXd z(inst.num_vars());
  for (int k = 0; k <= n; ++k) z.segment<5>(5 * k) = p.x.col(k);
  for (int k = 0; k < n; ++k) z.segment<2>(5 * (n + 1) + 2 * k) = p.u.col(k);
  const int soff = 5 * (n + 1) + 2 * n;
  for (int k = 0; k <= n; ++k)
    for (int e = 0; e < mc; ++e) z[soff + k * mc + e] = p.s(e, k);
  return z;
}

inline PrimalPoint unpack_point(const NlpInstance& inst,
                                const Eigen::VectorXd& z) {
  const int n = inst.n();
  const int mc = inst.mc();
  PrimalPoint p = PrimalPoint::zeros(n, mc);
  for (int k = 0; k <= n; ++k) p.x.col(k) = z.segment<5>(5 * k);
  for (int k = 0; k < n; ++k) p.u.col(k) = z.segment<2>(5 * (n + 1) + 2 * k);
  const int soff = 5 * (n + 1) + 2 * n;
  for (int k = 0; k <= n; ++k)
    for (int e = 0; e < mc; ++e) p.s(e, k) = z[soff + k * mc + e];
  return p;
}

/// Initial point: roll the controls out from x0 and open each slack just far
/// enough that its vehicle rows start feasible.
inline PrimalPoint make_primal(const NlpInstance& inst,
                               const Eigen::MatrixXd& states,
                               const Eigen::MatrixXd& controls) {
  PrimalPoint p = PrimalPoint::zeros(inst.n(), inst.mc());
  p.x = states;
  p.u = controls;
  for (const auto& row : inst.rows) {
    if (row.kind != IneqRow::Kind::headway &&
        row.kind != IneqRow::Kind::boundary) {
      continue;
    }
    const double raw = eval_row(inst, row, p);  // slack still zero
    if (raw > 0.0) {
      p.s(row.entry, row.k) = std::max(p.s(row.entry, row.k), raw);
    }
  }
  return p;
}

struct OcpConfig {
  HorizonConfig horizon;
  EgoGeometry geometry;
  SafetyParams safety;
  ObjectiveWeights weights;  ///< terminal entry is overwritten per controller
  EgoBounds bounds;
  double v_ref = 30.0 / 3.6;
  double constraint_window = 60.0;
  double lateral_margin = 0.25;
  double boundary_sharpness = 0.5;
};

/// Assemble the per-controller NLP around the current state, a fixed
/// prediction, and the current traffic snapshot (used only to select
/// constrained vehicles and their bounding sides).
inline NlpInstance assemble_nlp(Maneuver tag, const EgoState& x0,
                                const PredictionBundle& pred,
                                const std::vector<TrafficVehicleState>& snapshot,
                                const OcpConfig& cfg) {
  if (pred.tracks.size() != snapshot.size()) {
    throw std::invalid_argument("assemble_nlp: prediction/snapshot mismatch");
  }
  if (!pred.tracks.empty() && pred.steps() != cfg.horizon.steps) {
    throw std::invalid_argument("assemble_nlp: horizon mismatch");
  }

  NlpInstance inst;
  inst.tag = tag;
  inst.x0 = x0;
  inst.horizon = cfg.horizon;
  inst.geometry = cfg.geometry;
  inst.safety = cfg.safety;
  inst.prediction = pred;
  inst.bounds = cfg.bounds;
  inst.cset = build_constraint_set(tag, x0, cfg.geometry, snapshot, cfg.safety,
                                   cfg.constraint_window, cfg.lateral_margin,
                                   cfg.boundary_sharpness);

  const int cur = nearest_lane(cfg.safety, x0.py);
  const int tgt = target_lane(cfg.safety, cur, tag);
  inst.refs.py_ref = cfg.safety.lane_centers[static_cast<std::size_t>(tgt)];
  inst.refs.v_ref = cfg.v_ref;
  const auto corridor = lane_corridor(cfg.safety, cfg.geometry, cur, tag);
  inst.corridor_lo = corridor.first;
  inst.corridor_hi = corridor.second;

  inst.weights = cfg.weights;
  inst.weights.terminal =
      terminal_weight(inst.refs, cfg.geometry, cfg.weights, cfg.horizon).p;

  build_rows(inst);
  return inst;
}

}  // namespace ppdmpc
