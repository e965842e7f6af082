#pragma once

#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ppdmpc/nlp_solver.hpp"
#include "ppdmpc/ocp.hpp"
#include "ppdmpc/predictor.hpp"

namespace ppdmpc {

struct DmpcConfig {
  int p_max = 15;
  double blend_pred = 0.2;  ///< w, prediction blend weight
  double blend_ego = 0.2;   ///< w_e, ego blend weight
  double epsilon = 5.0;     ///< loss tolerance
  /// Redraw predictor noise at every iterate p (seed derived from both the
  /// planning step and p); when false the whole step shares one draw.
  bool redraw_noise_per_iterate = true;
};

/// Both blend weights at their 1/(M+1) default.
inline DmpcConfig dmpc_defaults(int num_vehicles) {
  DmpcConfig cfg;
  cfg.blend_pred = 1.0 / (num_vehicles + 1);
  cfg.blend_ego = 1.0 / (num_vehicles + 1);
  return cfg;
}

/// Receding-horizon warm start: drop index 0, propagate the final state one
/// step under zero control, append a zero control.
inline EgoTrajectory shift(const EgoTrajectory& prev, const EgoGeometry& g,
                           double dt) {
  const int n = prev.steps();
  EgoTrajectory out = EgoTrajectory::zeros(n);
  out.states.leftCols(n) = prev.states.rightCols(n);
  if (n > 1) out.controls.leftCols(n - 1) = prev.controls.rightCols(n - 1);
  out.controls.col(n - 1).setZero();
  out.states.col(n) =
      ego_step(EgoState::from_vec(out.states.col(n - 1)), EgoControl{}, g, dt)
          .vec();
  return out;
}

inline EgoTrajectory convex_update(const EgoTrajectory& opt,
                                   const EgoTrajectory& prev, double weight) {
  if (opt.states.cols() != prev.states.cols() ||
      opt.controls.cols() != prev.controls.cols()) {
    throw std::invalid_argument("convex_update: shape mismatch");
  }
  EgoTrajectory out;
  out.states = weight * opt.states + (1.0 - weight) * prev.states;
  out.controls = weight * opt.controls + (1.0 - weight) * prev.controls;
  return out;
}

inline PredictionBundle convex_update(const PredictionBundle& fresh,
                                      const PredictionBundle& prev,
                                      double weight) {
  if (fresh.tracks.size() != prev.tracks.size()) {
    throw std::invalid_argument("convex_update: bundle size mismatch");
  }
  PredictionBundle out;
  out.tracks.resize(fresh.tracks.size());
  for (std::size_t i = 0; i < fresh.tracks.size(); ++i) {
    if (fresh.tracks[i].states.cols() != prev.tracks[i].states.cols()) {
      throw std::invalid_argument("convex_update: track shape mismatch");
    }
    out.tracks[i].states = weight * fresh.tracks[i].states +
                           (1.0 - weight) * prev.tracks[i].states;
    out.tracks[i].accels = weight * fresh.tracks[i].accels +
                           (1.0 - weight) * prev.tracks[i].accels;
  }
  return out;
}

/// One fixed-point iterate: the blended ego plan plus the blended prediction.
struct IterateState {
  EgoTrajectory ego;
  PredictionBundle prediction;
};

/// Sum of the four flattened 2-norms of consecutive-iterate deltas.
inline double dmpc_loss(const IterateState& curr, const IterateState& prev) {
  if (curr.prediction.tracks.size() != prev.prediction.tracks.size()) {
    throw std::invalid_argument("dmpc_loss: bundle size mismatch");
  }
  double pred_states = 0.0;
  double pred_accels = 0.0;
  for (std::size_t i = 0; i < curr.prediction.tracks.size(); ++i) {
    pred_states +=
        (curr.prediction.tracks[i].states - prev.prediction.tracks[i].states)
            .squaredNorm();
    pred_accels +=
        (curr.prediction.tracks[i].accels - prev.prediction.tracks[i].accels)
            .squaredNorm();
  }
  return std::sqrt(pred_states) + std::sqrt(pred_accels) +
         (curr.ego.states - prev.ego.states).norm() +
         (curr.ego.controls - prev.ego.controls).norm();
}

enum class DmpcTermination { epsilon, loss_increase, iteration_limit, solver_failure };

inline const char* to_string(DmpcTermination t) {
  switch (t) {
    case DmpcTermination::epsilon: return "epsilon";
    case DmpcTermination::loss_increase: return "loss-increase";
    case DmpcTermination::iteration_limit: return "iteration-limit";
    case DmpcTermination::solver_failure: return "solver-failure";
  }
  return "?";
}

struct IterateRecord {
  int p = 0;
  double loss = 0.0;
  double cost = 0.0;
  NlpStatus status = NlpStatus::converged;
  bool accepted = true;  ///< false for the iterate rejected by a loss increase
};

struct DmpcResult {
  bool ok = false;  ///< false when no solve succeeded
  NlpSolution solution;  ///< always an unblended solver output
  int iterations = 0;    ///< number of NLP solves performed
  DmpcTermination termination = DmpcTermination::solver_failure;
  std::vector<IterateRecord> trace;

  EgoTrajectory plan() const {
    EgoTrajectory t;
    t.states = solution.point.x;
    t.controls = solution.point.u;
    return t;
  }
};

inline std::uint64_t iterate_seed(std::uint64_t step_seed, int p,
                                  const DmpcConfig& cfg) {
  return cfg.redraw_noise_per_iterate
             ? hash_combine(step_seed, static_cast<std::uint64_t>(p))
             : step_seed;
}

/// The coupled prediction-planning loop for one controller: solve the smooth
/// NLP against the current prediction, blend the ego iterate, re-predict
/// conditioned on it, blend the prediction, and continue while the loss
/// decreases. The returned plan is always a solver output, never a blend —
/// blends only feed the predictor and the loss.
inline DmpcResult dmpc_iterate(Maneuver tag, const EgoState& x0,
                               const Observations& obs,
                               const Predictor& predictor, double sigma,
                               std::uint64_t step_seed,
                               const EgoTrajectory& warm,
                               const DmpcConfig& dcfg, const OcpConfig& ocfg,
                               const SolverConfig& scfg) {
  DmpcResult out;

  PredictorConfig pcfg;
  pcfg.sigma_a = sigma;
  pcfg.seed = iterate_seed(step_seed, 0, dcfg);

  IterateState iterate;
  iterate.ego = warm;
  iterate.prediction = predictor.predict(obs, warm, pcfg);

  double loss_prev = std::numeric_limits<double>::infinity();
  std::optional<NlpSolution> star_prev;   // solver output of the previous pass
  std::optional<PrimalPoint> warm_point;

  for (int p = 0; p < dcfg.p_max; ++p) {
    const NlpInstance inst =
        assemble_nlp(tag, x0, iterate.prediction, obs.vehicles, ocfg);
    if (!warm_point.has_value()) {
      warm_point = make_primal(inst, iterate.ego.states, iterate.ego.controls);
    } else {
      // Re-open the slacks for the new prediction.
      *warm_point = make_primal(inst, warm_point->x, warm_point->u);
    }
    NlpSolution sol = solve(inst, warm_point, scfg);
    ++out.iterations;
    if (sol.status == NlpStatus::infeasible_relaxed) {
      if (star_prev.has_value()) {
        out.ok = true;
        out.solution = *star_prev;
        out.termination = DmpcTermination::solver_failure;
      }
      return out;
    }
    warm_point = sol.point;

    EgoTrajectory star;
    star.states = sol.point.x;
    star.controls = sol.point.u;

    IterateState next;
    next.ego = convex_update(star, iterate.ego, dcfg.blend_ego);
    pcfg.seed = iterate_seed(step_seed, p + 1, dcfg);
    const PredictionBundle fresh = predictor.predict(obs, next.ego, pcfg);
    next.prediction = convex_update(fresh, iterate.prediction, dcfg.blend_pred);

    const double loss = dmpc_loss(next, iterate);
    out.trace.push_back({p, loss, sol.objective, sol.status, true});

    if (loss_prev < loss) {
      // Reject this iterate; the previous pass's solver output stands.
      out.trace.back().accepted = false;
      out.ok = true;
      out.solution = *star_prev;  // p >= 1 here since loss_prev was finite
      out.termination = DmpcTermination::loss_increase;
      return out;
    }
    if (loss < dcfg.epsilon) {
      out.ok = true;
      out.solution = sol;
      out.termination = DmpcTermination::epsilon;
      return out;
    }

    star_prev = sol;
    loss_prev = loss;
    iterate = next;
  }

  if (star_prev.has_value()) {
    out.ok = true;
    out.solution = *star_prev;
    out.termination = DmpcTermination::iteration_limit;
  }
  return out;
}

/// Decoupled baseline: one prediction from the shifted plan, one solve.
inline DmpcResult dc_mpc_solve(Maneuver tag, const EgoState& x0,
                               const Observations& obs,
                               const Predictor& predictor, double sigma,
                               std::uint64_t step_seed,
                               const EgoTrajectory& warm,
                               const DmpcConfig& dcfg, const OcpConfig& ocfg,
                               const SolverConfig& scfg) {
  DmpcResult out;
  PredictorConfig pcfg;
  pcfg.sigma_a = sigma;
  pcfg.seed = iterate_seed(step_seed, 0, dcfg);
  const PredictionBundle pred = predictor.predict(obs, warm, pcfg);

  const NlpInstance inst = assemble_nlp(tag, x0, pred, obs.vehicles, ocfg);
  const PrimalPoint warm_point = make_primal(inst, warm.states, warm.controls);
  NlpSolution sol = solve(inst, warm_point, scfg);
  out.iterations = 1;
  if (sol.status == NlpStatus::infeasible_relaxed) return out;
  out.ok = true;
  out.solution = std::move(sol);
  out.termination = DmpcTermination::iteration_limit;
  return out;
}

// ---------------------------------------------------------------------------
// Decision manager
// ---------------------------------------------------------------------------

struct DecisionConfig {
  double cost_scale = 1.0;     ///< q_e on the MPC objective
  double switch_scale = 5.0;   ///< q_c on the switching count
  double exit_scale = 400.0;   ///< scale on the exit-proximity cost
  int memory = 10;             ///< history length m
  double exit_position = 250.0;   ///< d_exit [m]
  double exit_normalizer = 500.0; ///< d_max [m], > exit_position
  double exponent = 0.8;          ///< gamma in [0, 1]
};

class DecisionHistory {
 public:
  explicit DecisionHistory(int capacity = 10) : capacity_(capacity) {}

  void push(Maneuver m) {
    h_.push_back(m);
    while (static_cast<int>(h_.size()) > capacity_) h_.pop_front();
  }
  int size() const { return static_cast<int>(h_.size()); }
  Maneuver at(int i) const { return h_[static_cast<std::size_t>(i)]; }

 private:
  std::deque<Maneuver> h_;
  int capacity_;
};

/// Number of remembered decisions that differ from j.
inline int switching_cost(const DecisionHistory& h, Maneuver j) {
  int c = 0;
  for (int i = 0; i < h.size(); ++i) c += h.at(i) != j ? 1 : 0;
  return c;
}

/// Exit-proximity cost in [0, 1]: zero for the exit-directed decision,
/// growing toward one as the ego approaches the exit otherwise.
inline double exit_cost(const EgoState& x0, Maneuver j, Maneuver exit_directed,
                        const DecisionConfig& cfg) {
  if (j == exit_directed) return 0.0;
  const double base =
      std::clamp((cfg.exit_position - x0.px) / cfg.exit_normalizer, 0.0, 1.0);
  return 1.0 - std::pow(base, cfg.exponent);
}

struct Candidate {
  Maneuver tag = Maneuver::keep_lane;
  const NlpSolution* solution = nullptr;  ///< null when the solve failed
};

struct Decision {
  Maneuver chosen = Maneuver::keep_lane;
  EgoControl control;
  double total = 0.0;
};

/// Weighted argmin over the candidate controllers; ties break toward the
/// earliest candidate in the given order (nc, lc, rc by convention). The
/// choice is appended to the history.
inline Decision decide(const std::vector<Candidate>& candidates,
                       DecisionHistory& history, const EgoState& x0,
                       Maneuver exit_directed, const DecisionConfig& cfg) {
  const Candidate* best = nullptr;
  double best_total = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    if (c.solution == nullptr) continue;
    const double total = cfg.cost_scale * c.solution->objective +
                         cfg.switch_scale * switching_cost(history, c.tag) +
                         cfg.exit_scale * exit_cost(x0, c.tag, exit_directed, cfg);
    if (total < best_total) {
      best_total = total;
      best = &c;
    }
  }
  if (best == nullptr) {
    throw std::runtime_error("decide: no candidate solved");
  }
  history.push(best->tag);
  Decision d;
  d.chosen = best->tag;
  d.control = EgoControl::from_vec(best->solution->point.u.col(0));
  d.total = best_total;
  return d;
}

}  // namespace ppdmpc
