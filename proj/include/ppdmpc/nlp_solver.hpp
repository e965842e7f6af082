#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "ppdmpc/ocp.hpp"
#include "ppdmpc/qp.hpp"

namespace ppdmpc {

struct SolverConfig {
  double tol_feas = 1e-6;
  double tol_opt = 1e-6;
  int max_iter = 80;
  int max_line_search = 30;
  double armijo = 1e-4;
  double backtrack = 0.5;
  double penalty_init = 10.0;
  double penalty_margin = 1.5;
  std::ostream* iteration_log = nullptr;  ///< optional line-delimited records
};

enum class NlpStatus { converged, max_iterations, infeasible_relaxed };

inline const char* to_string(NlpStatus s) {
  switch (s) {
    case NlpStatus::converged: return "converged";
    case NlpStatus::max_iterations: return "max-iter";
    case NlpStatus::infeasible_relaxed: return "infeasible-relaxed";
  }
  return "?";
}

struct NlpSolution {
  PrimalPoint point;
  double objective = 0.0;
  NlpStatus status = NlpStatus::max_iterations;
  int iterations = 0;
  double max_violation = 0.0;
  Eigen::VectorXd eq_multipliers;
  Eigen::VectorXd ineq_multipliers;
};

namespace detail {

struct Linearization {
  std::vector<Mat55> a;          // per shooting interval
  std::vector<Mat52> b;
  Eigen::MatrixXd t;             // 5(N+1) x 2N state sensitivity wrt U
  Eigen::VectorXd t0;            // 5(N+1) defect-correction offset
};

inline Linearization linearize(const NlpInstance& inst, const PrimalPoint& p,
                               const Eigen::VectorXd& defects) {
  const int n = inst.n();
  Linearization lin;
  lin.a.resize(static_cast<std::size_t>(n));
  lin.b.resize(static_cast<std::size_t>(n));
  lin.t = Eigen::MatrixXd::Zero(5 * (n + 1), 2 * n);
  lin.t0 = Eigen::VectorXd::Zero(5 * (n + 1));
  lin.t0.head<5>() = -defects.head<5>();
  for (int k = 0; k < n; ++k) {
    const EgoState xk = EgoState::from_vec(p.x.col(k));
    const EgoControl uk = EgoControl::from_vec(p.u.col(k));
    const EgoStepJacobians j =
        ego_step_jacobians(xk, uk, inst.geometry, inst.horizon.dt);
    lin.a[static_cast<std::size_t>(k)] = j.a;
    lin.b[static_cast<std::size_t>(k)] = j.b;
    lin.t.middleRows(5 * (k + 1), 5).leftCols(2 * (k + 1)).noalias() =
        j.a * lin.t.middleRows(5 * k, 5).leftCols(2 * (k + 1));
    lin.t.block(5 * (k + 1), 2 * k, 5, 2) += j.b;
    lin.t0.segment<5>(5 * (k + 1)) =
        j.a * lin.t0.segment<5>(5 * k) - defects.segment<5>(5 * (k + 1));
  }
  return lin;
}

// Reduced gradient/Hessian of the (exactly quadratic) objective over
// y = [dU; dS], after eliminating dX = T dU + t0.
inline void reduced_objective(const NlpInstance& inst, const PrimalPoint& p,
                              const Eigen::VectorXd& grad,
                              const Linearization& lin, Eigen::MatrixXd& h,
                              Eigen::VectorXd& g) {
  const int n = inst.n();
  const int mc = inst.mc();
  const int nu = 2 * n;
  const int ny = nu + mc * (n + 1);
  const Mat55 q2 = 2.0 * inst.weights.q();
  const Mat55 p2 = 2.0 * inst.weights.terminal;
  const Eigen::Matrix2d r2 = 2.0 * inst.weights.r();
  const Eigen::Matrix2d rd2 = 2.0 * inst.weights.rd();

  h = Eigen::MatrixXd::Zero(ny, ny);
  g = Eigen::VectorXd::Zero(ny);

  // U block: T' Hxx T + Huu, with Hxx block-diagonal.
  for (int k = 0; k < n; ++k) {
    const auto row_py = lin.t.row(5 * k + 1);
    const auto row_vx = lin.t.row(5 * k + 2);
    h.topLeftCorner(nu, nu).noalias() +=
        q2(1, 1) * row_py.transpose() * row_py;
    h.topLeftCorner(nu, nu).noalias() +=
        q2(2, 2) * row_vx.transpose() * row_vx;
  }
  {
    const Eigen::MatrixXd tn = lin.t.middleRows(5 * n, 5);
    h.topLeftCorner(nu, nu).noalias() += tn.transpose() * p2 * tn;
  }
  for (int k = 0; k < n; ++k) {
    h.block<2, 2>(2 * k, 2 * k) += r2;
    if (k > 0) h.block<2, 2>(2 * k, 2 * k) += rd2;
    if (k + 1 < n) {
      h.block<2, 2>(2 * k, 2 * k) += rd2;
      h.block<2, 2>(2 * k, 2 * (k + 1)) -= rd2;
      h.block<2, 2>(2 * (k + 1), 2 * k) -= rd2;
    }
  }
  for (int i = nu; i < ny; ++i) h(i, i) = 2.0 * inst.weights.slack;

  // Gradient: T'(gx + Hxx t0) + gu over U, gs over S.
  Eigen::VectorXd gx_ht(5 * (n + 1));
  for (int k = 0; k <= n; ++k) {
    const Mat55& hk = (k == n) ? p2 : q2;
    gx_ht.segment<5>(5 * k) =
        grad.segment<5>(5 * k) + hk * lin.t0.segment<5>(5 * k);
  }
  g.head(nu).noalias() = lin.t.transpose() * gx_ht;
  g.head(nu) += grad.segment(5 * (n + 1), nu);
  g.tail(ny - nu) = grad.tail(ny - nu);
}

}  // namespace detail

/// KKT residual: Lagrangian-gradient norm plus feasibility and
/// complementarity violations.
inline double kkt_residual(const NlpInstance& inst, const PrimalPoint& p,
                           const Eigen::VectorXd& eq_mult,
                           const Eigen::VectorXd& ineq_mult) {
  const int n = inst.n();
  Eigen::VectorXd lag = objective_gradient(inst, p);

  // Equality part: x(k) rows carry +I in defect k and -A_k' in defect k+1.
  const Eigen::VectorXd defects = eval_defects(inst, p);
  for (int k = 0; k <= n; ++k) {
    lag.segment<5>(5 * k) += eq_mult.segment<5>(5 * k);
  }
  for (int k = 0; k < n; ++k) {
    const EgoState xk = EgoState::from_vec(p.x.col(k));
    const EgoControl uk = EgoControl::from_vec(p.u.col(k));
    const EgoStepJacobians j =
        ego_step_jacobians(xk, uk, inst.geometry, inst.horizon.dt);
    lag.segment<5>(5 * k) -= j.a.transpose() * eq_mult.segment<5>(5 * (k + 1));
    lag.segment<2>(5 * (n + 1) + 2 * k) -=
        j.b.transpose() * eq_mult.segment<5>(5 * (k + 1));
  }

  double comp = 0.0;
  double infeas = defects.cwiseAbs().sum();
  const int soff = 5 * (n + 1) + 2 * n;
  const int mc = inst.mc();
  for (int i = 0; i < inst.num_ineq(); ++i) {
    const auto& row = inst.rows[static_cast<std::size_t>(i)];
    const double gi = eval_row(inst, row, p);
    infeas += std::max(0.0, gi);
    comp += std::abs(ineq_mult[i] * gi);
    comp += std::max(0.0, -ineq_mult[i]);
    const RowGradient rg = row_gradient(inst, row, p);
    if (rg.x_k >= 0) lag.segment<5>(5 * rg.x_k) += ineq_mult[i] * rg.dx;
    if (rg.u_k >= 0)
      lag.segment<2>(5 * (n + 1) + 2 * rg.u_k) += ineq_mult[i] * rg.du;
    if (rg.s_entry >= 0)
      lag[soff + rg.s_k * mc + rg.s_entry] += ineq_mult[i] * rg.ds;
  }
  return lag.cwiseAbs().maxCoeff() + infeas + comp;
}

/// Sequential quadratic programming on the multiple-shooting NLP: exact
/// equality handling through state elimination, a dual active-set QP on the
/// reduced subproblem, an l1-penalty line search, and damped BFGS updates of
/// the reduced Hessian (seeded with the exact objective Hessian).
inline NlpSolution solve(const NlpInstance& inst,
                         const std::optional<PrimalPoint>& warm,
                         const SolverConfig& cfg = {}) {
  const int n = inst.n();
  const int mc = inst.mc();
  const int nu = 2 * n;
  const int ny = nu + mc * (n + 1);

  PrimalPoint p = warm.has_value()
                      ? *warm
                      : make_primal(inst,
                                    ego_rollout(inst.x0,
                                                Eigen::MatrixXd::Zero(2, n),
                                                inst.geometry,
                                                inst.horizon.dt),
                                    Eigen::MatrixXd::Zero(2, n));
  if (mc > 0) p.s = p.s.cwiseMax(0.0);

  NlpSolution out;
  out.eq_multipliers = Eigen::VectorXd::Zero(5 * (n + 1));
  out.ineq_multipliers = Eigen::VectorXd::Zero(inst.num_ineq());

  Eigen::MatrixXd bmat;        // quasi-Newton reduced Hessian
  bool bmat_fresh = false;
  double penalty = cfg.penalty_init;

  std::optional<PrimalPoint> best_feasible;
  double best_feasible_obj = std::numeric_limits<double>::infinity();

  auto violation = [&](const PrimalPoint& pt, double& l1) {
    const Eigen::VectorXd c = eval_defects(inst, pt);
    const Eigen::VectorXd gi = eval_inequalities(inst, pt);
    l1 = c.cwiseAbs().sum() + gi.cwiseMax(0.0).sum();
    double vmax = c.cwiseAbs().maxCoeff();
    if (gi.size() > 0) vmax = std::max(vmax, gi.maxCoeff());
    return vmax;
  };

  int iter = 0;
  while (iter < cfg.max_iter) {
    ++iter;
    const double f = objective_value(inst, p);
    const Eigen::VectorXd grad = objective_gradient(inst, p);
    const Eigen::VectorXd defects = eval_defects(inst, p);
    const Eigen::VectorXd gvals = eval_inequalities(inst, p);
    double viol_l1 = defects.cwiseAbs().sum() + gvals.cwiseMax(0.0).sum();
    double feas = defects.cwiseAbs().maxCoeff();
    if (gvals.size() > 0) feas = std::max(feas, gvals.maxCoeff());

    if (feas <= cfg.tol_feas && f < best_feasible_obj) {
      best_feasible = p;
      best_feasible_obj = f;
    }

    const detail::Linearization lin = detail::linearize(inst, p, defects);

    Eigen::MatrixXd h_exact;
    Eigen::VectorXd g_red;
    detail::reduced_objective(inst, p, grad, lin, h_exact, g_red);
    if (!bmat_fresh || bmat.rows() != ny) {
      bmat = h_exact +
             1e-8 * (1.0 + h_exact.diagonal().cwiseAbs().maxCoeff()) *
                 Eigen::MatrixXd::Identity(ny, ny);
      bmat_fresh = true;
    }

    // Reduced inequality rows: value + gradient through dX = T dU + t0.
    const int m = inst.num_ineq();
    Eigen::MatrixXd cred = Eigen::MatrixXd::Zero(m, ny);
    Eigen::VectorXd rhs(m);
    std::vector<RowGradient> rgrads(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      const auto& row = inst.rows[static_cast<std::size_t>(i)];
      const RowGradient rg = row_gradient(inst, row, p);
      rgrads[static_cast<std::size_t>(i)] = rg;
      double cval = gvals[i];
      if (rg.x_k >= 0) {
        cred.row(i).head(nu).noalias() =
            rg.dx.transpose() * lin.t.middleRows(5 * rg.x_k, 5);
        cval += rg.dx.dot(lin.t0.segment<5>(5 * rg.x_k));
      }
      if (rg.u_k >= 0) {
        cred(i, 2 * rg.u_k) += rg.du[0];
        cred(i, 2 * rg.u_k + 1) += rg.du[1];
      }
      if (rg.s_entry >= 0) {
        cred(i, nu + rg.s_k * mc + rg.s_entry) += rg.ds;
      }
      rhs[i] = -cval;
    }

    QpResult qp = solve_qp(bmat, g_red, cred, rhs);
    if (qp.status != QpResult::Status::optimal &&
        qp.status != QpResult::Status::infeasible && !bmat_fresh) {
      bmat = h_exact +
             1e-8 * (1.0 + h_exact.diagonal().cwiseAbs().maxCoeff()) *
                 Eigen::MatrixXd::Identity(ny, ny);
      bmat_fresh = true;
      qp = solve_qp(bmat, g_red, cred, rhs);
    }
    if (qp.status == QpResult::Status::infeasible) {
      out.status = NlpStatus::infeasible_relaxed;
      break;
    }
    if (qp.status != QpResult::Status::optimal) {
      out.status = NlpStatus::max_iterations;
      break;
    }

    // Expand the reduced step.
    const Eigen::VectorXd du = qp.x.head(nu);
    Eigen::VectorXd dz(inst.num_vars());
    dz.head(5 * (n + 1)).noalias() = lin.t * du;
    dz.head(5 * (n + 1)) += lin.t0;
    dz.segment(5 * (n + 1), nu) = du;
    dz.tail(ny - nu) = qp.x.tail(ny - nu);

    // Multiplier recovery: costates from stationarity in the X block.
    const Eigen::VectorXd z0 = pack_point(inst, p);
    const Eigen::VectorXd hd =
        objective_gradient(inst, unpack_point(inst, z0 + dz)) - grad;
    Eigen::VectorXd w = hd + grad;
    for (int i = 0; i < m; ++i) {
      if (qp.multipliers[i] == 0.0) continue;
      const RowGradient& rg = rgrads[static_cast<std::size_t>(i)];
      if (rg.x_k >= 0) w.segment<5>(5 * rg.x_k) += qp.multipliers[i] * rg.dx;
      if (rg.u_k >= 0)
        w.segment<2>(5 * (n + 1) + 2 * rg.u_k) += qp.multipliers[i] * rg.du;
      if (rg.s_entry >= 0)
        w[5 * (n + 1) + nu + rg.s_k * mc + rg.s_entry] +=
            qp.multipliers[i] * rg.ds;
    }
    Eigen::VectorXd nu_mult(5 * (n + 1));
    nu_mult.segment<5>(5 * n) = -w.segment<5>(5 * n);
    for (int k = n - 1; k >= 0; --k) {
      nu_mult.segment<5>(5 * k) =
          lin.a[static_cast<std::size_t>(k)].transpose() *
              nu_mult.segment<5>(5 * (k + 1)) -
          w.segment<5>(5 * k);
    }
    out.eq_multipliers = nu_mult;
    out.ineq_multipliers = qp.multipliers;

    // First-order stationarity at the current point with the fresh
    // multiplier estimates (hd terms vanish with the step).
    double station = hd.cwiseAbs().maxCoeff();
    for (int k = 0; k < n; ++k) {
      const Vec2 su =
          w.segment<2>(5 * (n + 1) + 2 * k) -
          hd.segment<2>(5 * (n + 1) + 2 * k) -
          lin.b[static_cast<std::size_t>(k)].transpose() *
              nu_mult.segment<5>(5 * (k + 1));
      station = std::max(station, su.cwiseAbs().maxCoeff());
    }
    if (ny > nu) {
      station = std::max(station, (w.tail(ny - nu) - hd.tail(ny - nu))
                                      .cwiseAbs()
                                      .maxCoeff());
    }
    const double gscale = 1.0 + grad.cwiseAbs().maxCoeff();

    const double step_inf = dz.cwiseAbs().maxCoeff();
    if (feas <= cfg.tol_feas &&
        (station <= cfg.tol_opt * gscale ||
         step_inf < 1e-8 * (1.0 + z0.cwiseAbs().maxCoeff()))) {
      out.status = NlpStatus::converged;
      break;
    }

    // l1 merit line search.
    const double mult_inf =
        std::max(nu_mult.cwiseAbs().maxCoeff(),
                 m > 0 ? qp.multipliers.cwiseAbs().maxCoeff() : 0.0);
    penalty = std::max(penalty, cfg.penalty_margin * mult_inf + 1.0);
    const double merit0 = f + penalty * viol_l1;
    const double descent = grad.dot(dz) - penalty * viol_l1;

    double alpha = 1.0;
    PrimalPoint trial = p;
    bool accepted = false;
    for (int ls = 0; ls < cfg.max_line_search; ++ls) {
      trial = unpack_point(inst, z0 + alpha * dz);
      double trial_l1 = 0.0;
      violation(trial, trial_l1);
      const double merit =
          objective_value(inst, trial) + penalty * trial_l1;
      if (merit <= merit0 + cfg.armijo * alpha * std::min(descent, 0.0)) {
        accepted = true;
        break;
      }
      alpha *= cfg.backtrack;
    }
    if (!accepted) {
      if (feas <= cfg.tol_feas) {
        // Feasible and the merit cannot improve along the QP direction:
        // numerical optimum.
        out.status = NlpStatus::converged;
        break;
      }
      // Smallest trial step; lets the outer loop re-linearize or stop.
      trial = unpack_point(inst, z0 + alpha * dz);
    }

    // Damped BFGS update in the fixed reduced basis of this iteration.
    {
      const Eigen::VectorXd sy = alpha * qp.x;
      const double sbs = sy.dot(bmat * sy);
      if (sbs > 1e-14) {
        // Reduced Lagrangian gradient difference with multipliers frozen.
        auto reduced_lag = [&](const PrimalPoint& pt) {
          Eigen::VectorXd lg = objective_gradient(inst, pt);
          for (int i = 0; i < m; ++i) {
            if (qp.multipliers[i] == 0.0) continue;
            const auto& row = inst.rows[static_cast<std::size_t>(i)];
            const RowGradient rg = row_gradient(inst, row, pt);
            if (rg.x_k >= 0)
              lg.segment<5>(5 * rg.x_k) += qp.multipliers[i] * rg.dx;
            if (rg.u_k >= 0)
              lg.segment<2>(5 * (n + 1) + 2 * rg.u_k) +=
                  qp.multipliers[i] * rg.du;
            if (rg.s_entry >= 0)
              lg[5 * (n + 1) + nu + rg.s_k * mc + rg.s_entry] +=
                  qp.multipliers[i] * rg.ds;
          }
          Eigen::VectorXd red(ny);
          red.head(nu).noalias() =
              lin.t.transpose() * lg.head(5 * (n + 1));
          red.head(nu) += lg.segment(5 * (n + 1), nu);
          red.tail(ny - nu) = lg.tail(ny - nu);
          return red;
        };
        const Eigen::VectorXd gamma = reduced_lag(trial) - reduced_lag(p);
        double sg = sy.dot(gamma);
        Eigen::VectorXd gamma_t = gamma;
        if (sg < 0.2 * sbs) {
          const double theta = 0.8 * sbs / (sbs - sg);
          gamma_t = theta * gamma + (1.0 - theta) * (bmat * sy);
          sg = sy.dot(gamma_t);
        }
        if (sg > 1e-12 && gamma_t.allFinite()) {
          const Eigen::VectorXd bs = bmat * sy;
          bmat.noalias() += gamma_t * gamma_t.transpose() / sg;
          bmat.noalias() -= bs * bs.transpose() / sbs;
          bmat_fresh = false;  // refreshed lazily if the QP rejects it
        }
      }
    }

    p = trial;
    if (mc > 0) p.s = p.s.cwiseMax(0.0);

    if (cfg.iteration_log != nullptr) {
      char line[256];
      std::snprintf(line, sizeof(line),
                    "{\"iter\":%d,\"objective\":%.9g,\"violation\":%.3g,"
                    "\"step\":%.3g,\"alpha\":%.3g,\"penalty\":%.3g}",
                    iter, f, feas, step_inf, alpha, penalty);
      *cfg.iteration_log << line << "\n";
    }
  }

  if (out.status == NlpStatus::max_iterations && best_feasible.has_value()) {
    p = *best_feasible;
  }
  // Prefer the best feasible iterate seen if the final point is worse.
  if (out.status == NlpStatus::converged && best_feasible.has_value()) {
    double l1 = 0.0;
    if (objective_value(inst, p) > best_feasible_obj &&
        violation(*best_feasible, l1) <= cfg.tol_feas) {
      p = *best_feasible;
    }
  }

  double l1 = 0.0;
  out.max_violation = violation(p, l1);
  out.point = p;
  out.objective = objective_value(inst, p);
  out.iterations = iter;
  return out;
}

}  // namespace ppdmpc
