#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace ppdmpc {

/// Result of one convex QP solve.
struct QpResult {
  enum class Status { optimal, infeasible, max_iterations, not_positive_definite };
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;  ///< one per row of C, >= 0, complementary
  Status status = Status::max_iterations;
  int iterations = 0;
};

/// Dense dual active-set solver (Goldfarb-Idnani) for
///
///   min 1/2 x' G x + a' x   s.t.   C x <= d
///
/// with G strictly positive definite. Starts from the unconstrained optimum
/// and adds violated constraints one at a time, so no feasible initial point
/// is needed.
class DualActiveSetQp {
 public:
  QpResult solve(const Eigen::MatrixXd& g, const Eigen::VectorXd& a,
                 const Eigen::MatrixXd& c, const Eigen::VectorXd& d,
                 int max_iter = 0) {
    const int n = static_cast<int>(g.rows());
    const int m = static_cast<int>(c.rows());
    if (max_iter <= 0) max_iter = 100 + 10 * (n + m);
    constexpr double kInf = std::numeric_limits<double>::infinity();

    QpResult out;
    out.multipliers = Eigen::VectorXd::Zero(m);

    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success) {
      const double reg = 1e-9 * (1.0 + g.diagonal().cwiseAbs().maxCoeff());
      llt.compute(g + reg * Eigen::MatrixXd::Identity(n, n));
      if (llt.info() != Eigen::Success) {
        out.status = QpResult::Status::not_positive_definite;
        return out;
      }
    }

    Eigen::VectorXd x = llt.solve(-a);
    // J = L^{-T}: J J' = G^{-1}. Rotated in place as constraints come and go.
    Eigen::MatrixXd j = Eigen::MatrixXd::Identity(n, n);
    llt.matrixU().solveInPlace(j);
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);
    std::vector<int> active;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
    int q = 0;

    const double scale =
        1.0 + (m > 0 ? c.cwiseAbs().maxCoeff() + d.cwiseAbs().maxCoeff() : 0.0);
    const double tol = 1e-11 * scale;

    int iter = 0;
    bool done = false;
    while (!done && iter < max_iter) {
      ++iter;
      // Most violated row, skipping those already active.
      int p = -1;
      double worst = -tol;
      const Eigen::VectorXd slack = c * x - d;
      for (int i = 0; i < m; ++i) {
        if (is_active(active, i)) continue;
        if (slack[i] > worst) {
          worst = slack[i];
          p = i;
        }
      }
      if (p < 0) {
        done = true;
        out.status = QpResult::Status::optimal;
        break;
      }

      // Violated row p: work with the >= normal np = -C.row(p).
      const Eigen::VectorXd np = -c.row(p).transpose();
      double sp = -slack[p];  // np' x - bp, negative while violated
      u[q] = 0.0;

      while (iter < max_iter) {
        ++iter;
        const Eigen::VectorXd dvec = j.transpose() * np;
        Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
        if (q < n) z = j.rightCols(n - q) * dvec.tail(n - q);
        Eigen::VectorXd rstep;
        if (q > 0) {
          rstep = r.topLeftCorner(q, q)
                      .triangularView<Eigen::Upper>()
                      .solve(dvec.head(q));
        }

        double t1 = kInf;
        int drop = -1;
        for (int k = 0; k < q; ++k) {
          if (rstep[k] > tol) {
            const double cand = u[k] / rstep[k];
            if (cand < t1) {
              t1 = cand;
              drop = k;
            }
          }
        }
        const double znorm2 = z.dot(np);
        const double t2 = znorm2 > tol * tol ? -sp / znorm2 : kInf;
        const double t = std::min(t1, t2);

        if (t >= kInf) {
          out.status = QpResult::Status::infeasible;
          out.x = x;
          out.iterations = iter;
          return out;
        }

        if (t2 >= kInf) {
          // Dual-only step: drop the blocking constraint, primal unchanged.
          u.head(q) -= t * rstep;
          u[q] += t;
          remove_active(j, r, active, u, q, drop);
          continue;
        }

        x += t * z;
        sp += t * znorm2;
        if (q > 0) u.head(q) -= t * rstep;
        u[q] += t;

        if (t == t2) {
          if (add_active(j, r, dvec, q, n, tol)) {
            active.push_back(p);
            ++q;
          }
          break;  // row p satisfied, look for the next violation
        }
        remove_active(j, r, active, u, q, drop);
      }
    }

    out.x = x;
    out.iterations = iter;
    for (int k = 0; k < q; ++k) {
      out.multipliers[active[static_cast<std::size_t>(k)]] = u[k];
    }
    return out;
  }

 private:
  static bool is_active(const std::vector<int>& active, int i) {
    for (int a : active) {
      if (a == i) return true;
    }
    return false;
  }

  static void make_rotation(double& a, double& b, double& cth, double& sth) {
    const double rlen = std::hypot(a, b);
    if (rlen == 0.0) {
      cth = 1.0;
      sth = 0.0;
      return;
    }
    cth = a / rlen;
    sth = b / rlen;
    a = rlen;
    b = 0.0;
  }

  // Rotate the tail of dvec into slot q, mirroring the rotations on J's
  // columns, then store the new column of R. Fails on a dependent normal.
  static bool add_active(Eigen::MatrixXd& j, Eigen::MatrixXd& r,
                         Eigen::VectorXd dvec, int q, int n, double tol) {
    for (int i = n - 1; i > q; --i) {
      double cth, sth;
      make_rotation(dvec[i - 1], dvec[i], cth, sth);
      if (sth == 0.0) continue;
      const Eigen::VectorXd col = j.col(i - 1);
      j.col(i - 1) = cth * col + sth * j.col(i);
      j.col(i) = -sth * col + cth * j.col(i);
    }
    if (std::abs(dvec[q]) < tol) return false;
    r.col(q).head(q + 1) = dvec.head(q + 1);
    return true;
  }

  // Delete active constraint slot `drop`, shifting R left and
  // re-triangularizing with row rotations mirrored on J's columns.
  static void remove_active(Eigen::MatrixXd& j, Eigen::MatrixXd& r,
                            std::vector<int>& active, Eigen::VectorXd& u,
                            int& q, int drop) {
    for (int col = drop; col < q - 1; ++col) {
      r.col(col).head(q) = r.col(col + 1).head(q);
      active[static_cast<std::size_t>(col)] =
          active[static_cast<std::size_t>(col + 1)];
      u[col] = u[col + 1];
    }
    u[q - 1] = u[q];
    active.pop_back();
    --q;
    for (int k = drop; k < q; ++k) {
      double cth, sth;
      make_rotation(r(k, k), r(k + 1, k), cth, sth);
      if (sth == 0.0) continue;
      for (int col = k + 1; col < q; ++col) {
        const double top = r(k, col);
        r(k, col) = cth * top + sth * r(k + 1, col);
        r(k + 1, col) = -sth * top + cth * r(k + 1, col);
      }
      const Eigen::VectorXd jcol = j.col(k);
      j.col(k) = cth * jcol + sth * j.col(k + 1);
      j.col(k + 1) = -sth * jcol + cth * j.col(k + 1);
    }
  }
};

inline QpResult solve_qp(const Eigen::MatrixXd& g, const Eigen::VectorXd& a,
                         const Eigen::MatrixXd& c, const Eigen::VectorXd& d,
                         int max_iter = 0) {
  DualActiveSetQp solver;
  return solver.solve(g, a, c, d, max_iter);
}

}  // namespace ppdmpc
