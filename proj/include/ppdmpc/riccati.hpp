#pragma once

#include <Eigen/Dense>

namespace ppdmpc {

struct DareResult {
  Eigen::MatrixXd p;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

inline double dare_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            const Eigen::MatrixXd& q, const Eigen::MatrixXd& r,
                            const Eigen::MatrixXd& p) {
  const Eigen::MatrixXd btpb = r + b.transpose() * p * b;
  const Eigen::MatrixXd next =
      q + a.transpose() * p * a -
      a.transpose() * p * b * btpb.ldlt().solve(b.transpose() * p * a);
  return (p - next).cwiseAbs().maxCoeff();
}

/// Stabilizing fixed point of the discrete algebraic Riccati equation,
/// iterated from P0 = Q.
inline DareResult dare_fixed_point(const Eigen::MatrixXd& a,
                                   const Eigen::MatrixXd& b,
                                   const Eigen::MatrixXd& q,
                                   const Eigen::MatrixXd& r,
                                   double tol = 1e-10, int max_iter = 10000) {
  DareResult out;
  Eigen::MatrixXd p = q;
  for (int i = 0; i < max_iter; ++i) {
    const Eigen::MatrixXd btpb = r + b.transpose() * p * b;
    Eigen::MatrixXd next =
        q + a.transpose() * p * a -
        a.transpose() * p * b * btpb.ldlt().solve(b.transpose() * p * a);
    next = 0.5 * (next + next.transpose().eval());
    const double diff = (next - p).cwiseAbs().maxCoeff();
    p = next;
    out.iterations = i + 1;
    if (diff < tol) {
      out.converged = true;
      break;
    }
  }
  out.p = p;
  out.residual = dare_residual(a, b, q, r, p);
  return out;
}

}  // namespace ppdmpc
