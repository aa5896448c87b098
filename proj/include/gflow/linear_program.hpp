#pragma once

#include <Eigen/Dense>

namespace gflow {

struct LpResult {
    enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };
    Status status = Status::Infeasible;
    Eigen::VectorXd x;
    double objective = 0.0;
    int iterations = 0;
};

/// Dense two-phase primal simplex for  min c^T x  s.t.  A x = b, x >= 0.
///
/// Bland's rule throughout, so degenerate instances terminate. Redundant
/// equality rows are allowed. Meant for oracle-sized problems (a few hundred
/// rows, a few thousand columns).
LpResult solve_standard_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                           double tol = 1e-10, int max_iterations = 200000);

}  // namespace gflow
