#include "gflow/linear_program.hpp"

#include "gflow/error.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace gflow {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Tableau rows 0..m-1 are constraints, row m is the objective (reduced costs);
// the last column holds the right-hand side.
class Tableau {
public:
    Tableau(RowMatrix t, std::vector<int> basis) : t_(std::move(t)), basis_(std::move(basis)) {}

    int rows() const { return static_cast<int>(t_.rows()) - 1; }
    int cols() const { return static_cast<int>(t_.cols()) - 1; }
    double& at(int r, int c) { return t_(r, c); }
    double rhs(int r) const { return t_(r, t_.cols() - 1); }
    double objective_value() const { return -t_(rows(), t_.cols() - 1); }
    std::vector<int>& basis() { return basis_; }

    void pivot(int r, int c)
    {
        t_.row(r) /= t_(r, c);
        for (int i = 0; i < t_.rows(); ++i) {
            if (i == r) continue;
            const double f = t_(i, c);
            if (f != 0.0) t_.row(i) -= f * t_.row(r);
        }
        basis_[r] = c;
    }

    // Bland's rule restricted to columns [0, allowed).
    LpResult::Status run(int allowed, double tol, int max_iterations, int& iterations)
    {
        const int m = rows();
        while (true) {
            if (iterations >= max_iterations) return LpResult::Status::IterationLimit;
            int enter = -1;
            for (int j = 0; j < allowed; ++j) {
                if (t_(m, j) < -tol) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0) return LpResult::Status::Optimal;
            int leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m; ++i) {
                const double a = t_(i, enter);
                if (a <= tol) continue;
                const double ratio = rhs(i) / a;
                if (ratio < best - tol || (std::abs(ratio - best) <= tol && leave >= 0 && basis_[i] < basis_[leave])) {
                    best = ratio;
                    leave = i;
                }
            }
            if (leave < 0) return LpResult::Status::Unbounded;
            pivot(leave, enter);
            ++iterations;
        }
    }

    void set_objective(const Eigen::VectorXd& cost_full)
    {
        const int m = rows();
        t_.row(m).setZero();
        for (int j = 0; j < cost_full.size(); ++j) t_(m, j) = cost_full[j];
        for (int i = 0; i < m; ++i) {
            const double cb = t_(m, basis_[i]);
            if (cb != 0.0) t_.row(m) -= cb * t_.row(i);
        }
    }

    void drop_row(int r)
    {
        const int last = static_cast<int>(t_.rows()) - 1;
        RowMatrix next(t_.rows() - 1, t_.cols());
        int k = 0;
        for (int i = 0; i <= last; ++i) {
            if (i == r) continue;
            next.row(k++) = t_.row(i);
        }
        t_ = std::move(next);
        basis_.erase(basis_.begin() + r);
    }

private:
    RowMatrix t_;
    std::vector<int> basis_;
};

}  // namespace

LpResult solve_standard_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c, double tol,
                           int max_iterations)
{
    const int m = static_cast<int>(A.rows());
    const int n = static_cast<int>(A.cols());
    if (b.size() != m || c.size() != n) throw InvalidArgument("solve_standard_lp: inconsistent dimensions");

    // Columns: n structural, m artificial, 1 rhs.
    RowMatrix t = RowMatrix::Zero(m + 1, n + m + 1);
    std::vector<int> basis(m);
    for (int i = 0; i < m; ++i) {
        const double sign = b[i] < 0 ? -1.0 : 1.0;
        t.row(i).head(n) = sign * A.row(i);
        t(i, n + i) = 1.0;
        t(i, n + m) = sign * b[i];
        basis[i] = n + i;
    }
    Tableau tab(std::move(t), std::move(basis));

    LpResult result;
    Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(n + m);
    phase1.tail(m).setOnes();
    tab.set_objective(phase1);
    result.status = tab.run(n + m, tol, max_iterations, result.iterations);
    if (result.status == LpResult::Status::IterationLimit) return result;
    const double scale = std::max(1.0, b.cwiseAbs().sum());
    if (tab.objective_value() > 1e-8 * scale) {
        result.status = LpResult::Status::Infeasible;
        return result;
    }

    // Drive artificial variables out of the basis; rows that cannot be
    // pivoted are linearly dependent and get dropped.
    for (int i = 0; i < tab.rows();) {
        if (tab.basis()[i] < n) {
            ++i;
            continue;
        }
        int col = -1;
        for (int j = 0; j < n; ++j) {
            if (std::abs(tab.at(i, j)) > 1e-9) {
                col = j;
                break;
            }
        }
        if (col >= 0) {
            tab.pivot(i, col);
            ++i;
        } else {
            tab.drop_row(i);
        }
    }

    Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(n + m);
    phase2.head(n) = c;
    tab.set_objective(phase2);
    result.status = tab.run(n, tol, max_iterations, result.iterations);
    if (result.status != LpResult::Status::Optimal) return result;

    result.x = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < tab.rows(); ++i) {
        const int j = tab.basis()[i];
        if (j < n) result.x[j] = std::max(0.0, tab.rhs(i));
    }
    result.objective = c.dot(result.x);
    return result;
}

}  // namespace gflow
