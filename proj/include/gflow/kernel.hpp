#pragma once

#include "gflow/domain.hpp"

#include <Eigen/Dense>

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace gflow {

enum class KernelBackend { Auto, LogDense, Scaling };

std::string to_string(KernelBackend backend);
KernelBackend parse_kernel_backend(std::string_view name);

/// Grids up to this many lattice positions use exact log-sum-exp under Auto.
inline constexpr int kLogDenseMaxGrid = 64;

/// Conditional displacement statistics of one kernel application: for each
/// target t and column a, moments of (source - target) under the normalized
/// weights k(s, t) exp(in(s, a)). Axis 1 entries are zero in 1-D.
struct KernelMoments {
    Eigen::MatrixXd log_mass;
    std::array<Eigen::MatrixXd, 2> mean;
    /// E[d0 d0], E[d0 d1], E[d1 d1].
    std::array<Eigen::MatrixXd, 3> second;
};

/// Gibbs kernel k(x, y) = exp(-|x - y|^2 / (2 dt eps)) of one time step,
/// acting on log-scaled columns indexed by lattice positions.
///
/// Rows of every input are lattice positions (GridDomain::grid_size()); rows
/// that are not cells must hold -inf and come back as -inf.
class StepKernel {
public:
    StepKernel(DomainPtr domain, double dt, double epsilon, KernelBackend backend = KernelBackend::Auto);

    const GridDomain& domain() const { return *domain_; }
    const DomainPtr& domain_ptr() const { return domain_; }
    double dt() const { return dt_; }
    double epsilon() const { return epsilon_; }
    KernelBackend backend() const { return backend_; }

    /// out(t, a) = log sum_s k(s, t) exp(in(s, a)).
    void apply(const Eigen::MatrixXd& in, Eigen::MatrixXd& out) const;
    KernelMoments moments(const Eigen::MatrixXd& in) const;

    /// Step cost |x - y|^2 / (2 dt) between lattice positions.
    double cost(int grid_a, int grid_b) const;

    const std::vector<int>& non_cells() const { return non_cells_; }

private:
    void apply_log_dense(const Eigen::MatrixXd& in, Eigen::MatrixXd& out) const;
    void apply_scaling(const Eigen::MatrixXd& in, Eigen::MatrixXd& out) const;
    KernelMoments moments_log_dense(const Eigen::MatrixXd& in) const;
    KernelMoments moments_scaling(const Eigen::MatrixXd& in) const;
    void mask(Eigen::MatrixXd& m) const;

    DomainPtr domain_;
    double dt_;
    double epsilon_;
    KernelBackend backend_;
    int n_;
    int dim_;
    std::vector<int> non_cells_;

    // 1-D lattice displacement (source - target) used for first moments,
    // with exact antipodes on the circle set to 0, and its square.
    Eigen::MatrixXd disp_;
    Eigen::MatrixXd disp_sq_;
    // 1-D kernels g, g * disp, g * disp^2 (scaling backend).
    std::array<Eigen::MatrixXd, 3> axis_kernel_;

    // Scratch for the scaling backend; a kernel is not safe to share across threads.
    mutable Eigen::MatrixXd scratch_e_, scratch_y_, scratch_z_;
    mutable Eigen::RowVectorXd scratch_shift_;
};

/// Median of the step cost over all ordered pairs of distinct cells.
double median_step_cost(const GridDomain& domain, double dt);

}  // namespace gflow
