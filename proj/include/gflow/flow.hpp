#pragma once

#include "gflow/domain.hpp"
#include "gflow/kernel.hpp"
#include "gflow/transport.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace gflow {

/// Uniform time grid t_k = k T / K, k = 0..K.
struct TimeGrid {
    double T = 1.0;
    int K = 2;

    TimeGrid() = default;
    TimeGrid(double horizon, int steps);
    double dt() const { return T / K; }
    double time(int k) const { return T * k / K; }
};

/// Step displacement y - x between cells; exact antipodes on a torus axis
/// count as 0 (both directions are geodesics).
Point step_displacement(const GridDomain& domain, int x, int y);

/// Statistics of the step k -> k+1, per cell.
struct StepStatistics {
    int k = 0;
    Eigen::VectorXd mass_from;
    Eigen::VectorXd mass_to;
    /// E[x_{k+1} - x_k | x_k] and E[x_{k+1} - x_k | x_{k+1}].
    std::vector<Point> mean_from;
    std::vector<Point> mean_to;
    /// E[(x_{k+1} - x_k)(x_{k+1} - x_k)^T | x_k].
    std::vector<Eigen::Matrix2d> second_from;
    /// <pi_{k,k+1}, c_k>.
    double cost = 0.0;
};

/// Conditional coupling of slices (s, t) for one label, restricted to the
/// cells carrying at least `floor` of the label's mass on each side.
struct LabelCoupling {
    int label = 0;
    double mass = 0.0;
    std::vector<int> rows;
    std::vector<int> cols;
    Eigen::MatrixXd matrix;
    double dropped_mass = 0.0;
};

class DenseFlow;

/// Probability measure on discrete paths (x_0, ..., x_K), optionally with a
/// label per path (the Eulerian-Lagrangian disintegration variable).
class GeneralizedFlow {
public:
    GeneralizedFlow(DomainPtr domain, TimeGrid time) : domain_(std::move(domain)), time_(time) {}
    virtual ~GeneralizedFlow() = default;

    const DomainPtr& domain() const { return domain_; }
    const TimeGrid& time() const { return time_; }

    virtual std::string kind() const = 0;
    virtual Eigen::VectorXd slice_marginal(int k) const = 0;
    virtual TransportPlan joint_coupling(int s, int t) const = 0;
    virtual StepStatistics step_statistics(int k) const = 0;
    virtual int num_labels() const = 0;
    virtual double label_mass(int label) const = 0;
    virtual void for_each_label_coupling(int s, int t, double floor,
                                         const std::function<void(const LabelCoupling&)>& fn) const = 0;
    /// Path support: the dense paths themselves, or `samples` ancestral draws.
    virtual std::shared_ptr<const DenseFlow> support_paths(int samples, std::uint64_t seed) const = 0;
    virtual std::uint64_t fingerprint() const = 0;
    virtual nlohmann::json to_json() const = 0;

    /// Sum of step costs.
    double action() const;
    std::vector<double> step_costs() const;

protected:
    void check_slice(int k) const;
    void check_interval(int s, int t) const;

    DomainPtr domain_;
    TimeGrid time_;
};

using FlowPtr = std::shared_ptr<const GeneralizedFlow>;

/// Explicit list of weighted paths.
class DenseFlow : public GeneralizedFlow {
public:
    /// `cells` holds num_paths * (K + 1) cell indices, path-major. Without
    /// labels each path is labelled by its starting cell.
    DenseFlow(DomainPtr domain, TimeGrid time, std::vector<int> cells, std::vector<double> masses,
              std::vector<int> labels = {});

    int num_paths() const { return static_cast<int>(masses_.size()); }
    std::span<const int> path(int i) const;
    double mass(int i) const { return masses_[i]; }
    int label(int i) const { return labels_[i]; }
    double total_mass() const;

    std::string kind() const override { return "dense"; }
    Eigen::VectorXd slice_marginal(int k) const override;
    TransportPlan joint_coupling(int s, int t) const override;
    StepStatistics step_statistics(int k) const override;
    int num_labels() const override { return num_labels_; }
    double label_mass(int label) const override { return label_mass_[label]; }
    void for_each_label_coupling(int s, int t, double floor,
                                 const std::function<void(const LabelCoupling&)>& fn) const override;
    std::shared_ptr<const DenseFlow> support_paths(int samples, std::uint64_t seed) const override;
    std::uint64_t fingerprint() const override;
    nlohmann::json to_json() const override;

    /// Same paths, multiplied by a constant so the total mass is 1.
    DenseFlow normalized() const;

private:
    std::vector<int> cells_;
    std::vector<double> masses_;
    std::vector<int> labels_;
    int num_labels_ = 0;
    std::vector<double> label_mass_;
};

/// Solver diagnostics carried by a factorized flow.
struct SolveReport {
    bool converged = false;
    int sweeps = 0;
    double start_residual = 0.0;
    double slice_residual = 0.0;
    double end_residual = 0.0;
    std::vector<double> epsilon_trace;
    /// Sweeps spent at each epsilon of the trace.
    std::vector<int> stage_sweeps;
    /// Residual after each convergence check: (sweep, residual).
    std::vector<std::pair<int, double>> residual_log;
    std::string note;

    double residual() const { return std::max({start_residual, slice_residual, end_residual}); }
};

/// Factorized entropic flow over labelled paths:
///
///   eta(a, x_0..x_K) = exp( (alpha(a, x_0) + sum_{0<k<K} u_k(x_k) + beta(a, x_K)
///                            - sum_k c(x_k, x_{k+1})) / eps ) prod_{0<k<K} w(x_k)
///
/// All arrays use lattice rows (GridDomain::grid_size()) and one column per
/// label. `forward[k]` excludes the slice-k factor, as does `backward[k]`.
struct ChainState {
    std::shared_ptr<const StepKernel> kernel;
    TimeGrid time;
    int labels = 0;
    /// u_k in cost units, k = 0..K (entries 0 and K unused, zero); lattice rows.
    std::vector<Eigen::VectorXd> potential;
    /// log factor of slice k: u_k / eps + log w on interior slices, 0 at the ends.
    std::vector<Eigen::VectorXd> log_factor;
    std::vector<Eigen::MatrixXd> forward;
    std::vector<Eigen::MatrixXd> backward;
    /// log gamma(a, x_0) and log eta_final(a, x_K) targets.
    Eigen::MatrixXd log_start;
    Eigen::MatrixXd log_end;
    SolveReport report;
};

class ChainFlow : public GeneralizedFlow {
public:
    explicit ChainFlow(ChainState state);

    const ChainState& state() const { return state_; }
    const SolveReport& report() const { return state_.report; }
    double epsilon() const { return state_.kernel->epsilon(); }
    /// u_k on cells (cost units), k = 1..K-1.
    Eigen::VectorXd potential(int k) const;

    std::string kind() const override { return "chain"; }
    Eigen::VectorXd slice_marginal(int k) const override;
    TransportPlan joint_coupling(int s, int t) const override;
    StepStatistics step_statistics(int k) const override;
    int num_labels() const override { return state_.labels; }
    double label_mass(int label) const override { return label_mass_[label]; }
    void for_each_label_coupling(int s, int t, double floor,
                                 const std::function<void(const LabelCoupling&)>& fn) const override;
    std::shared_ptr<const DenseFlow> support_paths(int samples, std::uint64_t seed) const override;
    std::uint64_t fingerprint() const override;
    nlohmann::json to_json() const override;

    /// (label, x) joint law at slice 0 and K, cells as columns.
    Eigen::MatrixXd start_coupling() const;
    Eigen::MatrixXd end_coupling() const;

private:
    /// log M(x, y) of the kernel chain strictly between slices s and t,
    /// rows target lattice positions, columns source cells.
    Eigen::MatrixXd log_propagator(int s, int t) const;
    Eigen::MatrixXd slice_log_joint(int k) const;

    ChainState state_;
    std::vector<double> label_mass_;
};

/// FNV-1a over raw bytes.
std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace gflow
