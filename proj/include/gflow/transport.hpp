#pragma once

#include "gflow/domain.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <vector>

#include <json.hpp>

namespace gflow {

/// Nonnegative coupling between a row measure and a column measure.
struct TransportPlan {
    Eigen::VectorXd row_measure;
    Eigen::VectorXd col_measure;
    Eigen::MatrixXd matrix;

    int rows() const { return static_cast<int>(matrix.rows()); }
    int cols() const { return static_cast<int>(matrix.cols()); }
    double total_mass() const { return matrix.sum(); }
    /// L-infinity violation of the row (resp. column) marginal.
    double row_violation() const;
    double col_violation() const;
    double cost(const Eigen::MatrixXd& cost_matrix) const;

    static TransportPlan product(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu);
    static TransportPlan diagonal(const Eigen::VectorXd& mu);
};

struct ExactOtResult {
    TransportPlan plan;
    double cost = 0.0;
    int pivots = 0;
};

/// Maximum atoms per side accepted by solve_ot_exact.
inline constexpr int kExactOtMaxAtoms = 256;

/// Exact discrete OT by the transportation simplex (MODI potentials on a
/// spanning-tree basis). Any optimal vertex may be returned.
ExactOtResult solve_ot_exact(const Eigen::MatrixXd& cost, const Eigen::VectorXd& mu, const Eigen::VectorXd& nu);

struct EntropicOtOptions {
    double epsilon = 1e-2;
    /// Row-marginal L-infinity tolerance at the final epsilon.
    double tol = 1e-9;
    int max_iter = 100000;
    /// When set, epsilon is halved geometrically from this value down to `epsilon`.
    std::optional<double> epsilon_start;
    double epsilon_factor = 0.5;
    /// Warm-start potentials (same length as mu / nu).
    std::optional<Eigen::VectorXd> u0;
    std::optional<Eigen::VectorXd> v0;
};

struct EntropicOtResult {
    TransportPlan plan;
    /// Dual potentials for pi_ij = mu_i nu_j exp((u_i + v_j - C_ij) / eps).
    Eigen::VectorXd u;
    Eigen::VectorXd v;
    double transport_cost = 0.0;
    /// KL(pi | mu x nu).
    double relative_entropy = 0.0;
    double row_violation = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> epsilon_trace;
};

/// Log-domain Sinkhorn. The last half-step projects onto the column marginal,
/// so column sums are exact; non-convergence is flagged with the achieved violation.
EntropicOtResult solve_ot_entropic(const Eigen::MatrixXd& cost, const Eigen::VectorXd& mu, const Eigen::VectorXd& nu,
                                   const EntropicOtOptions& options);

/// Plan (i x g)_# mu_D of a measure-preserving cell bijection.
TransportPlan plan_from_map(const GridDomain& domain, const std::vector<int>& permutation);

/// sum_i max_j pi_ij over the total mass; 1 exactly for map-induced plans.
double graph_concentration(const TransportPlan& plan);

/// Squared-distance cost between all pairs of cells.
Eigen::MatrixXd cell_cost_matrix(const GridDomain& domain);

void write_plan_csv(std::ostream& out, const TransportPlan& plan, double min_mass = 0.0);
nlohmann::json plan_summary_json(const TransportPlan& plan, const Eigen::MatrixXd& cost, int iterations);

}  // namespace gflow
