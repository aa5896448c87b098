#pragma once

#include "gflow/domain.hpp"
#include "gflow/flow.hpp"
#include "gflow/kernel.hpp"
#include "gflow/transport.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include <json.hpp>

namespace gflow {

/// (e_0, e_K)# eta = (i x h)# mu_D for a cell bijection h.
struct MapEndpoint {
    std::vector<int> permutation;
};

/// (e_0, e_K)# eta = gamma01.
struct PlanEndpoint {
    TransportPlan plan;
};

/// Labelled endpoints: (e_0)# eta_a = gamma(a, .), (e_K)# eta_a = eta_final(a, .).
struct LabelledEndpoint {
    TransportPlan gamma;
    TransportPlan eta_final;
};

using EndpointConstraint = std::variant<MapEndpoint, PlanEndpoint, LabelledEndpoint>;

/// Reverse time: swaps the roles of the two endpoint plans.
EndpointConstraint reversed(const GridDomain& domain, const EndpointConstraint& endpoint);

struct SolverConfig {
    /// Defaults to the median step cost.
    std::optional<double> epsilon_start;
    /// Defaults to 1e-4 * epsilon_start.
    std::optional<double> epsilon_floor;
    double epsilon_factor = 0.5;
    /// L1 tolerance on every marginal at the floor.
    double marginal_tol = 1e-7;
    /// L1 tolerance before moving to the next epsilon.
    double stage_tol = 1e-4;
    int max_sweeps = 10000;
    int check_every = 5;
    /// Largest tuple count for brute_force_geodesic.
    long long dense_cap = 1000000;
    std::uint64_t seed = 0;
    KernelBackend backend = KernelBackend::Auto;
    /// When the scaling kernel underflows at some epsilon, stop at the last
    /// representable one instead of failing.
    bool stop_on_underflow = true;
    /// Over-relaxation of the slice updates; 1 is plain Sinkhorn.
    double relaxation = 1.0;
    /// Called after every convergence check with (sweep, epsilon, residual).
    std::function<void(int, double, double)> progress;

    void validate() const;
    nlohmann::json to_json() const;
};

/// c_k(x, y) = |x - y|^2 / (2 dt) between cells.
Eigen::MatrixXd step_cost(const GridDomain& domain, double dt);

/// Multimarginal entropic transport with the endpoint pair as one
/// super-marginal (one label per starting cell) and a Gauss-Seidel
/// Sinkhorn sweep over the interior slices.
std::shared_ptr<const ChainFlow> solve_geodesic(const DomainPtr& domain, const TimeGrid& time,
                                                const EndpointConstraint& endpoint, const SolverConfig& config);

/// Labelled variant: one label per row of gamma.
std::shared_ptr<const ChainFlow> solve_el_geodesic(const DomainPtr& domain, const TimeGrid& time,
                                                   const TransportPlan& gamma, const TransportPlan& eta_final,
                                                   const SolverConfig& config);

struct BruteForceResult {
    std::shared_ptr<const DenseFlow> flow;
    double action = 0.0;
    long long tuples = 0;
};

/// Exact LP over all cell tuples (x_0..x_K) with slice and endpoint constraints.
BruteForceResult brute_force_geodesic(const DomainPtr& domain, const TimeGrid& time,
                                      const EndpointConstraint& endpoint, long long dense_cap = 20000);

inline TransportPlan joint_coupling(const GeneralizedFlow& flow, int s, int t) { return flow.joint_coupling(s, t); }
inline double action_of_flow(const GeneralizedFlow& flow) { return flow.action(); }

/// Endpoint data as (label x cell) start and end laws plus the label count.
struct EndpointLaws {
    Eigen::MatrixXd start;
    Eigen::MatrixXd end;
};
EndpointLaws endpoint_laws(const GridDomain& domain, const EndpointConstraint& endpoint);

/// Worst marginal defect of a flow against mu_D (L1 over cells, max over slices).
double slice_marginal_defect(const GeneralizedFlow& flow);

}  // namespace gflow
