#pragma once

#include "gflow/domain.hpp"
#include "gflow/flow.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace gflow {

/// Pressure on the interior slices t_1..t_{K-1}.
struct PressureField {
    DomainPtr domain;
    TimeGrid time;
    /// slices[k - 1] holds slice k.
    std::vector<Eigen::VectorXd> slices;
    bool mean_zero = false;

    int first_slice() const { return 1; }
    int last_slice() const { return time.K - 1; }
    const Eigen::VectorXd& at(int k) const;
    ScalarField slice(int k) const;

    /// Each slice shifted to mu_D-mean zero.
    PressureField normalized() const;
    /// Largest |p| over slices and cells.
    double sup_norm() const;

    static PressureField zero(DomainPtr domain, TimeGrid time);
    static PressureField from_function(DomainPtr domain, TimeGrid time,
                                       const std::function<double(double, const Point&)>& p);

    nlohmann::json to_json() const;
};

/// Sign relating Sinkhorn slice potentials to the multiplier, fixed by the
/// disk rotation (pressure |x|^2 / 2).
inline constexpr double kPressureSign = 1.0;

/// Potentials at the floor must be at most this fraction of the median step cost.
inline constexpr double kPressureMaxRelativeEpsilon = 1e-2;

/// p_k = sign * u_k / dt, mean-normalized per slice.
PressureField extract_pressure(const ChainFlow& flow);

/// Per-step velocity statistics on slices 0..K-1:
/// vbar(x) = E[(x_{k+1} - x_k) / dt | x_k = x] and the matching second moment.
struct VelocityMoments {
    std::vector<VectorField> mean;
    std::vector<std::vector<Eigen::Matrix2d>> tensor;

    /// sum_x w_x tr(vv - vbar vbar^T)(x) on slice k.
    double trace_gap(int k) const;
};

VelocityMoments velocity_moments(const GeneralizedFlow& flow);

/// Time-dependent vector field sampled on slices 0..K.
struct TestField {
    std::vector<VectorField> slices;
};

/// Smooth fields vanishing at t = 0 and t = T (and on the disk boundary),
/// scaled to unit sup norm.
std::vector<TestField> random_test_fields(const DomainPtr& domain, const TimeGrid& time, int count,
                                          std::uint64_t seed);

/// Discrete first variation of the action minus the pressure work for one test field:
///   sum_k E[(x_{k+1} - x_k) . (w_{k+1}(x_{k+1}) - w_k(x_k))] / dt + sum_k dt <p_k, div w_k>.
double weak_euler_pairing(const GeneralizedFlow& flow, const PressureField& p, const TestField& w);

/// max over fields of |weak_euler_pairing|.
double weak_euler_residual(const GeneralizedFlow& flow, const PressureField& p, const std::vector<TestField>& fields);

struct CriterionResult {
    bool satisfied = false;
    /// pi^2 - T^2 sup.
    double margin = 0.0;
    /// sup over slices of hessian_sup.
    double hessian_sup = 0.0;
    double value = 0.0;  // T^2 sup
};

/// T^2 sup_{t,x,|xi|<=1} <D^2 p xi, xi> <= pi^2.
CriterionResult classical_optimality_criterion(const PressureField& p, double T);
CriterionResult classical_optimality_criterion(const ScalarField& p, double T);

/// CSV with columns slice,t,cell,x,y,value.
void write_pressure_csv(const PressureField& p, const std::string& path);

}  // namespace gflow
