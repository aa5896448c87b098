#pragma once

#include "gflow/domain.hpp"
#include "gflow/flow.hpp"
#include "gflow/pressure.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace gflow {

/// Scalar field on every slice 0..K; the Lagrangian potential q(t_k, x).
struct TimeField {
    DomainPtr domain;
    TimeGrid time;
    std::vector<Eigen::VectorXd> slices;

    const Eigen::VectorXd& at(int k) const { return slices.at(k); }
    std::uint64_t fingerprint() const;

    static TimeField zero(DomainPtr domain, TimeGrid time);
    static TimeField from_function(DomainPtr domain, TimeGrid time,
                                   const std::function<double(double, const Point&)>& q);
    /// Interior pressure slices; slices 0 and K copy slices 1 and K-1.
    static TimeField from_pressure(const PressureField& p);
};

/// c_q^{s,t}(x, y): least discrete Lagrangian cost
///   sum_{k=s}^{t-1} |x_{k+1} - x_k|^2 / (2 dt) - dt q(t_k, x_k)
/// over grid paths from x at slice s to y at slice t.
struct ValueFunction {
    DomainPtr domain;
    int s = 0;
    int t = 0;
    Eigen::MatrixXd cost;
};

ValueFunction value_function(const DomainPtr& domain, const TimeGrid& time, const TimeField& q, int s, int t);

/// Lagrangian cost of one path between slices s and t.
double path_lagrangian(const GridDomain& domain, const TimeGrid& time, const TimeField& q, std::span<const int> path,
                       int s, int t);

/// Conditional mass below this fraction of a label's mass is not support.
inline constexpr double kSupportFloor = 1e-4;

struct CheckOptions {
    /// Absolute tolerance = relative_tol * action + 1e-9.
    double relative_tol = 0.1;
    /// Sampled paths for factorized flows.
    int samples = 2000;
    std::uint64_t seed = 0;
    double support_floor = kSupportFloor;
    /// Largest violating mass fraction accepted by condition (i).
    double max_violation_fraction = 0.01;
};

struct ConditionIReport {
    int s = 0;
    int t = 0;
    double tolerance = 0.0;
    int paths_checked = 0;
    double mass_checked = 0.0;
    double violating_fraction = 0.0;
    double max_violation = 0.0;
    double mean_violation = 0.0;
    bool pass = false;

    nlohmann::json to_json() const;
};

/// Paths of the support must be minimal for c_q on [s, t].
ConditionIReport check_condition_i(const GeneralizedFlow& flow, const TimeField& q, int s, int t,
                                   const CheckOptions& options = {});

struct ConditionIIReport {
    int s = 0;
    int t = 0;
    double tolerance = 0.0;
    int labels_checked = 0;
    int labels_skipped = 0;
    double weighted_gap = 0.0;
    double worst_gap = 0.0;
    int worst_label = -1;
    double dropped_mass = 0.0;
    bool pass = false;

    nlohmann::json to_json() const;
};

/// Per-label (e_s, e_t) couplings must be c_q^{s,t}-optimal.
ConditionIIReport check_condition_ii(const GeneralizedFlow& flow, const TimeField& q, int s, int t,
                                     const CheckOptions& options = {});

/// Interior intervals used by certify: [K/4, K/2], [K/4, 3K/4], [K/2, 3K/4]
/// (rounded, deduplicated, empty ones dropped).
std::vector<std::pair<int, int>> dyadic_intervals(int K);

struct Certificate {
    bool certified = false;
    std::uint64_t flow_hash = 0;
    std::uint64_t q_hash = 0;
    double action = 0.0;
    ConditionIReport condition_i;
    std::vector<ConditionIIReport> condition_ii;

    nlohmann::json to_json() const;
};

/// Condition (i) over [0, K] and condition (ii) over the dyadic intervals.
Certificate certify(const GeneralizedFlow& flow, const TimeField& q, const CheckOptions& options = {});

}  // namespace gflow
