#include "gflow/optimality.hpp"

#include "gflow/error.hpp"
#include "gflow/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace gflow {

std::uint64_t TimeField::fingerprint() const
{
    std::uint64_t h = fnv1a(&time.K, sizeof(time.K));
    h = fnv1a(&time.T, sizeof(time.T), h);
    for (const auto& s : slices) h = fnv1a(s.data(), static_cast<std::size_t>(s.size()) * sizeof(double), h);
    return h;
}

TimeField TimeField::zero(DomainPtr domain, TimeGrid time)
{
    TimeField q;
    q.slices.assign(time.K + 1, Eigen::VectorXd::Zero(domain->num_cells()));
    q.domain = std::move(domain);
    q.time = time;
    return q;
}

TimeField TimeField::from_function(DomainPtr domain, TimeGrid time,
                                   const std::function<double(double, const Point&)>& fn)
{
    TimeField q;
    for (int k = 0; k <= time.K; ++k) {
        Eigen::VectorXd v(domain->num_cells());
        for (int c = 0; c < domain->num_cells(); ++c) v[c] = fn(time.time(k), domain->center(c));
        q.slices.push_back(std::move(v));
    }
    q.domain = std::move(domain);
    q.time = time;
    return q;
}

TimeField TimeField::from_pressure(const PressureField& p)
{
    TimeField q;
    q.domain = p.domain;
    q.time = p.time;
    q.slices.push_back(p.at(p.first_slice()));
    for (int k = p.first_slice(); k <= p.last_slice(); ++k) q.slices.push_back(p.at(k));
    q.slices.push_back(p.at(p.last_slice()));
    return q;
}

namespace {

void check_field(const GridDomain& domain, const TimeGrid& time, const TimeField& q)
{
    if (static_cast<int>(q.slices.size()) != time.K + 1) throw InvalidArgument("q must have K+1 slices");
    for (const auto& s : q.slices)
        if (s.size() != domain.num_cells()) throw InvalidArgument("q slice has the wrong number of cells");
}

}  // namespace

ValueFunction value_function(const DomainPtr& domain, const TimeGrid& time, const TimeField& q, int s, int t)
{
    if (s < 0 || t > time.K || s >= t) throw InvalidArgument("value function needs 0 <= s < t <= K");
    check_field(*domain, time, q);
    const int n = domain->num_cells();
    const double dt = time.dt();
    const Eigen::MatrixXd c = cell_cost_matrix(*domain) / (2.0 * dt);

    // vt(y, x) holds the value from x to y; columns are contiguous per source.
    Eigen::MatrixXd vt = c;
    for (int x = 0; x < n; ++x) vt.col(x).array() -= dt * q.at(s)[x];
    Eigen::MatrixXd next(n, n);
    for (int k = s + 1; k < t; ++k) {
        next.setConstant(std::numeric_limits<double>::infinity());
        const Eigen::VectorXd& qk = q.at(k);
        for (int x = 0; x < n; ++x) {
            auto dst = next.col(x);
            for (int z = 0; z < n; ++z) {
                const double a = vt(z, x) - dt * qk[z];
                dst = dst.cwiseMin((c.col(z).array() + a).matrix());
            }
        }
        vt.swap(next);
    }
    return ValueFunction{domain, s, t, vt.transpose()};
}

double path_lagrangian(const GridDomain& domain, const TimeGrid& time, const TimeField& q, std::span<const int> path,
                       int s, int t)
{
    const double dt = time.dt();
    double l = 0.0;
    for (int k = s; k < t; ++k)
        l += domain.sq_dist_cells(path[k], path[k + 1]) / (2.0 * dt) - dt * q.at(k)[path[k]];
    return l;
}

nlohmann::json ConditionIReport::to_json() const
{
    return {{"s", s},
            {"t", t},
            {"tolerance", tolerance},
            {"paths_checked", paths_checked},
            {"mass_checked", mass_checked},
            {"violating_fraction", violating_fraction},
            {"max_violation", max_violation},
            {"mean_violation", mean_violation},
            {"pass", pass}};
}

nlohmann::json ConditionIIReport::to_json() const
{
    return {{"s", s},
            {"t", t},
            {"tolerance", tolerance},
            {"labels_checked", labels_checked},
            {"labels_skipped", labels_skipped},
            {"weighted_gap", weighted_gap},
            {"worst_gap", worst_gap},
            {"worst_label", worst_label},
            {"dropped_mass", dropped_mass},
            {"pass", pass}};
}

namespace {

double tolerance_for(const GeneralizedFlow& flow, const CheckOptions& o) { return o.relative_tol * flow.action() + 1e-9; }

}  // namespace

ConditionIReport check_condition_i(const GeneralizedFlow& flow, const TimeField& q, int s, int t,
                                   const CheckOptions& options)
{
    const GridDomain& d = *flow.domain();
    check_field(d, flow.time(), q);
    const ValueFunction vf = value_function(flow.domain(), flow.time(), q, s, t);
    const auto support = flow.support_paths(options.samples, options.seed);

    ConditionIReport r;
    r.s = s;
    r.t = t;
    r.tolerance = tolerance_for(flow, options);
    double violating = 0.0, weighted = 0.0;
    for (int i = 0; i < support->num_paths(); ++i) {
        const double m = support->mass(i);
        const double lm = support->label_mass(support->label(i));
        if (!(m > 0) || m < options.support_floor * lm) continue;
        const auto p = support->path(i);
        const double gap = path_lagrangian(d, flow.time(), q, p, s, t) - vf.cost(p[s], p[t]);
        ++r.paths_checked;
        r.mass_checked += m;
        weighted += m * gap;
        r.max_violation = std::max(r.max_violation, gap);
        if (gap > r.tolerance) violating += m;
    }
    if (r.mass_checked > 0) {
        r.violating_fraction = violating / r.mass_checked;
        r.mean_violation = weighted / r.mass_checked;
    }
    r.pass = r.paths_checked > 0 && r.violating_fraction <= options.max_violation_fraction;
    return r;
}

ConditionIIReport check_condition_ii(const GeneralizedFlow& flow, const TimeField& q, int s, int t,
                                     const CheckOptions& options)
{
    const GridDomain& d = *flow.domain();
    check_field(d, flow.time(), q);
    const ValueFunction vf = value_function(flow.domain(), flow.time(), q, s, t);

    ConditionIIReport r;
    r.s = s;
    r.t = t;
    r.tolerance = tolerance_for(flow, options);
    double total = 0.0, weighted = 0.0;
    flow.for_each_label_coupling(s, t, options.support_floor, [&](const LabelCoupling& lc) {
        r.dropped_mass += lc.dropped_mass;
        const int m = static_cast<int>(lc.rows.size()), k = static_cast<int>(lc.cols.size());
        const double kept = lc.matrix.sum();
        if (m == 0 || k == 0 || !(kept > 0) || m > kExactOtMaxAtoms || k > kExactOtMaxAtoms) {
            ++r.labels_skipped;
            return;
        }
        Eigen::MatrixXd c(m, k);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < k; ++j) c(i, j) = vf.cost(lc.rows[i], lc.cols[j]);
        const Eigen::MatrixXd plan = lc.matrix / kept;
        const Eigen::VectorXd mu = plan.rowwise().sum();
        const Eigen::VectorXd nu = plan.colwise().sum().transpose();
        double gap = 0.0;
        // A Dirac marginal leaves one feasible plan.
        if (m > 1 && k > 1) {
            const double cost = (plan.array() * c.array()).sum();
            gap = std::max(0.0, cost - solve_ot_exact(c, mu, nu).cost);
        }
        ++r.labels_checked;
        total += lc.mass;
        weighted += lc.mass * gap;
        if (r.worst_label < 0 || gap > r.worst_gap) {
            r.worst_gap = gap;
            r.worst_label = lc.label;
        }
    });
    if (total > 0) r.weighted_gap = weighted / total;
    r.pass = r.labels_checked > 0 && r.weighted_gap <= r.tolerance;
    return r;
}

std::vector<std::pair<int, int>> dyadic_intervals(int K)
{
    std::vector<std::pair<int, int>> out;
    for (auto [a, b] : {std::pair{K / 4, K / 2}, std::pair{K / 4, (3 * K) / 4}, std::pair{K / 2, (3 * K) / 4}}) {
        if (a >= b) continue;
        if (std::find(out.begin(), out.end(), std::pair{a, b}) == out.end()) out.emplace_back(a, b);
    }
    return out;
}

nlohmann::json Certificate::to_json() const
{
    nlohmann::json ii = nlohmann::json::array();
    for (const auto& r : condition_ii) ii.push_back(r.to_json());
    char fh[17], qh[17];
    std::snprintf(fh, sizeof fh, "%016llx", static_cast<unsigned long long>(flow_hash));
    std::snprintf(qh, sizeof qh, "%016llx", static_cast<unsigned long long>(q_hash));
    return {{"certified", certified}, {"flow_hash", fh},           {"q_hash", qh},
            {"action", action},       {"condition_i", condition_i.to_json()}, {"condition_ii", ii}};
}

Certificate certify(const GeneralizedFlow& flow, const TimeField& q, const CheckOptions& options)
{
    Certificate c;
    c.flow_hash = flow.fingerprint();
    c.q_hash = q.fingerprint();
    c.action = flow.action();
    c.condition_i = check_condition_i(flow, q, 0, flow.time().K, options);
    bool ok = c.condition_i.pass;
    for (auto [s, t] : dyadic_intervals(flow.time().K)) {
        c.condition_ii.push_back(check_condition_ii(flow, q, s, t, options));
        ok = ok && c.condition_ii.back().pass;
    }
    c.certified = ok;
    return c;
}

}  // namespace gflow
