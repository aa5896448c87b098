#include "gflow/geodesic.hpp"

#include "gflow/error.hpp"
#include "gflow/linear_program.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gflow {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_gamma_plan(const GridDomain& domain, const TransportPlan& p, const char* what)
{
    const int n = domain.num_cells();
    if (p.rows() != n || p.cols() != n) throw InvalidArgument(std::string(what) + ": plan shape must be cells x cells");
    if (p.matrix.minCoeff() < 0.0) throw InvalidArgument(std::string(what) + ": negative plan entry");
    const double rv = (p.matrix.rowwise().sum() - domain.weights()).cwiseAbs().sum();
    const double cv = (p.matrix.colwise().sum().transpose() - domain.weights()).cwiseAbs().sum();
    if (rv > 1e-9 || cv > 1e-9)
        throw InvalidArgument(std::string(what) + ": plan marginals differ from the cell measure (L1 defects " +
                              std::to_string(rv) + ", " + std::to_string(cv) + ")");
}

// Row-wise log-sum-exp of a lattice x label matrix.
// log sum_a exp(a(g, .) + b(g, .)) per row; `work` is scratch.
Eigen::VectorXd row_lse_sum(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Eigen::MatrixXd& work)
{
    work.resize(a.rows(), a.cols());
    work.noalias() = a + b;
    Eigen::VectorXd mx = work.rowwise().maxCoeff();
    const Eigen::ArrayXd fin = mx.array().isFinite().cast<double>();
    mx = (fin > 0).select(mx.array(), 0.0).matrix();
    work.colwise() -= mx;
    work.array() = work.array().exp();
    const Eigen::ArrayXd sum = work.rowwise().sum();
    return (fin > 0).select(mx.array() + sum.log(), kNegInf).matrix();
}

class ChainSolver {
public:
    ChainSolver(const DomainPtr& domain, const TimeGrid& time, const EndpointLaws& laws, const SolverConfig& cfg)
        : domain_(domain), time_(time), cfg_(cfg), G_(domain->grid_size()), P_(static_cast<int>(laws.start.rows())),
          K_(time.K)
    {
        const int n = domain->num_cells();
        log_start_ = Eigen::MatrixXd::Constant(G_, P_, kNegInf);
        log_end_ = Eigen::MatrixXd::Constant(G_, P_, kNegInf);
        for (int a = 0; a < P_; ++a)
            for (int c = 0; c < n; ++c) {
                const int g = domain->grid_index(c);
                if (laws.start(a, c) > 0) log_start_(g, a) = std::log(laws.start(a, c));
                if (laws.end(a, c) > 0) log_end_(g, a) = std::log(laws.end(a, c));
            }
        logw_ = Eigen::VectorXd::Constant(G_, kNegInf);
        w_ = Eigen::VectorXd::Zero(G_);
        for (int c = 0; c < n; ++c) {
            logw_[domain->grid_index(c)] = std::log(domain->weight(c));
            w_[domain->grid_index(c)] = domain->weight(c);
        }
        u_.assign(K_ + 1, Eigen::VectorXd::Zero(G_));
        alpha_ = (log_start_.array() > kNegInf).select(Eigen::MatrixXd::Zero(G_, P_), kNegInf);
        beta_ = (log_end_.array() > kNegInf).select(Eigen::MatrixXd::Zero(G_, P_), kNegInf);
    }

    std::shared_ptr<const ChainFlow> run()
    {
        const double dt = time_.dt();
        const double start = cfg_.epsilon_start.value_or(median_step_cost(*domain_, dt));
        const double floor = cfg_.epsilon_floor.value_or(1e-4 * start);
        std::vector<double> schedule;
        for (double e = start; e > floor * (1.0 + 1e-12); e *= cfg_.epsilon_factor) schedule.push_back(e);
        schedule.push_back(floor);

        SolveReport report;
        struct Saved {
            std::vector<Eigen::VectorXd> u;
            Eigen::MatrixXd alpha, beta;
            double eps;
        };
        std::optional<Saved> last_good;
        for (std::size_t s = 0; s < schedule.size(); ++s) {
            const bool final_stage = s + 1 == schedule.size();
            const double eps = schedule[s];
            const double tol = final_stage ? cfg_.marginal_tol : std::max(cfg_.marginal_tol, cfg_.stage_tol);
            const int before = sweeps_;
            try {
                normalize_gauge();
                enter_stage(eps);
                converged_ = iterate(tol, report);
            } catch (const NumericalBreakdown& e) {
                if (!cfg_.stop_on_underflow || !last_good) throw;
                u_ = last_good->u;
                alpha_ = last_good->alpha;
                beta_ = last_good->beta;
                report.note = "epsilon " + std::to_string(eps) + " underflows the kernel (" + e.what() +
                              "); stopped at " + std::to_string(last_good->eps);
                enter_stage(last_good->eps);
                converged_ = iterate(cfg_.marginal_tol, report);
                report.epsilon_trace.push_back(last_good->eps);
                report.stage_sweeps.push_back(sweeps_ - before);
                break;
            }
            report.epsilon_trace.push_back(eps);
            report.stage_sweeps.push_back(sweeps_ - before);
            leave_stage();
            last_good = Saved{u_, alpha_, beta_, eps};
            if (sweeps_ >= cfg_.max_sweeps) break;
        }
        report.converged = converged_ && report.epsilon_trace.back() == floor;
        report.sweeps = sweeps_;
        measure(report);

        ChainState st;
        st.kernel = kernel_;
        st.time = time_;
        st.labels = P_;
        st.potential.assign(K_ + 1, Eigen::VectorXd::Zero(G_));
        for (int k = 1; k < K_; ++k) st.potential[k] = kernel_->epsilon() * (ld_[k] - logw_);
        for (int k = 1; k < K_; ++k)
            for (int g = 0; g < G_; ++g)
                if (!std::isfinite(st.potential[k][g])) st.potential[k][g] = 0.0;
        st.log_factor = ld_;
        st.forward = std::move(F_);
        st.backward = std::move(B_);
        st.log_start = log_start_;
        st.log_end = log_end_;
        st.report = std::move(report);
        return std::make_shared<ChainFlow>(std::move(st));
    }

private:
    // Potentials shifted to mean zero per slice; the total moves into beta.
    void normalize_gauge()
    {
        double total = 0.0;
        for (int k = 1; k < K_; ++k) {
            const double c = (w_.array() * u_[k].array()).sum();
            u_[k].array() -= c;
            total += c;
        }
        beta_ = (beta_.array() > kNegInf).select(beta_.array() + total, kNegInf);
    }

    void enter_stage(double eps)
    {
        kernel_ = std::make_shared<StepKernel>(domain_, time_.dt(), eps, cfg_.backend);
        ld_.assign(K_ + 1, Eigen::VectorXd::Zero(G_));
        for (int k = 1; k < K_; ++k) ld_[k] = u_[k] / eps + logw_;
        F_.assign(K_ + 1, Eigen::MatrixXd());
        B_.assign(K_ + 1, Eigen::MatrixXd());
        F_[0] = alpha_ / eps;
        B_[K_] = beta_ / eps;
        backward();
        forward_from(1);
    }

    void leave_stage()
    {
        const double eps = kernel_->epsilon();
        for (int k = 1; k < K_; ++k) {
            u_[k] = eps * (ld_[k] - logw_);
            for (int g = 0; g < G_; ++g)
                if (!std::isfinite(u_[k][g])) u_[k][g] = 0.0;
        }
        alpha_ = eps * F_[0];
        beta_ = eps * B_[K_];
    }

    void step(const Eigen::MatrixXd& from, const Eigen::VectorXd& factor, Eigen::MatrixXd& to)
    {
        tmp_.resize(from.rows(), from.cols());
        tmp_.noalias() = from;
        tmp_.colwise() += factor;
        kernel_->apply(tmp_, to);
    }

    void backward()
    {
        for (int k = K_ - 1; k >= 0; --k) step(B_[k + 1], ld_[k + 1], B_[k]);
    }

    void forward_from(int first)
    {
        for (int k = first; k <= K_; ++k) step(F_[k - 1], ld_[k - 1], F_[k]);
    }

    // log target - log current on the support of the target.
    void match_endpoint(const Eigen::MatrixXd& target, const Eigen::MatrixXd& other, Eigen::MatrixXd& mine,
                        const char* which)
    {
        for (int a = 0; a < P_; ++a)
            for (int g = 0; g < G_; ++g) {
                if (target(g, a) == kNegInf) {
                    mine(g, a) = kNegInf;
                    continue;
                }
                if (!std::isfinite(other(g, a)))
                    throw NumericalBreakdown(std::string(which) + " bridge normalizer vanished");
                mine(g, a) = target(g, a) - other(g, a);
            }
    }

    void sweep()
    {
        match_endpoint(log_start_, B_[0], F_[0], "start");
        for (int k = 1; k < K_; ++k) {
            step(F_[k - 1], ld_[k - 1], F_[k]);
            const Eigen::VectorXd m = row_lse_sum(F_[k], B_[k], tmp_);
            for (int c = 0; c < domain_->num_cells(); ++c) {
                const int g = domain_->grid_index(c);
                if (!std::isfinite(m[g])) throw NumericalBreakdown("slice marginal vanished at a cell");
                ld_[k][g] += omega_ * (logw_[g] - (m[g] + ld_[k][g]));
            }
        }
        step(F_[K_ - 1], ld_[K_ - 1], F_[K_]);
        match_endpoint(log_end_, F_[K_], B_[K_], "end");
        backward();
        ++sweeps_;
    }

    bool iterate(double tol, SolveReport& report)
    {
        omega_ = cfg_.relaxation;
        double prev = std::numeric_limits<double>::infinity();
        for (int local = 0;; ++local) {
            if (local % cfg_.check_every == 0 || sweeps_ >= cfg_.max_sweeps) {
                const double r = residual();
                report.residual_log.emplace_back(sweeps_, r);
                if (cfg_.progress) cfg_.progress(sweeps_, kernel_->epsilon(), r);
                if (r <= tol) return true;
                // over-relaxation is only kept while it makes progress
                if (r > prev) omega_ = 1.0;
                prev = r;
                if (sweeps_ >= cfg_.max_sweeps) return false;
            }
            sweep();
        }
    }

    double endpoint_defect(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& target) const
    {
        double s = 0.0;
        for (int l = 0; l < P_; ++l)
            for (int c = 0; c < domain_->num_cells(); ++c) {
                const int g = domain_->grid_index(c);
                const double v = std::isfinite(a(g, l) + b(g, l)) ? std::exp(a(g, l) + b(g, l)) : 0.0;
                const double t = target(g, l) == kNegInf ? 0.0 : std::exp(target(g, l));
                s += std::abs(v - t);
            }
        return s;
    }

    double slice_defect(int k) const
    {
        const Eigen::VectorXd m = row_lse_sum(F_[k], B_[k], tmp_);
        double s = 0.0;
        for (int c = 0; c < domain_->num_cells(); ++c) {
            const int g = domain_->grid_index(c);
            const double v = std::isfinite(m[g] + ld_[k][g]) ? std::exp(m[g] + ld_[k][g]) : 0.0;
            s += std::abs(v - w_[g]);
        }
        return s;
    }

    void measure(SolveReport& r) const
    {
        r.start_residual = endpoint_defect(F_[0], B_[0], log_start_);
        r.end_residual = endpoint_defect(F_[K_], B_[K_], log_end_);
        r.slice_residual = 0.0;
        for (int k = 1; k < K_; ++k) r.slice_residual = std::max(r.slice_residual, slice_defect(k));
    }

    double residual() const
    {
        SolveReport r;
        measure(r);
        return r.residual();
    }

    DomainPtr domain_;
    TimeGrid time_;
    SolverConfig cfg_;
    int G_, P_, K_;
    Eigen::MatrixXd log_start_, log_end_;
    Eigen::VectorXd logw_, w_;
    std::vector<Eigen::VectorXd> u_;
    Eigen::MatrixXd alpha_, beta_;

    std::shared_ptr<const StepKernel> kernel_;
    std::vector<Eigen::VectorXd> ld_;
    std::vector<Eigen::MatrixXd> F_, B_;
    mutable Eigen::MatrixXd tmp_;
    double omega_ = 1.0;
    int sweeps_ = 0;
    bool converged_ = false;
};

}  // namespace

void SolverConfig::validate() const
{
    if (epsilon_start && !(*epsilon_start > 0.0)) throw InvalidArgument("epsilon_start must be positive");
    if (epsilon_floor && !(*epsilon_floor > 0.0)) throw InvalidArgument("epsilon_floor must be positive");
    if (epsilon_start && epsilon_floor && *epsilon_floor > *epsilon_start)
        throw InvalidArgument("epsilon_floor must not exceed epsilon_start");
    if (!(epsilon_factor > 0.0 && epsilon_factor < 1.0)) throw InvalidArgument("epsilon_factor must lie in (0, 1)");
    if (!(marginal_tol > 0.0)) throw InvalidArgument("marginal_tol must be positive");
    if (!(stage_tol > 0.0)) throw InvalidArgument("stage_tol must be positive");
    if (max_sweeps < 1) throw InvalidArgument("max_sweeps must be >= 1");
    if (check_every < 1) throw InvalidArgument("check_every must be >= 1");
    if (dense_cap < 1) throw InvalidArgument("dense_cap must be >= 1");
    if (!(relaxation >= 1.0 && relaxation < 2.0)) throw InvalidArgument("relaxation must lie in [1, 2)");
}

nlohmann::json SolverConfig::to_json() const
{
    nlohmann::json j = {{"epsilon_factor", epsilon_factor}, {"marginal_tol", marginal_tol},
                        {"stage_tol", stage_tol},           {"max_sweeps", max_sweeps},
                        {"check_every", check_every},       {"dense_cap", dense_cap},
                        {"seed", seed},                     {"backend", to_string(backend)},
                        {"stop_on_underflow", stop_on_underflow}, {"relaxation", relaxation}};
    j["epsilon_start"] = epsilon_start ? nlohmann::json(*epsilon_start) : nlohmann::json(nullptr);
    j["epsilon_floor"] = epsilon_floor ? nlohmann::json(*epsilon_floor) : nlohmann::json(nullptr);
    return j;
}

Eigen::MatrixXd step_cost(const GridDomain& domain, double dt)
{
    if (!(dt > 0.0)) throw InvalidArgument("step_cost needs dt > 0");
    return cell_cost_matrix(domain) / (2.0 * dt);
}

EndpointLaws endpoint_laws(const GridDomain& domain, const EndpointConstraint& endpoint)
{
    const Eigen::MatrixXd diag = domain.weights().asDiagonal();
    if (const auto* m = std::get_if<MapEndpoint>(&endpoint)) {
        return {diag, plan_from_map(domain, m->permutation).matrix};
    }
    if (const auto* p = std::get_if<PlanEndpoint>(&endpoint)) {
        check_gamma_plan(domain, p->plan, "endpoint plan");
        return {diag, p->plan.matrix};
    }
    const auto& l = std::get<LabelledEndpoint>(endpoint);
    check_gamma_plan(domain, l.gamma, "gamma");
    check_gamma_plan(domain, l.eta_final, "eta_final");
    return {l.gamma.matrix, l.eta_final.matrix};
}

EndpointConstraint reversed(const GridDomain& domain, const EndpointConstraint& endpoint)
{
    if (const auto* m = std::get_if<MapEndpoint>(&endpoint)) {
        std::vector<int> inv(m->permutation.size());
        for (std::size_t i = 0; i < inv.size(); ++i) inv[m->permutation[i]] = static_cast<int>(i);
        return MapEndpoint{inv};
    }
    if (const auto* p = std::get_if<PlanEndpoint>(&endpoint)) {
        return PlanEndpoint{{p->plan.col_measure, p->plan.row_measure, p->plan.matrix.transpose()}};
    }
    (void)domain;
    const auto& l = std::get<LabelledEndpoint>(endpoint);
    return LabelledEndpoint{l.eta_final, l.gamma};
}

std::shared_ptr<const ChainFlow> solve_geodesic(const DomainPtr& domain, const TimeGrid& time,
                                                const EndpointConstraint& endpoint, const SolverConfig& config)
{
    config.validate();
    const EndpointLaws laws = endpoint_laws(*domain, endpoint);
    return ChainSolver(domain, time, laws, config).run();
}

std::shared_ptr<const ChainFlow> solve_el_geodesic(const DomainPtr& domain, const TimeGrid& time,
                                                   const TransportPlan& gamma, const TransportPlan& eta_final,
                                                   const SolverConfig& config)
{
    return solve_geodesic(domain, time, LabelledEndpoint{gamma, eta_final}, config);
}

BruteForceResult brute_force_geodesic(const DomainPtr& domain, const TimeGrid& time,
                                      const EndpointConstraint& endpoint, long long dense_cap)
{
    if (std::holds_alternative<LabelledEndpoint>(endpoint))
        throw InvalidArgument("brute_force_geodesic handles unlabelled endpoints only");
    const EndpointLaws laws = endpoint_laws(*domain, endpoint);
    const int n = domain->num_cells();
    const int K = time.K;
    long long total = 1;
    for (int k = 0; k <= K; ++k) {
        total *= n;
        if (total > dense_cap)
            throw SizeLimitExceeded("brute_force_geodesic: " + std::to_string(n) + "^" + std::to_string(K + 1) +
                                    " tuples exceed the cap of " + std::to_string(dense_cap));
    }
    // Columns only for tuples whose endpoint pair carries mass.
    std::vector<std::vector<int>> tuples;
    std::vector<int> idx(K + 1, 0);
    for (long long t = 0; t < total; ++t) {
        long long r = t;
        for (int k = K; k >= 0; --k) {
            idx[k] = static_cast<int>(r % n);
            r /= n;
        }
        if (laws.end(idx[0], idx[K]) > 0) tuples.push_back(idx);
    }
    const int m = static_cast<int>(tuples.size());
    const int rows = n * n + (K - 1) * n;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, m);
    Eigen::VectorXd b(rows), c(m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) b[i * n + j] = laws.end(i, j);
    for (int k = 1; k < K; ++k) b.segment(n * n + (k - 1) * n, n) = domain->weights();
    const double dt = time.dt();
    for (int v = 0; v < m; ++v) {
        const auto& p = tuples[v];
        A(p[0] * n + p[K], v) = 1.0;
        for (int k = 1; k < K; ++k) A(n * n + (k - 1) * n + p[k], v) = 1.0;
        double cost = 0.0;
        for (int k = 0; k < K; ++k) cost += domain->sq_dist_cells(p[k], p[k + 1]) / (2.0 * dt);
        c[v] = cost;
    }
    const LpResult lp = solve_standard_lp(A, b, c);
    if (lp.status != LpResult::Status::Optimal) throw NumericalBreakdown("brute_force_geodesic: LP not solved");
    std::vector<int> cells;
    std::vector<double> masses;
    for (int v = 0; v < m; ++v) {
        if (lp.x[v] <= 1e-14) continue;
        cells.insert(cells.end(), tuples[v].begin(), tuples[v].end());
        masses.push_back(lp.x[v]);
    }
    BruteForceResult r;
    r.flow = std::make_shared<DenseFlow>(domain, time, std::move(cells), std::move(masses));
    r.action = lp.objective;
    r.tuples = total;
    return r;
}

double slice_marginal_defect(const GeneralizedFlow& flow)
{
    double worst = 0.0;
    for (int k = 0; k <= flow.time().K; ++k)
        worst = std::max(worst, (flow.slice_marginal(k) - flow.domain()->weights()).cwiseAbs().sum());
    return worst;
}

}  // namespace gflow
