#include "gflow/transport.hpp"

#include "gflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <queue>

namespace gflow {

double TransportPlan::row_violation() const
{
    return (matrix.rowwise().sum() - row_measure).cwiseAbs().maxCoeff();
}

double TransportPlan::col_violation() const
{
    return (matrix.colwise().sum().transpose() - col_measure).cwiseAbs().maxCoeff();
}

double TransportPlan::cost(const Eigen::MatrixXd& cost_matrix) const
{
    return matrix.cwiseProduct(cost_matrix).sum();
}

TransportPlan TransportPlan::product(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu)
{
    return {mu, nu, mu * nu.transpose()};
}

TransportPlan TransportPlan::diagonal(const Eigen::VectorXd& mu)
{
    return {mu, mu, Eigen::MatrixXd(mu.asDiagonal())};
}

namespace {

void check_measures(const Eigen::MatrixXd& cost, const Eigen::VectorXd& mu, const Eigen::VectorXd& nu)
{
    if (cost.rows() != mu.size() || cost.cols() != nu.size())
        throw InvalidArgument("cost matrix shape does not match the marginals");
    if (mu.size() == 0 || nu.size() == 0) throw InvalidArgument("empty marginal");
    if (!cost.allFinite()) throw InvalidArgument("cost matrix has non-finite entries");
    if ((mu.array() < 0).any() || (nu.array() < 0).any()) throw InvalidArgument("negative marginal mass");
    const double sm = mu.sum();
    const double sn = nu.sum();
    if (std::abs(sm - sn) > 1e-9 * std::max(1.0, sm)) throw InvalidArgument("marginal masses differ");
}

// Transportation simplex. Nodes 0..m-1 are rows, m..m+k-1 are columns; the
// basis is a spanning tree with m+k-1 cells (degenerate zero flows allowed).
class TransportationSimplex {
public:
    TransportationSimplex(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b)
        : cost_(cost), m_(static_cast<int>(a.size())), k_(static_cast<int>(b.size())), adj_(m_ + k_)
    {
        northwest_corner(a, b);
        tol_ = 1e-12 * (1.0 + cost.cwiseAbs().maxCoeff());
    }

    int solve()
    {
        int pivots = 0;
        int degenerate_run = 0;
        const int max_pivots = 50 * (m_ + k_) * (m_ + k_) + 1000;
        Eigen::VectorXd u(m_), v(k_);
        while (pivots < max_pivots) {
            compute_potentials(u, v);
            // Dantzig pricing; Bland after long degenerate runs to rule out cycling.
            const bool bland = degenerate_run > 2 * (m_ + k_);
            int ei = -1, ej = -1;
            double best = -tol_;
            for (int i = 0; i < m_ && !(bland && ei >= 0); ++i) {
                for (int j = 0; j < k_; ++j) {
                    const double r = cost_(i, j) - u[i] - v[j];
                    if (r < best) {
                        best = r;
                        ei = i;
                        ej = j;
                        if (bland) break;
                    }
                }
            }
            if (ei < 0) break;
            const double theta = pivot(ei, ej);
            degenerate_run = theta > 0.0 ? 0 : degenerate_run + 1;
            ++pivots;
        }
        return pivots;
    }

    Eigen::MatrixXd plan() const
    {
        Eigen::MatrixXd p = Eigen::MatrixXd::Zero(m_, k_);
        for (const auto& c : cells_) {
            if (c.alive) p(c.i, c.j) += std::max(0.0, c.flow);
        }
        return p;
    }

private:
    struct Cell {
        int i, j;
        double flow;
        bool alive;
    };

    void add_cell(int i, int j, double flow)
    {
        const int id = static_cast<int>(cells_.size());
        cells_.push_back({i, j, flow, true});
        adj_[i].push_back(id);
        adj_[m_ + j].push_back(id);
    }

    void remove_cell(int id)
    {
        cells_[id].alive = false;
        auto drop = [id](std::vector<int>& v) { v.erase(std::find(v.begin(), v.end(), id)); };
        drop(adj_[cells_[id].i]);
        drop(adj_[m_ + cells_[id].j]);
    }

    int other_end(int id, int node) const
    {
        const Cell& c = cells_[id];
        return node < m_ ? m_ + c.j : c.i;
    }

    void northwest_corner(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
    {
        int i = 0, j = 0;
        double ra = a[0], rb = b[0];
        while (true) {
            const double q = std::min(ra, rb);
            add_cell(i, j, q);
            ra -= q;
            rb -= q;
            if (i == m_ - 1 && j == k_ - 1) break;
            const bool advance_row = (ra <= rb && i < m_ - 1) || j == k_ - 1;
            if (advance_row) {
                ++i;
                ra = a[i];
            } else {
                ++j;
                rb = b[j];
            }
        }
    }

    void compute_potentials(Eigen::VectorXd& u, Eigen::VectorXd& v) const
    {
        std::vector<char> seen(m_ + k_, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        u[0] = 0.0;
        while (!stack.empty()) {
            const int node = stack.back();
            stack.pop_back();
            for (int id : adj_[node]) {
                const int next = other_end(id, node);
                if (seen[next]) continue;
                seen[next] = 1;
                const Cell& c = cells_[id];
                if (next >= m_) v[c.j] = cost_(c.i, c.j) - u[c.i];
                else u[c.i] = cost_(c.i, c.j) - v[c.j];
                stack.push_back(next);
            }
        }
    }

    // Enter cell (ei, ej); returns the step length theta.
    double pivot(int ei, int ej)
    {
        // Tree path from row ei to column ej.
        const int src = ei;
        const int dst = m_ + ej;
        std::vector<int> parent_edge(m_ + k_, -1);
        std::vector<char> seen(m_ + k_, 0);
        std::queue<int> q;
        q.push(src);
        seen[src] = 1;
        while (!q.empty() && !seen[dst]) {
            const int node = q.front();
            q.pop();
            for (int id : adj_[node]) {
                const int next = other_end(id, node);
                if (seen[next]) continue;
                seen[next] = 1;
                parent_edge[next] = id;
                q.push(next);
            }
        }
        std::vector<int> path;  // edges from dst back to src
        for (int node = dst; node != src;) {
            const int id = parent_edge[node];
            path.push_back(id);
            node = other_end(id, node);
        }
        // Walking src -> dst the first edge loses flow, then signs alternate.
        std::reverse(path.begin(), path.end());
        double theta = std::numeric_limits<double>::infinity();
        int leaving = -1;
        for (std::size_t e = 0; e < path.size(); e += 2) {
            const double f = cells_[path[e]].flow;
            if (f < theta) {
                theta = f;
                leaving = path[e];
            }
        }
        theta = std::max(0.0, theta);
        for (std::size_t e = 0; e < path.size(); ++e) cells_[path[e]].flow += (e % 2 == 0 ? -theta : theta);
        remove_cell(leaving);
        add_cell(ei, ej, theta);
        return theta;
    }

    const Eigen::MatrixXd& cost_;
    int m_, k_;
    double tol_ = 0.0;
    std::vector<Cell> cells_;
    std::vector<std::vector<int>> adj_;
};

double log_sum_exp(const double* v, int n)
{
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) mx = std::max(mx, v[i]);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(v[i] - mx);
    return mx + std::log(s);
}

}  // namespace

ExactOtResult solve_ot_exact(const Eigen::MatrixXd& cost, const Eigen::VectorXd& mu, const Eigen::VectorXd& nu)
{
    check_measures(cost, mu, nu);
    if (mu.size() > kExactOtMaxAtoms || nu.size() > kExactOtMaxAtoms)
        throw SizeLimitExceeded("solve_ot_exact accepts at most " + std::to_string(kExactOtMaxAtoms) +
                                " atoms per side, got " + std::to_string(mu.size()) + "x" + std::to_string(nu.size()));
    // Rescale the column mass so both totals agree to the last bit.
    Eigen::VectorXd nu_adj = nu * (mu.sum() / nu.sum());
    TransportationSimplex simplex(cost, mu, nu_adj);
    ExactOtResult r;
    r.pivots = simplex.solve();
    r.plan = {mu, nu, simplex.plan()};
    r.cost = r.plan.cost(cost);
    return r;
}

EntropicOtResult solve_ot_entropic(const Eigen::MatrixXd& cost, const Eigen::VectorXd& mu, const Eigen::VectorXd& nu,
                                   const EntropicOtOptions& opt)
{
    check_measures(cost, mu, nu);
    if (!(opt.epsilon > 0.0)) throw InvalidArgument("entropic OT needs epsilon > 0");
    const int m = static_cast<int>(mu.size());
    const int k = static_cast<int>(nu.size());
    const Eigen::ArrayXd log_mu = mu.array().log();
    const Eigen::ArrayXd log_nu = nu.array().log();

    EntropicOtResult r;
    r.u = opt.u0 ? *opt.u0 : Eigen::VectorXd::Zero(m);
    r.v = opt.v0 ? *opt.v0 : Eigen::VectorXd::Zero(k);
    if (r.u.size() != m || r.v.size() != k) throw InvalidArgument("warm-start potentials have the wrong length");

    std::vector<double> schedule;
    if (opt.epsilon_start && *opt.epsilon_start > opt.epsilon) {
        for (double e = *opt.epsilon_start; e > opt.epsilon; e *= opt.epsilon_factor) schedule.push_back(e);
    }
    schedule.push_back(opt.epsilon);

    std::vector<double> buf(static_cast<std::size_t>(std::max(m, k)));
    auto update_u = [&](double eps) {
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < k; ++j) buf[j] = log_nu[j] + (r.v[j] - cost(i, j)) / eps;
            r.u[i] = -eps * log_sum_exp(buf.data(), k);
        }
    };
    auto update_v = [&](double eps) {
        for (int j = 0; j < k; ++j) {
            for (int i = 0; i < m; ++i) buf[i] = log_mu[i] + (r.u[i] - cost(i, j)) / eps;
            r.v[j] = -eps * log_sum_exp(buf.data(), m);
        }
    };
    auto plan_at = [&](double eps) {
        Eigen::MatrixXd p(m, k);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < k; ++j) p(i, j) = std::exp(log_mu[i] + log_nu[j] + (r.u[i] + r.v[j] - cost(i, j)) / eps);
        return p;
    };

    // Intermediate stages stop at a looser tolerance.
    for (std::size_t s = 0; s < schedule.size(); ++s) {
        const double eps = schedule[s];
        const bool last = s + 1 == schedule.size();
        const double stage_tol = last ? opt.tol : std::max(opt.tol, 1e-6);
        r.epsilon_trace.push_back(eps);
        bool ok = false;
        while (r.iterations < opt.max_iter) {
            update_u(eps);
            update_v(eps);
            ++r.iterations;
            if (r.iterations % 5 == 0 || last) {
                const Eigen::MatrixXd p = plan_at(eps);
                r.row_violation = (p.rowwise().sum() - mu).cwiseAbs().maxCoeff();
                if (r.row_violation <= stage_tol) {
                    ok = true;
                    break;
                }
            }
        }
        if (last) r.converged = ok;
        if (!ok && !last && r.iterations >= opt.max_iter) break;
    }

    const double eps = opt.epsilon;
    r.plan = {mu, nu, plan_at(eps)};
    r.row_violation = r.plan.row_violation();
    r.transport_cost = r.plan.cost(cost);
    double kl = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) {
            const double p = r.plan.matrix(i, j);
            if (p > 0) kl += p * (r.u[i] + r.v[j] - cost(i, j)) / eps;
        }
    r.relative_entropy = kl;
    return r;
}

TransportPlan plan_from_map(const GridDomain& domain, const std::vector<int>& permutation)
{
    const int n = domain.num_cells();
    if (static_cast<int>(permutation.size()) != n) throw InvalidArgument("plan_from_map: wrong permutation length");
    std::vector<char> hit(n, 0);
    for (int i = 0; i < n; ++i) {
        const int j = permutation[i];
        if (j < 0 || j >= n || hit[j]) throw InvalidArgument("plan_from_map: map is not a bijection of cells");
        hit[j] = 1;
        if (std::abs(domain.weight(i) - domain.weight(j)) > 1e-12 * domain.weight(i))
            throw InvalidArgument("plan_from_map: bijection does not preserve the cell measure");
    }
    TransportPlan p{domain.weights(), domain.weights(), Eigen::MatrixXd::Zero(n, n)};
    for (int i = 0; i < n; ++i) p.matrix(i, permutation[i]) = domain.weight(i);
    return p;
}

double graph_concentration(const TransportPlan& plan)
{
    const double total = plan.total_mass();
    if (!(total > 0)) throw InvalidArgument("graph_concentration of an empty plan");
    return plan.matrix.rowwise().maxCoeff().sum() / total;
}

Eigen::MatrixXd cell_cost_matrix(const GridDomain& domain)
{
    const int n = domain.num_cells();
    Eigen::MatrixXd c(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) c(i, j) = domain.sq_dist_cells(i, j);
    return c;
}

void write_plan_csv(std::ostream& out, const TransportPlan& plan, double min_mass)
{
    out << "i,j,mass\n";
    out.precision(17);
    for (int i = 0; i < plan.rows(); ++i)
        for (int j = 0; j < plan.cols(); ++j) {
            const double v = plan.matrix(i, j);
            if (v > min_mass) out << i << ',' << j << ',' << v << '\n';
        }
}

nlohmann::json plan_summary_json(const TransportPlan& plan, const Eigen::MatrixXd& cost, int iterations)
{
    return {{"cost", plan.cost(cost)},
            {"row_violation", plan.row_violation()},
            {"col_violation", plan.col_violation()},
            {"total_mass", plan.total_mass()},
            {"iterations", iterations}};
}

}  // namespace gflow
