#include "gflow/flow.hpp"

#include "gflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace gflow {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool is_antipode(double d) { return std::abs(std::abs(d) - 0.5) < 1e-12; }

}  // namespace

TimeGrid::TimeGrid(double horizon, int steps) : T(horizon), K(steps)
{
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("time horizon must be positive");
    if (steps < 2) throw InvalidArgument("time grid needs K >= 2, got " + std::to_string(steps));
}

Point step_displacement(const GridDomain& domain, int x, int y)
{
    Point d = domain.displacement(domain.center(x), domain.center(y));
    if (domain.periodic()) {
        for (int i = 0; i < 2; ++i)
            if (is_antipode(d[i])) d[i] = 0.0;
    }
    return d;
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

double GeneralizedFlow::action() const
{
    const auto c = step_costs();
    return std::accumulate(c.begin(), c.end(), 0.0);
}

std::vector<double> GeneralizedFlow::step_costs() const
{
    std::vector<double> c(time_.K);
    for (int k = 0; k < time_.K; ++k) c[k] = step_statistics(k).cost;
    return c;
}

void GeneralizedFlow::check_slice(int k) const
{
    if (k < 0 || k > time_.K) throw InvalidArgument("slice index " + std::to_string(k) + " out of range");
}

void GeneralizedFlow::check_interval(int s, int t) const
{
    if (s < 0 || t > time_.K || s >= t)
        throw InvalidArgument("slice interval (" + std::to_string(s) + ", " + std::to_string(t) + ") out of range");
}

// ---------------------------------------------------------------- DenseFlow

DenseFlow::DenseFlow(DomainPtr domain, TimeGrid time, std::vector<int> cells, std::vector<double> masses,
                     std::vector<int> labels)
    : GeneralizedFlow(std::move(domain), time), cells_(std::move(cells)), masses_(std::move(masses)),
      labels_(std::move(labels))
{
    const std::size_t len = static_cast<std::size_t>(time_.K) + 1;
    if (cells_.size() != masses_.size() * len) throw InvalidArgument("dense flow: path array size mismatch");
    const int n = domain_->num_cells();
    for (int c : cells_)
        if (c < 0 || c >= n) throw InvalidArgument("dense flow: cell index out of range");
    for (double m : masses_)
        if (!(m >= 0.0) || !std::isfinite(m)) throw InvalidArgument("dense flow: negative or non-finite mass");
    if (labels_.empty()) {
        labels_.resize(masses_.size());
        for (std::size_t i = 0; i < masses_.size(); ++i) labels_[i] = cells_[i * len];
        num_labels_ = n;
    } else {
        if (labels_.size() != masses_.size()) throw InvalidArgument("dense flow: label array size mismatch");
        for (int l : labels_)
            if (l < 0) throw InvalidArgument("dense flow: negative label");
        num_labels_ = labels_.empty() ? 0 : *std::max_element(labels_.begin(), labels_.end()) + 1;
    }
    label_mass_.assign(num_labels_, 0.0);
    for (std::size_t i = 0; i < masses_.size(); ++i) label_mass_[labels_[i]] += masses_[i];
}

std::span<const int> DenseFlow::path(int i) const
{
    const std::size_t len = static_cast<std::size_t>(time_.K) + 1;
    return {cells_.data() + i * len, len};
}

double DenseFlow::total_mass() const { return std::accumulate(masses_.begin(), masses_.end(), 0.0); }

DenseFlow DenseFlow::normalized() const
{
    const double m = total_mass();
    if (!(m > 0.0)) throw InvalidArgument("cannot normalize an empty flow");
    std::vector<double> masses = masses_;
    for (double& x : masses) x /= m;
    return DenseFlow(domain_, time_, cells_, std::move(masses), labels_);
}

Eigen::VectorXd DenseFlow::slice_marginal(int k) const
{
    check_slice(k);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(domain_->num_cells());
    for (int i = 0; i < num_paths(); ++i) m[path(i)[k]] += masses_[i];
    return m;
}

TransportPlan DenseFlow::joint_coupling(int s, int t) const
{
    check_interval(s, t);
    const int n = domain_->num_cells();
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < num_paths(); ++i) p(path(i)[s], path(i)[t]) += masses_[i];
    return {p.rowwise().sum(), p.colwise().sum().transpose(), p};
}

StepStatistics DenseFlow::step_statistics(int k) const
{
    if (k < 0 || k >= time_.K) throw InvalidArgument("step index out of range");
    const int n = domain_->num_cells();
    StepStatistics st;
    st.k = k;
    st.mass_from = Eigen::VectorXd::Zero(n);
    st.mass_to = Eigen::VectorXd::Zero(n);
    st.mean_from.assign(n, Point::Zero());
    st.mean_to.assign(n, Point::Zero());
    st.second_from.assign(n, Eigen::Matrix2d::Zero());
    for (int i = 0; i < num_paths(); ++i) {
        const auto p = path(i);
        const int x = p[k], y = p[k + 1];
        const double m = masses_[i];
        const Point d = step_displacement(*domain_, x, y);
        const Point raw = domain_->displacement(domain_->center(x), domain_->center(y));
        Eigen::Matrix2d q;
        q << raw.x() * raw.x(), d.x() * d.y(), d.x() * d.y(), raw.y() * raw.y();
        st.mass_from[x] += m;
        st.mass_to[y] += m;
        st.mean_from[x] += m * d;
        st.mean_to[y] += m * d;
        st.second_from[x] += m * q;
        st.cost += m * raw.squaredNorm() / (2.0 * time_.dt());
    }
    for (int x = 0; x < n; ++x) {
        if (st.mass_from[x] > 0) {
            st.mean_from[x] /= st.mass_from[x];
            st.second_from[x] /= st.mass_from[x];
        }
        if (st.mass_to[x] > 0) st.mean_to[x] /= st.mass_to[x];
    }
    return st;
}

void DenseFlow::for_each_label_coupling(int s, int t, double floor,
                                        const std::function<void(const LabelCoupling&)>& fn) const
{
    check_interval(s, t);
    std::vector<std::vector<int>> by_label(num_labels_);
    for (int i = 0; i < num_paths(); ++i) by_label[labels_[i]].push_back(i);
    const int n = domain_->num_cells();
    Eigen::VectorXd rm(n), cm(n);
    for (int a = 0; a < num_labels_; ++a) {
        if (by_label[a].empty() || !(label_mass_[a] > 0)) continue;
        rm.setZero();
        cm.setZero();
        for (int i : by_label[a]) {
            rm[path(i)[s]] += masses_[i];
            cm[path(i)[t]] += masses_[i];
        }
        LabelCoupling lc;
        lc.label = a;
        lc.mass = label_mass_[a];
        std::vector<int> row_of(n, -1), col_of(n, -1);
        for (int x = 0; x < n; ++x) {
            if (rm[x] > 0 && rm[x] >= floor * lc.mass) {
                row_of[x] = static_cast<int>(lc.rows.size());
                lc.rows.push_back(x);
            }
            if (cm[x] > 0 && cm[x] >= floor * lc.mass) {
                col_of[x] = static_cast<int>(lc.cols.size());
                lc.cols.push_back(x);
            }
        }
        lc.matrix = Eigen::MatrixXd::Zero(lc.rows.size(), lc.cols.size());
        for (int i : by_label[a]) {
            const int r = row_of[path(i)[s]], c = col_of[path(i)[t]];
            if (r >= 0 && c >= 0) lc.matrix(r, c) += masses_[i];
            else lc.dropped_mass += masses_[i];
        }
        fn(lc);
    }
}

std::shared_ptr<const DenseFlow> DenseFlow::support_paths(int, std::uint64_t) const
{
    return std::make_shared<DenseFlow>(*this);
}

std::uint64_t DenseFlow::fingerprint() const
{
    std::uint64_t h = fnv1a(cells_.data(), cells_.size() * sizeof(int));
    h = fnv1a(masses_.data(), masses_.size() * sizeof(double), h);
    return fnv1a(labels_.data(), labels_.size() * sizeof(int), h);
}

nlohmann::json DenseFlow::to_json() const
{
    nlohmann::json paths = nlohmann::json::array();
    for (int i = 0; i < num_paths(); ++i) {
        const auto p = path(i);
        paths.push_back(std::vector<int>(p.begin(), p.end()));
    }
    return {{"kind", "dense"},       {"T", time_.T},      {"K", time_.K},    {"domain", domain_->to_json()},
            {"paths", std::move(paths)}, {"masses", masses_}, {"labels", labels_}};
}

// ---------------------------------------------------------------- ChainFlow

ChainFlow::ChainFlow(ChainState state) : GeneralizedFlow(state.kernel->domain_ptr(), state.time), state_(std::move(state))
{
    const int K = time_.K;
    if (static_cast<int>(state_.forward.size()) != K + 1 || static_cast<int>(state_.backward.size()) != K + 1 ||
        static_cast<int>(state_.log_factor.size()) != K + 1)
        throw InvalidArgument("chain flow: arrays must cover K + 1 slices");
    const Eigen::MatrixXd start = (state_.forward[0] + state_.backward[0]).array().exp().matrix();
    label_mass_.resize(state_.labels);
    for (int a = 0; a < state_.labels; ++a) label_mass_[a] = start.col(a).sum();
}

Eigen::VectorXd ChainFlow::potential(int k) const
{
    if (k <= 0 || k >= time_.K) throw InvalidArgument("potentials exist on interior slices only");
    Eigen::VectorXd u(domain_->num_cells());
    for (int c = 0; c < domain_->num_cells(); ++c) u[c] = state_.potential[k][domain_->grid_index(c)];
    return u;
}

Eigen::MatrixXd ChainFlow::slice_log_joint(int k) const
{
    Eigen::MatrixXd l = state_.forward[k] + state_.backward[k];
    l.colwise() += state_.log_factor[k];
    return l;
}

Eigen::VectorXd ChainFlow::slice_marginal(int k) const
{
    check_slice(k);
    const Eigen::VectorXd g = slice_log_joint(k).array().exp().rowwise().sum();
    Eigen::VectorXd m(domain_->num_cells());
    for (int c = 0; c < domain_->num_cells(); ++c) m[c] = g[domain_->grid_index(c)];
    return m;
}

Eigen::MatrixXd ChainFlow::start_coupling() const
{
    const Eigen::MatrixXd e = (state_.forward[0] + state_.backward[0]).array().exp().matrix();
    Eigen::MatrixXd r(state_.labels, domain_->num_cells());
    for (int c = 0; c < domain_->num_cells(); ++c) r.col(c) = e.row(domain_->grid_index(c)).transpose();
    return r;
}

Eigen::MatrixXd ChainFlow::end_coupling() const
{
    const int K = time_.K;
    const Eigen::MatrixXd e = (state_.forward[K] + state_.backward[K]).array().exp().matrix();
    Eigen::MatrixXd r(state_.labels, domain_->num_cells());
    for (int c = 0; c < domain_->num_cells(); ++c) r.col(c) = e.row(domain_->grid_index(c)).transpose();
    return r;
}

Eigen::MatrixXd ChainFlow::log_propagator(int s, int t) const
{
    const int G = domain_->grid_size();
    const int n = domain_->num_cells();
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(G, n, kNegInf);
    for (int c = 0; c < n; ++c) x(domain_->grid_index(c), c) = 0.0;
    Eigen::MatrixXd y;
    for (int j = s + 1; j <= t; ++j) {
        state_.kernel->apply(x, y);
        if (j < t) y.colwise() += state_.log_factor[j];
        x.swap(y);
    }
    return x;
}

TransportPlan ChainFlow::joint_coupling(int s, int t) const
{
    check_interval(s, t);
    const int n = domain_->num_cells();
    const int P = state_.labels;
    const Eigen::MatrixXd logm = log_propagator(s, t);
    // Label sums by log-sum-exp; the two sides can sit far apart in scale.
    Eigen::MatrixXd fs(P, n), bt(P, n);
    for (int c = 0; c < n; ++c) {
        const int g = domain_->grid_index(c);
        fs.col(c) = state_.forward[s].row(g).transpose();
        bt.col(c) = state_.backward[t].row(g).transpose();
    }
    Eigen::MatrixXd p(n, n);
    Eigen::ArrayXXd z(P, n);
    for (int x = 0; x < n; ++x) {
        const int gx = domain_->grid_index(x);
        z = bt.array().colwise() + fs.col(x).array();
        const Eigen::ArrayXd mx = z.colwise().maxCoeff().transpose();
        for (int y = 0; y < n; ++y) {
            const int gy = domain_->grid_index(y);
            const double lead = state_.log_factor[s][gx] + state_.log_factor[t][gy] + logm(gy, x);
            if (!std::isfinite(mx[y]) || !std::isfinite(lead)) {
                p(x, y) = 0.0;
                continue;
            }
            p(x, y) = std::exp(lead + mx[y] + std::log((z.col(y) - mx[y]).exp().sum()));
        }
    }
    return {p.rowwise().sum(), p.colwise().sum().transpose(), p};
}

StepStatistics ChainFlow::step_statistics(int k) const
{
    if (k < 0 || k >= time_.K) throw InvalidArgument("step index out of range");
    const int n = domain_->num_cells();
    const int P = state_.labels;
    const auto& kernel = *state_.kernel;

    Eigen::MatrixXd in_back = state_.backward[k + 1];
    in_back.colwise() += state_.log_factor[k + 1];
    const KernelMoments back = kernel.moments(in_back);
    Eigen::MatrixXd in_fwd = state_.forward[k];
    in_fwd.colwise() += state_.log_factor[k];
    const KernelMoments fwd = kernel.moments(in_fwd);

    Eigen::MatrixXd wf = in_fwd + back.log_mass;
    wf = wf.array().exp().matrix();
    Eigen::MatrixXd wt = fwd.log_mass + in_back;
    wt = wt.array().exp().matrix();

    StepStatistics st;
    st.k = k;
    st.mass_from.resize(n);
    st.mass_to.resize(n);
    st.mean_from.assign(n, Point::Zero());
    st.mean_to.assign(n, Point::Zero());
    st.second_from.assign(n, Eigen::Matrix2d::Zero());
    double cost = 0.0;
    for (int c = 0; c < n; ++c) {
        const int g = domain_->grid_index(c);
        double mf = 0.0, mt = 0.0;
        Point af = Point::Zero(), at = Point::Zero();
        Eigen::Matrix2d q = Eigen::Matrix2d::Zero();
        for (int a = 0; a < P; ++a) {
            const double f = wf(g, a);
            if (f > 0) {
                mf += f;
                af += f * Point(back.mean[0](g, a), back.mean[1](g, a));
                q(0, 0) += f * back.second[0](g, a);
                q(0, 1) += f * back.second[1](g, a);
                q(1, 1) += f * back.second[2](g, a);
            }
            const double w = wt(g, a);
            if (w > 0) {
                mt += w;
                // Forward moments are of (source - target) = x_k - x_{k+1}.
                at -= w * Point(fwd.mean[0](g, a), fwd.mean[1](g, a));
            }
        }
        q(1, 0) = q(0, 1);
        cost += q(0, 0) + q(1, 1);
        st.mass_from[c] = mf;
        st.mass_to[c] = mt;
        if (mf > 0) {
            st.mean_from[c] = af / mf;
            st.second_from[c] = q / mf;
        }
        if (mt > 0) st.mean_to[c] = at / mt;
    }
    st.cost = cost / (2.0 * time_.dt());
    return st;
}

void ChainFlow::for_each_label_coupling(int s, int t, double floor,
                                        const std::function<void(const LabelCoupling&)>& fn) const
{
    check_interval(s, t);
    const int n = domain_->num_cells();
    const Eigen::MatrixXd logm = log_propagator(s, t);
    const Eigen::MatrixXd ls = slice_log_joint(s);
    const Eigen::MatrixXd lt = slice_log_joint(t);
    for (int a = 0; a < state_.labels; ++a) {
        LabelCoupling lc;
        lc.label = a;
        lc.mass = label_mass_[a];
        if (!(lc.mass > 0)) continue;
        for (int c = 0; c < n; ++c) {
            const int g = domain_->grid_index(c);
            if (std::exp(ls(g, a)) >= floor * lc.mass && std::isfinite(ls(g, a))) lc.rows.push_back(c);
            if (std::exp(lt(g, a)) >= floor * lc.mass && std::isfinite(lt(g, a))) lc.cols.push_back(c);
        }
        lc.matrix.resize(lc.rows.size(), lc.cols.size());
        for (std::size_t i = 0; i < lc.rows.size(); ++i) {
            const int gx = domain_->grid_index(lc.rows[i]);
            const double left = state_.forward[s](gx, a) + state_.log_factor[s][gx];
            for (std::size_t j = 0; j < lc.cols.size(); ++j) {
                const int gy = domain_->grid_index(lc.cols[j]);
                const double v = left + logm(gy, lc.rows[i]) + state_.backward[t](gy, a) + state_.log_factor[t][gy];
                lc.matrix(i, j) = std::isfinite(v) ? std::exp(v) : 0.0;
            }
        }
        lc.dropped_mass = std::max(0.0, lc.mass - lc.matrix.sum());
        fn(lc);
    }
}

std::shared_ptr<const DenseFlow> ChainFlow::support_paths(int samples, std::uint64_t seed) const
{
    if (samples <= 0) throw InvalidArgument("path sampling needs a positive sample count");
    const int n = domain_->num_cells();
    const int P = state_.labels;
    const int K = time_.K;
    const double eps = epsilon();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // Start law over (label, cell).
    const Eigen::MatrixXd start = start_coupling();
    std::vector<double> cdf(static_cast<std::size_t>(P) * n);
    double acc = 0.0;
    for (int a = 0; a < P; ++a)
        for (int c = 0; c < n; ++c) cdf[static_cast<std::size_t>(a) * n + c] = (acc += start(a, c));
    if (!(acc > 0)) throw NumericalBreakdown("path sampling: start law has no mass");

    std::vector<int> cells(static_cast<std::size_t>(samples) * (K + 1));
    std::vector<int> labels(samples);
    std::vector<double> logw(n);
    for (int i = 0; i < samples; ++i) {
        const double r = unif(rng) * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), r);
        const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
        const int a = static_cast<int>(idx / n);
        int x = static_cast<int>(idx % n);
        labels[i] = a;
        cells[static_cast<std::size_t>(i) * (K + 1)] = x;
        for (int k = 0; k < K; ++k) {
            const int gx = domain_->grid_index(x);
            double mx = kNegInf;
            for (int y = 0; y < n; ++y) {
                const int gy = domain_->grid_index(y);
                logw[y] = -state_.kernel->cost(gx, gy) / eps + state_.log_factor[k + 1][gy] + state_.backward[k + 1](gy, a);
                mx = std::max(mx, logw[y]);
            }
            if (!std::isfinite(mx)) throw NumericalBreakdown("path sampling: transition law has no mass");
            double tot = 0.0;
            for (int y = 0; y < n; ++y) tot += (logw[y] = std::exp(logw[y] - mx));
            double u = unif(rng) * tot;
            int next = n - 1;
            for (int y = 0; y < n; ++y) {
                u -= logw[y];
                if (u < 0) {
                    next = y;
                    break;
                }
            }
            x = next;
            cells[static_cast<std::size_t>(i) * (K + 1) + k + 1] = x;
        }
    }
    std::vector<double> masses(samples, 1.0 / samples);
    return std::make_shared<DenseFlow>(domain_, time_, std::move(cells), std::move(masses), std::move(labels));
}

std::uint64_t ChainFlow::fingerprint() const
{
    const double eps = epsilon();
    std::uint64_t h = fnv1a(&eps, sizeof eps);
    for (const auto& u : state_.potential) h = fnv1a(u.data(), u.size() * sizeof(double), h);
    h = fnv1a(state_.forward[0].data(), state_.forward[0].size() * sizeof(double), h);
    return fnv1a(state_.backward[time_.K].data(), state_.backward[time_.K].size() * sizeof(double), h);
}

nlohmann::json ChainFlow::to_json() const
{
    const int n = domain_->num_cells();
    const int K = time_.K;
    const double eps = epsilon();
    nlohmann::json pot = nlohmann::json::array();
    for (int k = 1; k < K; ++k) {
        const Eigen::VectorXd u = potential(k);
        pot.push_back(std::vector<double>(u.data(), u.data() + u.size()));
    }
    // Endpoint potentials in cost units on their supports: [label, cell, value].
    auto sparse = [&](const Eigen::MatrixXd& m) {
        nlohmann::json out = nlohmann::json::array();
        for (int a = 0; a < state_.labels; ++a)
            for (int c = 0; c < n; ++c) {
                const double v = m(domain_->grid_index(c), a);
                if (std::isfinite(v)) out.push_back({a, c, eps * v});
            }
        return out;
    };
    const auto& r = state_.report;
    return {{"kind", "chain"},
            {"T", time_.T},
            {"K", K},
            {"epsilon", eps},
            {"backend", to_string(state_.kernel->backend())},
            {"labels", state_.labels},
            {"domain", domain_->to_json()},
            {"potentials", std::move(pot)},
            {"alpha", sparse(state_.forward[0])},
            {"beta", sparse(state_.backward[K])},
            {"converged", r.converged},
            {"sweeps", r.sweeps}};
}

}  // namespace gflow
