#include "gflow/error.hpp"
#include "gflow/linear_program.hpp"
#include "gflow/transport.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

using namespace gflow;

namespace {

Eigen::VectorXd uniform(int n) { return Eigen::VectorXd::Constant(n, 1.0 / n); }

Eigen::MatrixXd random_cost(int m, int k, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    Eigen::MatrixXd c(m, k);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) c(i, j) = u(rng);
    return c;
}

Eigen::VectorXd random_prob(int n, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.05, 1);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = u(rng);
    return v / v.sum();
}

double permutation_minimum(const Eigen::MatrixXd& c)
{
    const int n = static_cast<int>(c.rows());
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    double best = 1e300;
    do {
        double s = 0;
        for (int i = 0; i < n; ++i) s += c(i, p[i]);
        best = std::min(best, s / n);
    } while (std::next_permutation(p.begin(), p.end()));
    return best;
}

double lp_transport(const Eigen::MatrixXd& c, const Eigen::VectorXd& mu, const Eigen::VectorXd& nu)
{
    const int m = static_cast<int>(mu.size()), k = static_cast<int>(nu.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + k, m * k);
    Eigen::VectorXd b(m + k), cc(m * k);
    b << mu, nu;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) {
            A(i, i * k + j) = 1;
            A(m + j, i * k + j) = 1;
            cc[i * k + j] = c(i, j);
        }
    return solve_standard_lp(A, b, cc).objective;
}

}  // namespace

TEST(ExactOt, TwoAtomExamples)
{
    Eigen::MatrixXd c(2, 2);
    c << 0, 1, 1, 0;
    auto r = solve_ot_exact(c, uniform(2), uniform(2));
    EXPECT_NEAR(r.cost, 0.0, 1e-15);
    EXPECT_NEAR(r.plan.matrix(0, 0), 0.5, 1e-15);
    c << 1, 0, 0, 1;
    r = solve_ot_exact(c, uniform(2), uniform(2));
    EXPECT_NEAR(r.cost, 0.0, 1e-15);
    EXPECT_NEAR(r.plan.matrix(0, 1), 0.5, 1e-15);
}

TEST(ExactOt, ThreeAtomsMatchPermutations)
{
    const auto c = random_cost(3, 3, 42);
    auto r = solve_ot_exact(c, uniform(3), uniform(3));
    EXPECT_NEAR(r.cost, permutation_minimum(c), 1e-12);
}

TEST(ExactOt, MatchesPermutationsAndLp)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + trial % 4;
        const auto c = random_cost(n, n, 100 + trial);
        EXPECT_NEAR(solve_ot_exact(c, uniform(n), uniform(n)).cost, permutation_minimum(c), 1e-12);
        const int m = 2 + trial % 5, k = 3 + trial % 3;
        const auto c2 = random_cost(m, k, 200 + trial);
        const auto mu = random_prob(m, rng), nu = random_prob(k, rng);
        auto r = solve_ot_exact(c2, mu, nu);
        EXPECT_NEAR(r.cost, lp_transport(c2, mu, nu), 1e-12);
        EXPECT_LT(r.plan.row_violation(), 1e-14);
        EXPECT_LT(r.plan.col_violation(), 1e-14);
        EXPECT_GE(r.plan.matrix.minCoeff(), 0.0);
    }
}

TEST(ExactOt, DegenerateIntegerCosts)
{
    // Many ties: squared distances between shifted lattice measures.
    auto d = build_domain(DomainKind::Torus2D, 5);
    const auto c = cell_cost_matrix(*d);
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 3; ++trial) {
        const auto mu = random_prob(d->num_cells(), rng);
        const auto nu = random_prob(d->num_cells(), rng);
        auto r = solve_ot_exact(c, mu, nu);
        EXPECT_NEAR(r.cost, lp_transport(c, mu, nu), 1e-12);
    }
    EXPECT_NEAR(solve_ot_exact(c, d->weights(), d->weights()).cost, 0.0, 1e-15);
}

TEST(ExactOt, BeatsRandomFeasiblePlans)
{
    std::mt19937_64 rng(9);
    const int m = 6, k = 5;
    const auto c = random_cost(m, k, 77);
    const auto mu = random_prob(m, rng), nu = random_prob(k, rng);
    const double opt = solve_ot_exact(c, mu, nu).cost;
    std::uniform_real_distribution<double> u(0.01, 1);
    for (int s = 0; s < 100; ++s) {
        // Random positive matrix scaled onto the marginals.
        Eigen::MatrixXd p(m, k);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < k; ++j) p(i, j) = u(rng);
        for (int it = 0; it < 2000; ++it) {
            p = (mu.array() / p.rowwise().sum().array()).matrix().asDiagonal() * p;
            p = p * (nu.array() / p.colwise().sum().transpose().array()).matrix().asDiagonal();
        }
        EXPECT_LE(opt, p.cwiseProduct(c).sum() + 1e-12);
    }
}

TEST(ExactOt, Guards)
{
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(2, 2);
    EXPECT_THROW(solve_ot_exact(c, uniform(2), Eigen::Vector2d(0.7, 0.7)), InvalidArgument);
    EXPECT_THROW(solve_ot_exact(c, uniform(3), uniform(2)), InvalidArgument);
    Eigen::MatrixXd big = Eigen::MatrixXd::Zero(257, 2);
    EXPECT_THROW(solve_ot_exact(big, uniform(257), uniform(2)), SizeLimitExceeded);
}

TEST(ExactOt, DiracMarginal)
{
    Eigen::MatrixXd c(1, 1);
    c << 0.7;
    Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
    auto r = solve_ot_exact(c, one, one);
    EXPECT_DOUBLE_EQ(r.cost, 0.7);
}

TEST(EntropicOt, LargeEpsilonGivesProduct)
{
    std::mt19937_64 rng(1);
    const auto c = random_cost(4, 6, 3);
    const auto mu = random_prob(4, rng), nu = random_prob(6, rng);
    EntropicOtOptions o;
    o.epsilon = 1e8;
    auto r = solve_ot_entropic(c, mu, nu, o);
    EXPECT_TRUE(r.converged);
    EXPECT_LT((r.plan.matrix - mu * nu.transpose()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(EntropicOt, ScalingApproachesExact)
{
    const auto c = random_cost(3, 3, 42);
    EntropicOtOptions o;
    o.epsilon = 1e-4;
    o.epsilon_start = 1.0;
    auto r = solve_ot_entropic(c, uniform(3), uniform(3), o);
    const double exact = solve_ot_exact(c, uniform(3), uniform(3)).cost;
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.transport_cost, exact, 0.01 * exact);
    EXPECT_GE(r.transport_cost, exact - 1e-12);
}

TEST(EntropicOt, MarginalsAndDuality)
{
    std::mt19937_64 rng(4);
    const auto c = random_cost(7, 5, 8);
    const auto mu = random_prob(7, rng), nu = random_prob(5, rng);
    EntropicOtOptions o;
    o.epsilon = 0.05;
    o.tol = 1e-11;
    auto r = solve_ot_entropic(c, mu, nu, o);
    ASSERT_TRUE(r.converged);
    EXPECT_LT(r.plan.col_violation(), 1e-14);
    EXPECT_LE(r.row_violation, 1e-11);
    const double dual = r.u.dot(mu) + r.v.dot(nu) - o.epsilon * r.relative_entropy;
    EXPECT_NEAR(dual, r.transport_cost, 1e-9);
}

TEST(EntropicOt, CostNonincreasingAlongSchedule)
{
    std::mt19937_64 rng(6);
    const auto c = random_cost(6, 6, 12);
    const auto mu = random_prob(6, rng), nu = random_prob(6, rng);
    double prev = 1e300;
    EntropicOtOptions o;
    o.tol = 1e-12;
    for (double eps = 1.0; eps > 1e-3; eps *= 0.5) {
        o.epsilon = eps;
        auto r = solve_ot_entropic(c, mu, nu, o);
        o.u0 = r.u;
        o.v0 = r.v;
        EXPECT_LE(r.transport_cost, prev + 1e-10);
        prev = r.transport_cost;
    }
}

TEST(EntropicOt, SingleAtom)
{
    Eigen::MatrixXd c(1, 1);
    c << 0.3;
    Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
    EntropicOtOptions o;
    auto r = solve_ot_entropic(c, one, one, o);
    EXPECT_NEAR(r.plan.matrix(0, 0), 1.0, 1e-14);
    EXPECT_NEAR(r.transport_cost, 0.3, 1e-14);
}

TEST(EntropicOt, ReportsNonConvergence)
{
    const auto c = random_cost(5, 5, 2);
    EntropicOtOptions o;
    o.epsilon = 1e-4;
    o.max_iter = 1;
    o.tol = 1e-15;
    auto r = solve_ot_entropic(c, uniform(5), uniform(5), o);
    EXPECT_FALSE(r.converged);
    EXPECT_GT(r.row_violation, 0.0);
    o.epsilon = 0;
    EXPECT_THROW(solve_ot_entropic(c, uniform(5), uniform(5), o), InvalidArgument);
}

TEST(PlanFromMap, Basics)
{
    auto d = build_domain(DomainKind::Torus1D, 4);
    auto id = plan_from_map(*d, {0, 1, 2, 3});
    EXPECT_TRUE(id.matrix.isApprox(Eigen::MatrixXd(Eigen::VectorXd::Constant(4, 0.25).asDiagonal())));
    auto sh = plan_from_map(*d, {1, 2, 3, 0});
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(sh.matrix(i, (i + 1) % 4), 0.25);
    EXPECT_LT(sh.row_violation(), 1e-15);
    EXPECT_LT(sh.col_violation(), 1e-15);
    EXPECT_DOUBLE_EQ(graph_concentration(sh), 1.0);
    EXPECT_THROW(plan_from_map(*d, {0, 0, 2, 3}), InvalidArgument);
    EXPECT_THROW(plan_from_map(*d, {0, 1, 2}), InvalidArgument);
}

TEST(PlanFromMap, RejectsNonMeasurePreservingOnDisk)
{
    auto d = build_domain(DomainKind::Disk2D, 8);
    std::vector<int> p(d->num_cells());
    std::iota(p.begin(), p.end(), 0);
    // Find a boundary cell and an interior cell (different weights) and swap them.
    int a = 0, b = 0;
    for (int i = 0; i < d->num_cells(); ++i) {
        if (d->weight(i) < d->weight(a)) a = i;
        if (d->weight(i) > d->weight(b)) b = i;
    }
    std::swap(p[a], p[b]);
    EXPECT_THROW(plan_from_map(*d, p), InvalidArgument);
}

TEST(GraphConcentration, ProductCoupling)
{
    for (int n : {2, 5, 9}) {
        auto p = TransportPlan::product(uniform(n), uniform(n));
        EXPECT_NEAR(graph_concentration(p), 1.0 / n, 1e-14);
    }
}

TEST(PlanExport, CsvAndJson)
{
    auto d = build_domain(DomainKind::Torus1D, 4);
    auto p = plan_from_map(*d, {1, 2, 3, 0});
    std::ostringstream s;
    write_plan_csv(s, p);
    EXPECT_EQ(s.str(), "i,j,mass\n0,1,0.25\n1,2,0.25\n2,3,0.25\n3,0,0.25\n");
    auto j = plan_summary_json(p, cell_cost_matrix(*d), 0);
    EXPECT_NEAR(j["cost"].get<double>(), 0.0625, 1e-15);
}
