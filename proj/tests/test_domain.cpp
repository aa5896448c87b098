#include "gflow/domain.hpp"
#include "gflow/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace gflow;

TEST(Domain, Torus1dCenters)
{
    auto d = build_domain(DomainKind::Torus1D, 4);
    ASSERT_EQ(d->num_cells(), 4);
    const double expect[] = {0.125, 0.375, 0.625, 0.875};
    for (int i = 0; i < 4; ++i) {
        EXPECT_DOUBLE_EQ(d->center(i).x(), expect[i]);
        EXPECT_DOUBLE_EQ(d->weight(i), 0.25);
    }
}

TEST(Domain, Torus2dUniform)
{
    auto d = build_domain(DomainKind::Torus2D, 3);
    ASSERT_EQ(d->num_cells(), 9);
    for (int i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(d->weight(i), 1.0 / 9.0);
}

TEST(Domain, DiskSecondMoment)
{
    auto d = build_domain(DomainKind::Disk2D, 16);
    EXPECT_NEAR(d->weights().sum(), 1.0, 1e-12);
    double m2 = 0.0;
    for (int i = 0; i < d->num_cells(); ++i) m2 += d->weight(i) * d->center(i).squaredNorm();
    // Normalized disk: integral of |x|^2 is 1/2.
    EXPECT_NEAR(m2, 0.5, 0.01);
}

TEST(Domain, DiskInvariants)
{
    for (int n : {2, 5, 16, 33}) {
        auto d = build_domain(DomainKind::Disk2D, n);
        EXPECT_NEAR(d->weights().sum(), 1.0, 1e-12);
        for (int i = 0; i < d->num_cells(); ++i) {
            EXPECT_GT(d->weight(i), 0.0);
            EXPECT_LE(d->center(i).norm(), 1.0 + 1e-12);
        }
    }
}

TEST(Domain, RejectsBadInput)
{
    EXPECT_THROW(build_domain(DomainKind::Torus1D, 1), InvalidArgument);
    EXPECT_THROW(parse_domain_kind("sphere"), InvalidArgument);
    EXPECT_EQ(parse_domain_kind("disk-2d"), DomainKind::Disk2D);
    EXPECT_EQ(parse_domain_kind("torus-2d"), DomainKind::Torus2D);
}

TEST(Domain, SqDistExamples)
{
    auto t1 = build_domain(DomainKind::Torus1D, 4);
    auto t2 = build_domain(DomainKind::Torus2D, 4);
    auto disk = build_domain(DomainKind::Disk2D, 8);
    EXPECT_NEAR(sq_dist(*t1, {0.1, 0}, {0.9, 0}), 0.04, 1e-15);
    EXPECT_DOUBLE_EQ(sq_dist(*disk, {0, 0}, {1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(sq_dist(*t2, {0, 0}, {0.5, 0.5}), 0.5);
}

TEST(Domain, SqDistSymmetricZeroDiagonal)
{
    for (auto kind : {DomainKind::Torus1D, DomainKind::Torus2D, DomainKind::Disk2D}) {
        auto d = build_domain(kind, 6);
        for (int a = 0; a < d->num_cells(); ++a) {
            EXPECT_EQ(d->sq_dist_cells(a, a), 0.0);
            for (int b = 0; b < d->num_cells(); ++b) EXPECT_DOUBLE_EQ(d->sq_dist_cells(a, b), d->sq_dist_cells(b, a));
        }
    }
}

TEST(Domain, NearestCellMatchesBruteForce)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.3, 1.3);
    for (auto kind : {DomainKind::Torus1D, DomainKind::Torus2D, DomainKind::Disk2D}) {
        auto d = build_domain(kind, 9);
        for (int trial = 0; trial < 500; ++trial) {
            Point p(u(rng), d->dim() == 1 ? 0.0 : u(rng));
            double best = 1e300;
            for (int c = 0; c < d->num_cells(); ++c) best = std::min(best, d->sq_dist(p, d->center(c)));
            EXPECT_NEAR(d->sq_dist(p, d->center(d->nearest_cell(p))), best, 1e-14);
        }
    }
}

namespace {
ScalarField quadratic(DomainPtr d, double a11, double a12, double a22)
{
    ScalarField f{d, Eigen::VectorXd(d->num_cells())};
    for (int i = 0; i < d->num_cells(); ++i) {
        const Point& x = d->center(i);
        f.values[i] = 0.5 * (a11 * x.x() * x.x() + 2 * a12 * x.x() * x.y() + a22 * x.y() * x.y());
    }
    return f;
}
}  // namespace

TEST(Domain, HessianSupQuadratic)
{
    auto d = build_domain(DomainKind::Disk2D, 32);
    EXPECT_NEAR(hessian_sup(quadratic(d, 1, 0, 1)), 1.0, 0.05);
    EXPECT_NEAR(hessian_sup(quadratic(d, -1, 0, -1)), -1.0, 0.05);
    ScalarField c{d, Eigen::VectorXd::Constant(d->num_cells(), 3.0)};
    EXPECT_NEAR(hessian_sup(c), 0.0, 1e-9);
    EXPECT_THROW(hessian_sup(quadratic(build_domain(DomainKind::Disk2D, 3), 1, 0, 1)), InvalidArgument);
}

TEST(Domain, HessianSupAnisotropic)
{
    // lambda_max of [[2, 1], [1, -1]] = (1 + sqrt(13)) / 2.
    const double lmax = 0.5 * (1.0 + std::sqrt(13.0));
    for (int n : {16, 32}) {
        auto d = build_domain(DomainKind::Disk2D, n);
        EXPECT_NEAR(hessian_sup(quadratic(d, 2, 1, -1)), lmax, 1e-9 + 0.05 * lmax);
    }
}

TEST(Domain, GradientDivergenceAdjoint)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (auto kind : {DomainKind::Torus1D, DomainKind::Torus2D, DomainKind::Disk2D}) {
        auto d = build_domain(kind, 10);
        ScalarField p{d, Eigen::VectorXd(d->num_cells())};
        VectorField v{d, std::vector<Point>(d->num_cells())};
        for (int i = 0; i < d->num_cells(); ++i) {
            p.values[i] = g(rng);
            v.values[i] = Point(g(rng), d->dim() == 1 ? 0.0 : g(rng));
        }
        const auto gp = gradient(p);
        const auto dv = divergence(v);
        double lhs = 0.0, rhs = 0.0, dconst = 0.0;
        for (int i = 0; i < d->num_cells(); ++i) {
            lhs += d->weight(i) * p.values[i] * dv.values[i];
            rhs -= d->weight(i) * gp.values[i].dot(v.values[i]);
            dconst += d->weight(i) * dv.values[i];
        }
        EXPECT_NEAR(lhs, rhs, 1e-10);
        EXPECT_NEAR(dconst, 0.0, 1e-10);
    }
}

TEST(Domain, PushForward)
{
    auto d = build_domain(DomainKind::Torus1D, 4);
    GridMap half{d, {}};
    for (int i = 0; i < 4; ++i) half.image.push_back(d->center(i) / 2);
    auto m = push_forward(*d, half);
    const double expect[] = {1.0 / 16, 3.0 / 16, 5.0 / 16, 7.0 / 16};
    for (int i = 0; i < 4; ++i) {
        EXPECT_DOUBLE_EQ(m.atoms[i].x(), expect[i]);
        EXPECT_DOUBLE_EQ(m.masses[i], 0.25);
    }
    auto id = push_forward(*d, GridMap::identity(d));
    for (int i = 0; i < 4; ++i) EXPECT_EQ(id.atoms[i], d->center(i));
}

TEST(Domain, JsonRecord)
{
    auto d = build_domain(DomainKind::Torus2D, 3);
    auto j = d->to_json();
    EXPECT_EQ(j["kind"], "torus-2d");
    EXPECT_EQ(j["n"], 3);
    EXPECT_EQ(j["weights"].size(), 9u);
}
