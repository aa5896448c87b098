#include "gflow/oracles.hpp"

#include "gflow/error.hpp"

#include <cmath>
#include <functional>
#include <numbers>

namespace gflow {

namespace {

void require_disk(const GridDomain& d, const TimeGrid& time)
{
    if (d.kind() != DomainKind::Disk2D) throw InvalidArgument("rotation oracles need the disk");
    if (std::abs(time.T - std::numbers::pi) > 1e-9) throw InvalidArgument("rotation oracles need T = pi");
}

void require_theta(int m)
{
    if (m < kMinThetaSamples)
        throw InvalidArgument("need at least " + std::to_string(kMinThetaSamples) + " theta samples");
}

struct PathBuilder {
    const GridDomain& d;
    int K;
    std::vector<int> cells;
    std::vector<double> masses;
    std::vector<int> labels;

    void add(int label, double mass, const std::function<Point(double)>& omega, const TimeGrid& time)
    {
        for (int k = 0; k <= K; ++k) cells.push_back(d.nearest_cell(omega(time.time(k))));
        masses.push_back(mass);
        labels.push_back(label);
    }

    DenseFlowPtr build(const DomainPtr& domain, const TimeGrid& time)
    {
        double total = 0.0;
        for (double m : masses) total += m;
        if (!(total > 0)) throw InvalidArgument("oracle flow has no mass");
        for (double& m : masses) m /= total;
        return std::make_shared<const DenseFlow>(domain, time, std::move(cells), std::move(masses), std::move(labels));
    }
};

Point omega(const Point& x, double theta, double t)
{
    const double r = std::sqrt(std::max(0.0, 1.0 - x.squaredNorm()));
    return x * std::cos(t) + r * Point(std::cos(theta), std::sin(theta)) * std::sin(t);
}

/// Uniform grid of (0, 2 pi) shifted by a golden-ratio offset per start point,
/// so that the midtime rays of different start points interleave.
double theta_at(int j, int m, long long point)
{
    const double offset = std::fmod(0.5 + point * 0.6180339887498949, 1.0);
    return 2.0 * std::numbers::pi * (j + offset) / m;
}

/// Midpoint sub-lattice of a cell, clipped to the closed unit ball; the center if nothing survives.
std::vector<Point> sub_points(const GridDomain& d, int cell, int s)
{
    const auto [ix, iy] = d.lattice(cell);
    const double h = d.spacing();
    std::vector<Point> out;
    for (int a = 0; a < s; ++a)
        for (int b = 0; b < s; ++b) {
            const Point x(d.axis_coordinate(ix) + h * ((a + 0.5) / s - 0.5), d.axis_coordinate(iy) + h * ((b + 0.5) / s - 0.5));
            if (x.squaredNorm() <= 1.0) out.push_back(x);
        }
    if (out.empty()) out.push_back(d.center(cell));
    return out;
}

void require_subsamples(int s)
{
    if (s < 1) throw InvalidArgument("subsamples must be positive");
}

}  // namespace

DenseFlowPtr classical_rotation_flow(const DomainPtr& domain, const TimeGrid& time, int direction, int subsamples)
{
    const GridDomain& d = *domain;
    require_disk(d, time);
    require_subsamples(subsamples);
    if (direction != 1 && direction != -1) throw InvalidArgument("rotation direction must be +1 or -1");
    PathBuilder b{d, time.K, {}, {}, {}};
    for (int c = 0; c < d.num_cells(); ++c) {
        const auto xs = sub_points(d, c, subsamples);
        for (const Point& x : xs)
            b.add(c, d.weight(c) / xs.size(),
                  [&](double t) {
                      const double a = direction * t;
                      return Point(std::cos(a) * x.x() - std::sin(a) * x.y(), std::sin(a) * x.x() + std::cos(a) * x.y());
                  },
                  time);
    }
    return b.build(domain, time);
}

DenseFlowPtr generalized_rotation_flow(const DomainPtr& domain, const TimeGrid& time, int theta_samples,
                                       int subsamples)
{
    const GridDomain& d = *domain;
    require_disk(d, time);
    require_theta(theta_samples);
    require_subsamples(subsamples);
    PathBuilder b{d, time.K, {}, {}, {}};
    long long point = 0;
    for (int c = 0; c < d.num_cells(); ++c) {
        const auto xs = sub_points(d, c, subsamples);
        const double m = d.weight(c) / (static_cast<double>(xs.size()) * theta_samples);
        for (const Point& x : xs) {
            ++point;
            for (int j = 0; j < theta_samples; ++j) {
                const double th = theta_at(j, theta_samples, point);
                b.add(c, m, [&](double t) { return omega(x, th, t); }, time);
            }
        }
    }
    return b.build(domain, time);
}

std::pair<DenseFlowPtr, DenseFlowPtr> split_rotation_flows(const DomainPtr& domain, const TimeGrid& time,
                                                           int theta_samples, int subsamples)
{
    const GridDomain& d = *domain;
    require_disk(d, time);
    require_theta(theta_samples);
    require_subsamples(subsamples);
    PathBuilder plus{d, time.K, {}, {}, {}}, minus{d, time.K, {}, {}, {}};
    long long point = 0;
    for (int c = 0; c < d.num_cells(); ++c) {
        const auto xs = sub_points(d, c, subsamples);
        const double m = d.weight(c) / (static_cast<double>(xs.size()) * theta_samples);
        for (const Point& x : xs) {
            const Point perp(-x.y(), x.x());
            ++point;
            for (int j = 0; j < theta_samples; ++j) {
                const double th = theta_at(j, theta_samples, point);
                PathBuilder& b = Point(std::cos(th), std::sin(th)).dot(perp) >= 0.0 ? plus : minus;
                b.add(c, m, [&](double t) { return omega(x, th, t); }, time);
            }
        }
    }
    return {plus.build(domain, time), minus.build(domain, time)};
}

DenseFlowPtr translation_flow(const DomainPtr& domain, const Point& v, const TimeGrid& time)
{
    const GridDomain& d = *domain;
    if (!d.periodic()) throw InvalidArgument("translation oracle needs a torus");
    const Point step = d.dim() == 1 ? Point(v.x(), 0.0) : v;
    PathBuilder b{d, time.K, {}, {}, {}};
    for (int c = 0; c < d.num_cells(); ++c)
        b.add(c, d.weight(c), [&](double t) { return d.wrap(d.center(c) + t * step); }, time);
    return b.build(domain, time);
}

}  // namespace gflow
