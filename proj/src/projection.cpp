#include "gflow/projection.hpp"

#include "gflow/error.hpp"

#include <cmath>
#include <ostream>

namespace gflow {

namespace {

void check_map(const GridDomain& domain, const GridMap& h)
{
    if (static_cast<int>(h.image.size()) != domain.num_cells())
        throw InvalidArgument("map image size does not match the number of cells");
    for (const auto& p : h.image)
        if (!p.allFinite()) throw InvalidArgument("map image has non-finite entries");
}

// Group index per cell; atoms within tol of a group representative share it.
std::vector<int> merge_atoms(const std::vector<Point>& atoms, double tol, int& groups)
{
    std::vector<int> group(atoms.size(), -1);
    std::vector<Point> reps;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        for (std::size_t g = 0; g < reps.size(); ++g) {
            if ((atoms[i] - reps[g]).cwiseAbs().maxCoeff() <= tol) {
                group[i] = static_cast<int>(g);
                break;
            }
        }
        if (group[i] < 0) {
            group[i] = static_cast<int>(reps.size());
            reps.push_back(atoms[i]);
        }
    }
    groups = static_cast<int>(reps.size());
    return group;
}

// Fill permutation/map when every row of the plan is a single cell of equal weight.
void detect_bijection(const DomainPtr& domain, ProjectionResult& r)
{
    const int n = domain->num_cells();
    std::vector<int> perm(n, -1);
    std::vector<char> hit(n, 0);
    for (int i = 0; i < n; ++i) {
        int j;
        const double top = r.plan.matrix.row(i).maxCoeff(&j);
        if (std::abs(top - domain->weight(i)) > 1e-12 * domain->weight(i) || hit[j]) return;
        hit[j] = 1;
        perm[i] = j;
    }
    r.map = GridMap::from_permutation(domain, perm);
    r.permutation = std::move(perm);
}

ProjectionResult solve_assignment(const DomainPtr& domain, const Eigen::MatrixXd& cost)
{
    const auto& w = domain->weights();
    auto ot = solve_ot_exact(cost, w, w);
    ProjectionResult r;
    r.plan = std::move(ot.plan);
    r.distance2 = ot.cost;
    detect_bijection(domain, r);
    if (!r.is_map()) r.warning = "optimal plan is not induced by a cell bijection";
    return r;
}

}  // namespace

ProjectionResult project_to_S(const DomainPtr& domain, const GridMap& h)
{
    check_map(*domain, h);
    const int n = domain->num_cells();
    const auto& w = domain->weights();
    int groups = 0;
    const auto group = merge_atoms(h.image, kCoincidenceTolerance * domain->spacing(), groups);

    if (groups == n) {
        Eigen::MatrixXd cost(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) cost(i, j) = (h.image[i] - domain->center(j)).squaredNorm();
        return solve_assignment(domain, cost);
    }

    // Degenerate image: transport the merged measure, then split each group's
    // plan row back over its member cells in proportion to their weight.
    std::vector<Point> rep(groups);
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(groups);
    for (int i = 0; i < n; ++i) {
        rep[group[i]] = h.image[i];
        nu[group[i]] += w[i];
    }
    Eigen::MatrixXd cost(groups, n);
    for (int g = 0; g < groups; ++g)
        for (int j = 0; j < n; ++j) cost(g, j) = (rep[g] - domain->center(j)).squaredNorm();
    const auto ot = solve_ot_exact(cost, nu, w);

    ProjectionResult r;
    r.degenerate = true;
    r.plan = {w, w, Eigen::MatrixXd(n, n)};
    for (int i = 0; i < n; ++i) r.plan.matrix.row(i) = ot.plan.matrix.row(group[i]) * (w[i] / nu[group[i]]);
    double d2 = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) d2 += r.plan.matrix(i, j) * (h.image[i] - domain->center(j)).squaredNorm();
    r.distance2 = d2;
    r.warning = "degenerate image: " + std::to_string(n - groups) +
                " atoms coincide, the push-forward is not absolutely continuous; returning the relaxed plan";
    detect_bijection(domain, r);
    return r;
}

GridMap midpoint_image(const GridDomain& domain, const GridMap& g0, const GridMap& g1)
{
    check_map(domain, g0);
    check_map(domain, g1);
    GridMap m{g0.domain, std::vector<Point>(g0.image.size())};
    for (std::size_t i = 0; i < g0.image.size(); ++i) {
        m.image[i] = domain.periodic() ? domain.wrap(g0.image[i] + 0.5 * domain.displacement(g0.image[i], g1.image[i]))
                                       : Point(0.5 * (g0.image[i] + g1.image[i]));
    }
    return m;
}

double midpoint_objective(const GridDomain& domain, const std::vector<int>& g, const GridMap& g0, const GridMap& g1)
{
    double s = 0.0;
    for (int i = 0; i < domain.num_cells(); ++i) {
        const Point& c = domain.center(g[i]);
        s += domain.weight(i) * 0.5 * (domain.sq_dist(c, g0.image[i]) + domain.sq_dist(g1.image[i], c));
    }
    return s;
}

ProjectionResult midpoint(const DomainPtr& domain, const GridMap& g0, const GridMap& g1)
{
    const GridMap mid = midpoint_image(*domain, g0, g1);
    const int n = domain->num_cells();
    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const Point& c = domain->center(j);
            cost(i, j) = 0.5 * (domain->sq_dist(c, g0.image[i]) + domain->sq_dist(g1.image[i], c));
        }
    int groups = 0;
    const auto group = merge_atoms(mid.image, kCoincidenceTolerance * domain->spacing(), groups);
    if (groups == n) return solve_assignment(domain, cost);

    // Coincident midpoints: any optimal vertex is an arbitrary pick among tied
    // bijections, so spread each group's rows evenly when that stays optimal.
    const auto& w = domain->weights();
    const auto ot = solve_ot_exact(cost, w, w);
    Eigen::MatrixXd spread = Eigen::MatrixXd::Zero(groups, n);
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(groups);
    for (int i = 0; i < n; ++i) {
        spread.row(group[i]) += ot.plan.matrix.row(i);
        mass[group[i]] += w[i];
    }
    Eigen::MatrixXd relaxed(n, n);
    for (int i = 0; i < n; ++i) relaxed.row(i) = spread.row(group[i]) * (w[i] / mass[group[i]]);
    const double relaxed_cost = relaxed.cwiseProduct(cost).sum();

    ProjectionResult r;
    r.degenerate = true;
    const bool keep_relaxed = relaxed_cost <= ot.cost + 1e-12 * std::max(1.0, std::abs(ot.cost));
    r.plan = {w, w, keep_relaxed ? relaxed : ot.plan.matrix};
    r.distance2 = keep_relaxed ? relaxed_cost : ot.cost;
    r.warning = "degenerate image: " + std::to_string(n - groups) +
                " midpoint atoms coincide, the push-forward is not absolutely continuous; returning the relaxed plan";
    detect_bijection(domain, r);
    return r;
}

void write_projection_csv(std::ostream& out, const GridDomain& domain, const ProjectionResult& r)
{
    out << "cell,x,y,image_x,image_y,image_cell\n";
    out.precision(17);
    for (int i = 0; i < domain.num_cells(); ++i) {
        const Point& x = domain.center(i);
        // Barycentric image of the plan row; exact for maps.
        Point y = Point::Zero();
        for (int j = 0; j < domain.num_cells(); ++j) y += r.plan.matrix(i, j) * domain.center(j);
        y /= domain.weight(i);
        const int cell = r.is_map() ? (*r.permutation)[i] : -1;
        if (r.is_map()) y = domain.center(cell);
        out << i << ',' << x.x() << ',' << x.y() << ',' << y.x() << ',' << y.y() << ',' << cell << '\n';
    }
}

}  // namespace gflow
