#include "gflow/domain.hpp"

#include "gflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gflow {

std::string to_string(DomainKind kind)
{
    switch (kind) {
    case DomainKind::Torus1D: return "torus-1d";
    case DomainKind::Torus2D: return "torus-2d";
    case DomainKind::Disk2D: return "disk-2d";
    }
    return "unknown";
}

DomainKind parse_domain_kind(std::string_view name)
{
    if (name == "torus-1d") return DomainKind::Torus1D;
    if (name == "torus-2d") return DomainKind::Torus2D;
    if (name == "disk-2d" || name == "disk") return DomainKind::Disk2D;
    throw InvalidArgument("unknown domain kind '" + std::string(name) + "'");
}

namespace {

double wrap_component(double d)
{
    d -= std::floor(d + 0.5);
    return d;
}

double disk_cell_area_fraction(double cx, double cy, double h)
{
    constexpr int kSub = 32;
    int inside = 0;
    for (int i = 0; i < kSub; ++i) {
        const double x = cx - 0.5 * h + (i + 0.5) * h / kSub;
        for (int j = 0; j < kSub; ++j) {
            const double y = cy - 0.5 * h + (j + 0.5) * h / kSub;
            if (x * x + y * y <= 1.0) ++inside;
        }
    }
    return static_cast<double>(inside) / (kSub * kSub);
}

}  // namespace

DomainPtr build_domain(DomainKind kind, int n)
{
    if (n < 2) throw InvalidArgument("domain resolution must be >= 2, got " + std::to_string(n));

    std::shared_ptr<GridDomain> d(new GridDomain());
    d->kind_ = kind;
    d->n_ = n;
    const int dim = kind == DomainKind::Torus1D ? 1 : 2;
    d->grid_size_ = dim == 1 ? n : n * n;
    d->grid_to_cell_.assign(d->grid_size_, -1);

    std::vector<double> raw_weights;
    if (kind == DomainKind::Disk2D) {
        d->spacing_ = 2.0 / n;
        d->origin_ = -1.0;
    } else {
        d->spacing_ = 1.0 / n;
        d->origin_ = 0.0;
    }

    for (int g = 0; g < d->grid_size_; ++g) {
        const int ix = g % n;
        const int iy = dim == 1 ? 0 : g / n;
        const double x = d->axis_coordinate(ix);
        const double y = dim == 1 ? 0.0 : d->axis_coordinate(iy);
        double w = 1.0;
        if (kind == DomainKind::Disk2D) {
            if (x * x + y * y > 1.0) continue;
            w = disk_cell_area_fraction(x, y, d->spacing_);
            if (w <= 0.0) continue;
        }
        d->grid_to_cell_[g] = static_cast<int>(d->centers_.size());
        d->cell_to_grid_.push_back(g);
        d->centers_.emplace_back(x, y);
        raw_weights.push_back(w);
    }

    double total = 0.0;
    for (double w : raw_weights) total += w;
    d->weights_.resize(static_cast<Eigen::Index>(raw_weights.size()));
    for (std::size_t i = 0; i < raw_weights.size(); ++i) d->weights_[static_cast<Eigen::Index>(i)] = raw_weights[i] / total;
    return d;
}

std::array<int, 2> GridDomain::lattice(int cell) const
{
    const int g = cell_to_grid_[cell];
    if (dim() == 1) return {g, 0};
    return {g % n_, g / n_};
}

int GridDomain::cell_at_lattice(int ix, int iy) const
{
    if (periodic()) {
        ix = ((ix % n_) + n_) % n_;
        iy = dim() == 1 ? 0 : ((iy % n_) + n_) % n_;
    } else if (ix < 0 || iy < 0 || ix >= n_ || iy >= n_) {
        return -1;
    }
    const int g = dim() == 1 ? ix : ix + n_ * iy;
    return grid_to_cell_[g];
}

int GridDomain::neighbor(int cell, int axis, int dir) const
{
    auto [ix, iy] = lattice(cell);
    if (axis == 0) ix += dir;
    else iy += dir;
    if (axis == 1 && dim() == 1) return -1;
    return cell_at_lattice(ix, iy);
}

Point GridDomain::wrap(const Point& p) const
{
    if (!periodic()) return p;
    Point q(p.x() - std::floor(p.x()), dim() == 1 ? 0.0 : p.y() - std::floor(p.y()));
    // floor can return 1.0 for tiny negative inputs
    if (q.x() >= 1.0) q.x() = 0.0;
    if (q.y() >= 1.0) q.y() = 0.0;
    return q;
}

int GridDomain::nearest_cell(const Point& p) const
{
    const Point q = wrap(p);
    const auto raw_index = [&](double c) { return static_cast<int>(std::floor((c - origin_) / spacing_)); };
    int ix = raw_index(q.x());
    int iy = dim() == 1 ? 0 : raw_index(q.y());
    const bool inside_box = ix >= 0 && ix < n_ && iy >= 0 && iy < n_;
    ix = std::clamp(ix, 0, n_ - 1);
    iy = std::clamp(iy, 0, n_ - 1);
    // Lattice Voronoi cells are the squares themselves.
    if (inside_box) {
        const int direct = cell_at_lattice(ix, iy);
        if (direct >= 0) return direct;
    }

    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int r = 0; r <= 2 * n_; ++r) {
        if (best >= 0 && (r - 1.5) * spacing_ > std::sqrt(best_d)) break;
        for (int dx = -r; dx <= r; ++dx) {
            for (int dy = -r; dy <= r; ++dy) {
                if (std::max(std::abs(dx), std::abs(dy)) != r) continue;
                const int c = cell_at_lattice(ix + dx, iy + dy);
                if (c < 0) continue;
                const double dd = sq_dist(q, centers_[c]);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
        }
    }
    return best;
}

Point GridDomain::displacement(const Point& x, const Point& y) const
{
    Point d = y - x;
    if (periodic()) {
        d.x() = wrap_component(d.x());
        d.y() = dim() == 1 ? 0.0 : wrap_component(d.y());
    }
    return d;
}

double GridDomain::sq_dist(const Point& x, const Point& y) const
{
    return displacement(x, y).squaredNorm();
}

double sq_dist(const GridDomain& domain, const Point& x, const Point& y)
{
    return domain.sq_dist(x, y);
}

nlohmann::json GridDomain::to_json() const
{
    nlohmann::json j;
    j["kind"] = to_string(kind_);
    j["n"] = n_;
    nlohmann::json centers = nlohmann::json::array();
    for (const auto& c : centers_) {
        if (dim() == 1) centers.push_back(c.x());
        else centers.push_back({c.x(), c.y()});
    }
    j["centers"] = std::move(centers);
    j["weights"] = std::vector<double>(weights_.data(), weights_.data() + weights_.size());
    return j;
}

GridMap GridMap::identity(DomainPtr domain)
{
    GridMap m{domain, domain->centers()};
    return m;
}

GridMap GridMap::from_permutation(DomainPtr domain, const std::vector<int>& perm)
{
    if (static_cast<int>(perm.size()) != domain->num_cells())
        throw InvalidArgument("permutation length does not match the number of cells");
    GridMap m{domain, {}};
    m.image.reserve(perm.size());
    for (int j : perm) {
        if (j < 0 || j >= domain->num_cells()) throw InvalidArgument("permutation entry out of range");
        m.image.push_back(domain->center(j));
    }
    return m;
}

double ScalarField::mean() const
{
    return domain->weights().dot(values);
}

DiscreteMeasure push_forward(const GridDomain& domain, const GridMap& map)
{
    if (static_cast<int>(map.image.size()) != domain.num_cells())
        throw InvalidArgument("map image size does not match the number of cells");
    DiscreteMeasure m;
    m.atoms = map.image;
    m.masses.assign(domain.weights().data(), domain.weights().data() + domain.num_cells());
    return m;
}

namespace {

struct StencilTerm {
    int cell;
    double coef;
};

// Gradient stencil of one cell along one axis.
std::vector<StencilTerm> gradient_stencil(const GridDomain& d, int cell, int axis)
{
    if (axis >= d.dim()) return {};
    const int plus = d.neighbor(cell, axis, +1);
    const int minus = d.neighbor(cell, axis, -1);
    const double h = d.spacing();
    if (plus >= 0 && minus >= 0) return {{plus, 0.5 / h}, {minus, -0.5 / h}};
    if (plus >= 0) return {{plus, 1.0 / h}, {cell, -1.0 / h}};
    if (minus >= 0) return {{cell, 1.0 / h}, {minus, -1.0 / h}};
    return {};
}

}  // namespace

VectorField gradient(const ScalarField& field)
{
    const GridDomain& d = *field.domain;
    VectorField g{field.domain, std::vector<Point>(d.num_cells(), Point::Zero())};
    for (int c = 0; c < d.num_cells(); ++c) {
        for (int axis = 0; axis < d.dim(); ++axis) {
            double s = 0.0;
            for (const auto& t : gradient_stencil(d, c, axis)) s += t.coef * field.values[t.cell];
            g.values[c][axis] = s;
        }
    }
    return g;
}

ScalarField divergence(const VectorField& field)
{
    const GridDomain& d = *field.domain;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(d.num_cells());
    for (int c = 0; c < d.num_cells(); ++c) {
        for (int axis = 0; axis < d.dim(); ++axis) {
            for (const auto& t : gradient_stencil(d, c, axis)) acc[t.cell] += d.weight(c) * t.coef * field.values[c][axis];
        }
    }
    ScalarField div{field.domain, Eigen::VectorXd(d.num_cells())};
    for (int c = 0; c < d.num_cells(); ++c) div.values[c] = -acc[c] / d.weight(c);
    return div;
}

double hessian_sup(const ScalarField& field)
{
    const GridDomain& d = *field.domain;
    if (d.n() < 4) throw InvalidArgument("hessian_sup needs n >= 4 for the centered stencil");
    const double h2 = d.spacing() * d.spacing();
    const auto& p = field.values;
    double sup = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < d.num_cells(); ++c) {
        auto [ix, iy] = d.lattice(c);
        const int xp = d.cell_at_lattice(ix + 1, iy);
        const int xm = d.cell_at_lattice(ix - 1, iy);
        if (xp < 0 || xm < 0) continue;
        const double hxx = (p[xp] - 2.0 * p[c] + p[xm]) / h2;
        if (d.dim() == 1) {
            sup = std::max(sup, hxx);
            continue;
        }
        const int yp = d.cell_at_lattice(ix, iy + 1);
        const int ym = d.cell_at_lattice(ix, iy - 1);
        const int pp = d.cell_at_lattice(ix + 1, iy + 1);
        const int pm = d.cell_at_lattice(ix + 1, iy - 1);
        const int mp = d.cell_at_lattice(ix - 1, iy + 1);
        const int mm = d.cell_at_lattice(ix - 1, iy - 1);
        if (yp < 0 || ym < 0 || pp < 0 || pm < 0 || mp < 0 || mm < 0) continue;
        const double hyy = (p[yp] - 2.0 * p[c] + p[ym]) / h2;
        const double hxy = (p[pp] - p[pm] - p[mp] + p[mm]) / (4.0 * h2);
        const double mid = 0.5 * (hxx + hyy);
        const double rad = std::sqrt(0.25 * (hxx - hyy) * (hxx - hyy) + hxy * hxy);
        sup = std::max(sup, mid + rad);
    }
    if (!std::isfinite(sup)) throw InvalidArgument("hessian_sup: no interior cell has a full stencil");
    return sup;
}

}  // namespace gflow
