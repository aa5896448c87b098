#pragma once

#include <Eigen/Dense>

#include <array>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace gflow {

enum class DomainKind { Torus1D, Torus2D, Disk2D };

std::string to_string(DomainKind kind);
DomainKind parse_domain_kind(std::string_view name);

/// Points live in R^2; one-dimensional domains leave the second coordinate at 0.
using Point = Eigen::Vector2d;

/// Discretized state space with its normalized cell measure.
///
/// Cells are a subset of a regular n^d lattice ("grid positions"). For the
/// tori every grid position is a cell; for the disk only positions whose
/// center lies in the closed unit ball are kept. The lattice view is what
/// makes step kernels and distance transforms separable, so it is exposed.
class GridDomain {
public:
    DomainKind kind() const { return kind_; }
    int n() const { return n_; }
    int dim() const { return kind_ == DomainKind::Torus1D ? 1 : 2; }
    bool periodic() const { return kind_ != DomainKind::Disk2D; }

    int num_cells() const { return static_cast<int>(centers_.size()); }
    const std::vector<Point>& centers() const { return centers_; }
    const Point& center(int cell) const { return centers_[cell]; }
    const Eigen::VectorXd& weights() const { return weights_; }
    double weight(int cell) const { return weights_[cell]; }

    /// Lattice spacing along each axis.
    double spacing() const { return spacing_; }
    /// Coordinate of lattice index i along an axis.
    double axis_coordinate(int i) const { return origin_ + (i + 0.5) * spacing_; }

    /// n^dim lattice positions.
    int grid_size() const { return grid_size_; }
    int grid_index(int cell) const { return cell_to_grid_[cell]; }
    /// -1 when the lattice position is not a cell.
    int cell_at_grid(int grid) const { return grid_to_cell_[grid]; }
    /// Lattice coordinates (ix, iy) of a cell; iy = 0 in 1-D.
    std::array<int, 2> lattice(int cell) const;
    /// Cell at lattice coordinates, wrapping on tori; -1 if absent.
    int cell_at_lattice(int ix, int iy) const;

    /// Neighbor cell along axis (0 or 1) in direction +1/-1; -1 if absent.
    int neighbor(int cell, int axis, int dir) const;

    /// Nearest cell center to an arbitrary point (wrapping on tori).
    int nearest_cell(const Point& p) const;

    /// Signed displacement y - x, wrapped into [-1/2, 1/2) per axis on tori.
    Point displacement(const Point& x, const Point& y) const;
    double sq_dist(const Point& x, const Point& y) const;
    double sq_dist_cells(int a, int b) const { return sq_dist(centers_[a], centers_[b]); }

    /// Reduce a point into the fundamental domain on tori; identity on the disk.
    Point wrap(const Point& p) const;

    nlohmann::json to_json() const;

    friend std::shared_ptr<const GridDomain> build_domain(DomainKind kind, int n);

private:
    GridDomain() = default;

    DomainKind kind_ = DomainKind::Torus1D;
    int n_ = 0;
    double spacing_ = 0.0;
    double origin_ = 0.0;
    int grid_size_ = 0;
    std::vector<Point> centers_;
    Eigen::VectorXd weights_;
    std::vector<int> cell_to_grid_;
    std::vector<int> grid_to_cell_;
};

using DomainPtr = std::shared_ptr<const GridDomain>;

/// Tori use the unit cell [0,1)^d; the disk grid covers [-1,1]^2 clipped to
/// the closed unit ball with area weights from a 32x32 midpoint rule per cell.
DomainPtr build_domain(DomainKind kind, int n);

double sq_dist(const GridDomain& domain, const Point& x, const Point& y);

/// A discrete map h: D -> R^d, one image point per cell.
struct GridMap {
    DomainPtr domain;
    std::vector<Point> image;

    static GridMap identity(DomainPtr domain);
    /// Map induced by a cell permutation: image[i] = center(perm[i]).
    static GridMap from_permutation(DomainPtr domain, const std::vector<int>& perm);
};

/// One scalar per cell.
struct ScalarField {
    DomainPtr domain;
    Eigen::VectorXd values;

    double mean() const;
};

/// One d-vector per cell (second component unused in 1-D).
struct VectorField {
    DomainPtr domain;
    std::vector<Point> values;
};

/// Discrete measure on R^d: atoms with masses.
struct DiscreteMeasure {
    std::vector<Point> atoms;
    std::vector<double> masses;
};

DiscreteMeasure push_forward(const GridDomain& domain, const GridMap& map);

/// sup over interior cells and unit xi of <D^2 p xi, xi> by centered differences.
/// Cells missing any stencil neighbor (disk boundary) are skipped.
double hessian_sup(const ScalarField& field);

/// Centered-difference gradient; one-sided where a neighbor is missing.
VectorField gradient(const ScalarField& field);

/// Negative adjoint of `gradient` under the mu_D-weighted inner product, so
/// that sum_x w_x p(x) div(v)(x) = -sum_x w_x grad(p)(x) . v(x) exactly.
ScalarField divergence(const VectorField& field);

}  // namespace gflow
