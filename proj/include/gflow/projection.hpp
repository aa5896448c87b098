#pragma once

#include "gflow/domain.hpp"
#include "gflow/transport.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gflow {

/// Result of projecting a map onto the cell bijections.
///
/// `plan` is always filled: rows are source cells x, columns target cells,
/// entry (x, j) the mass of x sent to cell j. When that plan is a
/// measure-preserving bijection, `permutation` and `map` are set too.
struct ProjectionResult {
    TransportPlan plan;
    std::optional<std::vector<int>> permutation;
    std::optional<GridMap> map;
    double distance2 = 0.0;
    bool degenerate = false;
    std::string warning;

    bool is_map() const { return permutation.has_value(); }
};

/// Atoms closer than this (relative to the lattice spacing) count as coincident.
inline constexpr double kCoincidenceTolerance = 1e-9;

/// L2 projection of h onto the measure-preserving cell bijections. The
/// image is treated as R^d-valued, so the transport cost is Euclidean in
/// the chart coordinates. Coincident image atoms are merged first; when
/// any merge happens the relaxed plan is returned with a warning.
ProjectionResult project_to_S(const DomainPtr& domain, const GridMap& h);

/// 1/2 |g - g0|^2 + 1/2 |g1 - g|^2 in L2(mu_D), with the domain metric.
double midpoint_objective(const GridDomain& domain, const std::vector<int>& g, const GridMap& g0, const GridMap& g1);

/// Minimizer of midpoint_objective over cell bijections. When the midpoint
/// image (g0 + g1) / 2 (wrap-aware on tori) has coincident atoms, the
/// projection of that image is returned in plan form and flagged degenerate.
ProjectionResult midpoint(const DomainPtr& domain, const GridMap& g0, const GridMap& g1);

/// Pointwise midpoint image, taking the short way round on tori.
GridMap midpoint_image(const GridDomain& domain, const GridMap& g0, const GridMap& g1);

/// Rows: cell, x, y, image_x, image_y, image_cell (-1 when not a map).
void write_projection_csv(std::ostream& out, const GridDomain& domain, const ProjectionResult& r);

}  // namespace gflow
