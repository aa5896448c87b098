#pragma once

#include "gflow/domain.hpp"
#include "gflow/flow.hpp"

#include <memory>
#include <utility>

namespace gflow {

using DenseFlowPtr = std::shared_ptr<const DenseFlow>;

/// Start points per cell: a subsamples x subsamples midpoint lattice inside the
/// cell (clipped to the unit ball), each carrying an equal share of the cell
/// weight and labelled by the cell. Paths are snapped to nearest cells per slice.

/// Rigid rotation x -> R(direction * t) x on the disk. Needs T = pi so that
/// the endpoint map is x -> -x; subsamples = 1 keeps it deterministic.
DenseFlowPtr classical_rotation_flow(const DomainPtr& domain, const TimeGrid& time, int direction = 1,
                                     int subsamples = 1);

/// omega_{x,theta}(t) = x cos t + sqrt(1 - |x|^2) (cos theta, sin theta) sin t
/// with theta on a uniform grid of (0, 2 pi), labelled by the start cell.
DenseFlowPtr generalized_rotation_flow(const DomainPtr& domain, const TimeGrid& time, int theta_samples = 64,
                                       int subsamples = 4);

/// The generalized rotation split by the sign of (cos theta, sin theta) . x_perp,
/// x_perp = (-x_2, x_1); each half is rescaled to mass 1.
std::pair<DenseFlowPtr, DenseFlowPtr> split_rotation_flows(const DomainPtr& domain, const TimeGrid& time,
                                                           int theta_samples = 64, int subsamples = 4);

/// x -> x + t v (mod 1) on a torus, snapped to cells.
DenseFlowPtr translation_flow(const DomainPtr& domain, const Point& v, const TimeGrid& time);

inline constexpr int kMinThetaSamples = 8;

}  // namespace gflow
