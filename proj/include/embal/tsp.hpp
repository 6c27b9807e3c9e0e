#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

namespace embal::tsp {

/// Symmetric pairwise distances.
using DistanceMatrix = Eigen::MatrixXd;
/// Visiting order of an open tour (a path; no return edge).
using Tour = std::vector<int>;

double path_length(const DistanceMatrix& d, const Tour& tour);

Tour nearest_neighbor(const DistanceMatrix& d, int start);

/// Best-improvement 2-opt on an open path until no segment reversal shortens
/// it. With `fixed_start` the first node stays in place.
Tour two_opt(const DistanceMatrix& d, Tour tour, bool fixed_start);

/// True when some single segment reversal shortens the tour by more than tol.
bool has_improving_two_opt(const DistanceMatrix& d, const Tour& tour, bool fixed_start,
                           double tol = 1e-9);

/// Best-improvement or-opt: moves a run of up to three consecutive nodes, in
/// either orientation, to another gap while that shortens the path.
Tour or_opt(const DistanceMatrix& d, Tour tour, bool fixed_start);

/// Alternates 2-opt and or-opt until neither shortens the path.
Tour local_search(const DistanceMatrix& d, Tour tour, bool fixed_start);

/// Multi-start nearest-neighbour construction refined by local_search. With a
/// start node the tour is anchored there and every second node seeds one
/// construction; otherwise every node is tried as the first.
Tour solve_open(const DistanceMatrix& d, std::optional<int> start = std::nullopt);

}  // namespace embal::tsp
