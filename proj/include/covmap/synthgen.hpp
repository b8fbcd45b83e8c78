#pragma once

// Synthetic RoIs: homogeneous PPP and parent-daughter clustered layouts that
// pass the geodata occupancy filter.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "covmap/geodata.hpp"
#include "covmap/rng.hpp"

namespace covmap::synthgen {

/// Attempts before giving up on the occupancy filter.
inline constexpr std::size_t kMaxAttempts = 10000;

/// One PPP realization on [0, L)^2: Poisson(lambda L^2) uniform points.
std::vector<Point> sample_ppp_points(double lambda, double side_km, rng::Stream& stream);

/// Parent-daughter layout: `parents` uniform parents, Poisson(daughters)
/// daughters each, displaced by N(0, spread^2) per axis truncated to [0, L).
std::vector<Point> sample_cluster_points(std::size_t parents, double daughters, double spread_km, double side_km,
                                         rng::Stream& stream);

/// PPP RoI, resampled until 21..399 pixels are occupied. Attempt a uses
/// stream (seed, a). Throws ConfigError when lambda L^2 is outside [5, 1000].
geodata::Roi gen_ppp_roi(double lambda, double side_km, std::uint64_t seed);

/// Clustered RoI with the same resampling rule; the expected count
/// parents * daughters must be within [5, 1000].
geodata::Roi gen_cluster_roi(std::size_t parents, double daughters, double spread_km, double side_km,
                             std::uint64_t seed);

} // namespace covmap::synthgen
