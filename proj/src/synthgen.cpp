#include "covmap/synthgen.hpp"

#include <cmath>
#include <functional>
#include <string>

#include <boost/math/special_functions/erf.hpp>

#include "covmap/errors.hpp"

namespace covmap::synthgen {

namespace {

constexpr double kMinExpected = 5.0;
constexpr double kMaxExpected = 1000.0;

void check_side(double side_km) {
    if (!(side_km > 0.0) || !std::isfinite(side_km)) throw ConfigError("side_km must be positive");
}

void check_expected(double expected, const std::string& what) {
    if (!(expected >= kMinExpected && expected <= kMaxExpected))
        throw ConfigError(what + ": expected BS count " + std::to_string(expected) +
                          " is outside [5, 1000], so the 21..399 occupancy filter cannot be met reliably");
}

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Normal(center, spread^2) conditioned on [0, side) by inverse-CDF sampling.
double truncated_normal(double center, double spread, double side, rng::Stream& stream) {
    const double lo = phi((0.0 - center) / spread);
    const double hi = phi((side - center) / spread);
    const double u = lo + (hi - lo) * stream.uniform();
    double x = center;
    if (u > 0.0 && u < 1.0) x = center + spread * std::sqrt(2.0) * boost::math::erf_inv(2.0 * u - 1.0);
    if (!(x >= 0.0)) x = 0.0;
    if (!(x < side)) x = std::nextafter(side, 0.0);
    return x;
}

geodata::Roi accept_first(double side_km, std::uint64_t seed, nlohmann::json provenance,
                          const std::function<std::vector<Point>(rng::Stream&)>& sample) {
    for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
        rng::Stream stream(seed, attempt, 0);
        std::vector<Point> points = sample(stream);
        geodata::Raster raster = geodata::rasterize(points, side_km);
        const int occupied = raster.image.occupied_count();
        if (occupied < geodata::kMinOccupied || occupied > geodata::kMaxOccupied) continue;
        geodata::Roi roi;
        roi.spec.side_km = side_km;
        roi.spec.grid_n = kRoiGrid;
        roi.bs_local = std::move(points);
        roi.image = raster.image;
        roi.raw_count = roi.bs_local.size();
        roi.collapsed = raster.collapsed;
        roi.synthetic = true;
        provenance["seed"] = seed;
        provenance["resamples"] = attempt;
        roi.provenance = std::move(provenance);
        return roi;
    }
    throw ConfigError("no realization passed the occupancy filter in " + std::to_string(kMaxAttempts) + " attempts");
}

} // namespace

std::vector<Point> sample_ppp_points(double lambda, double side_km, rng::Stream& stream) {
    const std::uint64_t count = stream.poisson(lambda * side_km * side_km);
    std::vector<Point> points(count);
    for (Point& p : points) {
        p.x_km = stream.uniform() * side_km;
        p.y_km = stream.uniform() * side_km;
    }
    return points;
}

std::vector<Point> sample_cluster_points(std::size_t parents, double daughters, double spread_km, double side_km,
                                         rng::Stream& stream) {
    std::vector<Point> points;
    for (std::size_t k = 0; k < parents; ++k) {
        const Point parent{stream.uniform() * side_km, stream.uniform() * side_km};
        const std::uint64_t n = stream.poisson(daughters);
        for (std::uint64_t d = 0; d < n; ++d) {
            if (spread_km == 0.0) {
                points.push_back(parent);
                continue;
            }
            const double x = truncated_normal(parent.x_km, spread_km, side_km, stream);
            const double y = truncated_normal(parent.y_km, spread_km, side_km, stream);
            points.push_back({x, y});
        }
    }
    return points;
}

geodata::Roi gen_ppp_roi(double lambda, double side_km, std::uint64_t seed) {
    check_side(side_km);
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
    check_expected(lambda * side_km * side_km, "PPP");
    nlohmann::json prov = {{"generator", "ppp"}, {"lambda_per_km2", lambda}, {"side_km", side_km}};
    return accept_first(side_km, seed, std::move(prov),
                        [&](rng::Stream& s) { return sample_ppp_points(lambda, side_km, s); });
}

geodata::Roi gen_cluster_roi(std::size_t parents, double daughters, double spread_km, double side_km,
                             std::uint64_t seed) {
    check_side(side_km);
    if (parents == 0 || !(daughters > 0.0)) throw ConfigError("parents and daughters must be positive");
    if (!(spread_km >= 0.0) || !std::isfinite(spread_km)) throw ConfigError("spread_km must be finite and >= 0");
    check_expected(static_cast<double>(parents) * daughters, "cluster");
    nlohmann::json prov = {{"generator", "cluster"},
                           {"parents", parents},
                           {"daughters_per_parent", daughters},
                           {"spread_km", spread_km},
                           {"side_km", side_km}};
    return accept_first(side_km, seed, std::move(prov), [&](rng::Stream& s) {
        return sample_cluster_points(parents, daughters, spread_km, side_km, s);
    });
}

} // namespace covmap::synthgen
