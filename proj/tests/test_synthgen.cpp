#include <doctest.h>

#include <cmath>
#include <set>

#include "covmap/errors.hpp"
#include "covmap/geodata.hpp"
#include "covmap/synthgen.hpp"

using namespace covmap;
using namespace covmap::synthgen;

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0;
};

template <typename F>
Moments quadrat_moments(std::size_t draws, double side, F sample) {
    // 4x4 quadrats; pooled mean and variance of the cell counts.
    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (std::size_t d = 0; d < draws; ++d) {
        rng::Stream stream(77, d, 0);
        int cells[16] = {};
        for (const Point& p : sample(stream)) {
            const int a = static_cast<int>(p.x_km / side * 4.0), b = static_cast<int>(p.y_km / side * 4.0);
            ++cells[a * 4 + b];
        }
        for (int c : cells) {
            s += c;
            s2 += static_cast<double>(c) * c;
            ++n;
        }
    }
    const double mean = s / static_cast<double>(n);
    return {mean, s2 / static_cast<double>(n) - mean * mean};
}

} // namespace

TEST_CASE("PPP counts are Poisson with mean lambda L^2") {
    const std::size_t draws = 10000;
    double s = 0.0, s2 = 0.0, sx = 0.0;
    std::size_t points = 0;
    bool inside = true;
    for (std::size_t d = 0; d < draws; ++d) {
        rng::Stream stream(5, d, 0);
        const auto pts = sample_ppp_points(1.0, 10.0, stream);
        const double n = static_cast<double>(pts.size());
        s += n;
        s2 += n * n;
        for (const Point& p : pts) {
            inside = inside && p.x_km >= 0.0 && p.x_km < 10.0 && p.y_km >= 0.0 && p.y_km < 10.0;
            sx += p.x_km;
        }
        points += pts.size();
    }
    CHECK(inside);
    const double mean = s / draws;
    const double var = (s2 - s * s / draws) / (draws - 1);
    // sd of the mean is sqrt(100 / 1e4) = 0.1; sd of the sample variance is
    // sqrt((mu + 2 mu^2) / n) ~ 1.42.
    CHECK(std::abs(mean - 100.0) < 0.3);
    CHECK(std::abs(var - 100.0) < 4.3);
    CHECK(std::abs(sx / static_cast<double>(points) - 5.0) < 3.0 * 10.0 / std::sqrt(12.0 * points));
}

TEST_CASE("gen_ppp_roi passes the filter and is reproducible") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const geodata::Roi roi = gen_ppp_roi(1.0, 10.0, seed);
        CHECK(roi.synthetic);
        CHECK(roi.occupied() >= geodata::kMinOccupied);
        CHECK(roi.occupied() <= geodata::kMaxOccupied);
        CHECK(roi.image == geodata::rasterize(roi.bs_local, 10.0).image);
        CHECK(roi.provenance["generator"] == "ppp");
        CHECK(roi.provenance["seed"] == seed);
        CHECK(roi.raw_count == roi.bs_local.size());
        const geodata::Roi again = gen_ppp_roi(1.0, 10.0, seed);
        CHECK(again.image == roi.image);
        CHECK(again.bs_local == roi.bs_local);
    }
    CHECK(gen_ppp_roi(1.0, 10.0, 1).image != gen_ppp_roi(1.0, 10.0, 2).image);
}

TEST_CASE("gen_ppp_roi resamples sparse layouts") {
    // lambda L^2 = 25: many realizations fall below 21 occupied pixels.
    std::size_t resampled = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const geodata::Roi roi = gen_ppp_roi(0.25, 10.0, seed);
        CHECK(roi.occupied() >= geodata::kMinOccupied);
        resampled += roi.provenance["resamples"].get<std::size_t>();
    }
    CHECK(resampled > 0);
}

TEST_CASE("unsatisfiable densities are config errors") {
    CHECK_THROWS_AS(gen_ppp_roi(0.04, 10.0, 1), ConfigError);
    CHECK_THROWS_AS(gen_ppp_roi(11.0, 10.0, 1), ConfigError);
    CHECK_THROWS_AS(gen_ppp_roi(0.0, 10.0, 1), ConfigError);
    CHECK_THROWS_AS(gen_ppp_roi(1.0, -1.0, 1), ConfigError);
    CHECK_THROWS_AS(gen_cluster_roi(2, 2.0, 0.5, 10.0, 1), ConfigError);
    CHECK_THROWS_AS(gen_cluster_roi(100, 20.0, 0.5, 10.0, 1), ConfigError);
    CHECK_THROWS_AS(gen_cluster_roi(0, 20.0, 0.5, 10.0, 1), ConfigError);
    CHECK_THROWS_AS(gen_cluster_roi(10, 5.0, -1.0, 10.0, 1), ConfigError);
}

TEST_CASE("zero spread collapses daughters onto their parents") {
    const geodata::Roi roi = gen_cluster_roi(30, 4.0, 0.0, 10.0, 3);
    std::set<std::pair<double, double>> distinct;
    for (const Point& p : roi.bs_local) distinct.insert({p.x_km, p.y_km});
    CHECK(distinct.size() <= 30);
    CHECK(roi.bs_local.size() > distinct.size());
    CHECK(roi.occupied() <= 30);
    CHECK(roi.provenance["generator"] == "cluster");
}

TEST_CASE("cluster layouts stay inside the RoI and are reproducible") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const geodata::Roi roi = gen_cluster_roi(8, 12.0, 0.8, 10.0, seed);
        for (const Point& p : roi.bs_local) {
            CHECK(p.x_km >= 0.0);
            CHECK(p.x_km < 10.0);
            CHECK(p.y_km >= 0.0);
            CHECK(p.y_km < 10.0);
        }
        CHECK(roi.occupied() >= geodata::kMinOccupied);
        CHECK(gen_cluster_roi(8, 12.0, 0.8, 10.0, seed).bs_local == roi.bs_local);
    }
}

TEST_CASE("very wide spread approaches the uniform layout") {
    // Fixed parents with Poisson daughters give a Poisson total; spread
    // uniformly that is a PPP, so quadrat counts should match (variance = mean).
    const std::size_t draws = 2000;
    const Moments ppp = quadrat_moments(draws, 10.0, [](rng::Stream& s) { return sample_ppp_points(1.0, 10.0, s); });
    const Moments wide =
        quadrat_moments(draws, 10.0, [](rng::Stream& s) { return sample_cluster_points(20, 5.0, 1e4, 10.0, s); });
    const Moments tight =
        quadrat_moments(draws, 10.0, [](rng::Stream& s) { return sample_cluster_points(20, 5.0, 0.3, 10.0, s); });
    CHECK(std::abs(ppp.mean - 6.25) < 0.05);
    CHECK(std::abs(wide.mean - 6.25) < 0.05);
    CHECK(std::abs(ppp.var / ppp.mean - 1.0) < 0.05);
    CHECK(std::abs(wide.var / wide.mean - ppp.var / ppp.mean) < 0.05);
    CHECK(tight.var / tight.mean > 2.0);
}
