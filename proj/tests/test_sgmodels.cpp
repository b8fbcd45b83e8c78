#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "covmap/errors.hpp"
#include "covmap/rng.hpp"
#include "covmap/sgmodels.hpp"

using namespace covmap;
using namespace covmap::sgmodels;

namespace {

constexpr double kPi = std::numbers::pi;

// rho(gamma, 4) = sqrt(gamma) * arctan(sqrt(gamma)).
double rho4(double gamma) { return std::sqrt(gamma) * std::atan(std::sqrt(gamma)); }

// Composite Simpson on [a, b] with n (even) panels.
template <typename F>
double simpson(F f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int k = 1; k < n; ++k) s += f(a + k * h) * (k % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

// PPP coverage integral in the original variable v = r^2, alpha = 4:
// pi lambda int_0^inf exp(-pi lambda v (1 + rho) - gamma q v^2) dv.
double coverage4_simpson(double lambda, double gamma, double q) {
    const double rho = rho4(gamma);
    const double rate = kPi * lambda * (1.0 + rho);
    const double upper = 60.0 / rate;
    return kPi * lambda *
           simpson([&](double v) { return std::exp(-rate * v - gamma * q * v * v); }, 0.0, upper, 200000);
}

// Typical-user PPP Monte Carlo. Squared distances of a PPP seen from the
// origin form a 1-D Poisson process of rate pi lambda; interference beyond
// radius R is replaced by its mean 2 pi lambda R^{2 - alpha} / (alpha - 2).
struct PppMonteCarlo {
    double coverage = 0.0;
    double rate = 0.0;
};

PppMonteCarlo ppp_monte_carlo(double lambda, double alpha, double gamma, double q, std::size_t draws,
                              double radius) {
    rng::Stream stream(2718, 0, 0);
    const auto expo = [&] { return -std::log1p(-stream.uniform()); };
    const double r2_max = radius * radius;
    const double tail = 2.0 * kPi * lambda * std::pow(radius, 2.0 - alpha) / (alpha - 2.0);
    std::size_t covered = 0;
    double rate_sum = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
        double r2 = expo() / (kPi * lambda);
        const double signal = expo() * std::pow(r2, -alpha / 2.0);
        double interference = tail;
        for (;;) {
            r2 += expo() / (kPi * lambda);
            if (r2 > r2_max) break;
            interference += expo() * std::pow(r2, -alpha / 2.0);
        }
        const double sinr = signal / (interference + q);
        covered += sinr > gamma;
        rate_sum += std::log2(1.0 + sinr);
    }
    return {static_cast<double>(covered) / static_cast<double>(draws), rate_sum / static_cast<double>(draws)};
}

} // namespace

TEST_CASE("estimate_density") {
    CHECK(estimate_density(100, 100.0) == 1.0);
    CHECK(estimate_density(21, 100.0) == doctest::Approx(0.21));
    CHECK(estimate_density(50, 25.0) == 2.0);
    CHECK_THROWS_AS(estimate_density(10, 0.0), DomainError);
}

TEST_CASE("ppp_coverage closed form at alpha 4, 0 dB") {
    const double expected = 1.0 / (1.0 + kPi / 4.0);
    CHECK(std::abs(ppp_coverage(1.0, 4.0, 1.0, 0.0) - expected) <= 1e-8);
    CHECK(std::abs(ppp_coverage(1.0, 4.0, 1.0, 0.0) - 0.56010) <= 1e-4);
}

TEST_CASE("ppp_rho matches the arctan form for alpha 4") {
    for (double g : {1e-4, 0.1, 1.0, 3.16, 10.0, 1e3, 1e6})
        CHECK(ppp_rho(g, 4.0) == doctest::Approx(rho4(g)).epsilon(1e-9));
    CHECK(ppp_rho(0.0, 3.0) == 0.0);
}

TEST_CASE("ppp_rho against the hypergeometric form") {
    // rho = 2 gamma / (alpha - 2) * 2F1(1, b; b + 1; -gamma), b = 1 - 2/alpha, and
    // 2F1(1, b; b + 1; -x) = sum_k b / (b + k) (-x)^k for x < 1.
    for (double alpha : {2.2, 2.5, 3.0, 3.7, 4.5, 6.0, 9.0})
        for (double g : {1e-3, 0.3, 0.6, 0.9}) {
            const double b = 1.0 - 2.0 / alpha;
            double series = 0.0, power = 1.0;
            for (int k = 0; k < 2000; ++k, power *= -g) series += b / (b + k) * power;
            CAPTURE(alpha);
            CAPTURE(g);
            CHECK(ppp_rho(g, alpha) == doctest::Approx(2.0 * g / (alpha - 2.0) * series).epsilon(1e-9));
        }
    // Larger thresholds, evaluated with mpmath's hyp2f1 at 25 digits.
    CHECK(ppp_rho(0.3, 2.5) == doctest::Approx(1.148166330458960621).epsilon(1e-9));
    CHECK(ppp_rho(1.0, 2.5) == doctest::Approx(3.553254290607154552).epsilon(1e-9));
    CHECK(ppp_rho(4.0, 2.5) == doctest::Approx(12.05791845178292226).epsilon(1e-9));
}

TEST_CASE("no-noise coverage does not depend on lambda") {
    for (double alpha : {3.0, 4.0, 4.5})
        for (double g : {0.1, 1.0, 7.0}) {
            const double a = ppp_coverage(0.1, alpha, g, 0.0);
            const double b = ppp_coverage(10.0, alpha, g, 0.0);
            CHECK(a == doctest::Approx(b).epsilon(1e-12));
            CHECK(a == doctest::Approx(1.0 / (1.0 + ppp_rho(g, alpha))).epsilon(1e-8));
        }
}

TEST_CASE("noisy coverage matches Simpson on the coverage integral") {
    for (double lambda : {0.2, 1.0, 3.0})
        for (double q : {1e-3, 0.05, 1.0})
            for (double g : {0.5, 2.0}) {
                CAPTURE(lambda);
                CAPTURE(q);
                CAPTURE(g);
                CHECK(std::abs(ppp_coverage(lambda, 4.0, g, q) - coverage4_simpson(lambda, g, q)) <= 1e-8);
            }
}

TEST_CASE("ppp_coverage limits and monotonicity") {
    CHECK(ppp_coverage(1.0, 4.0, 0.0, 0.0) == 1.0);
    CHECK(ppp_coverage(1.0, 4.0, 1e-12, 0.0) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(ppp_coverage(1.0, 4.0, 1e12, 0.0) < 1e-5);
    for (double alpha : {2.2, 3.0, 4.0, 6.0})
        for (double q : {0.0, 0.1}) {
            double prev = 1.0;
            for (double g_db = -20.0; g_db <= 30.0; g_db += 2.5) {
                const double p = ppp_coverage(1.0, alpha, std::pow(10.0, g_db / 10.0), q);
                CHECK(p >= 0.0);
                CHECK(p <= 1.0);
                CHECK(p < prev);
                prev = p;
            }
        }
}

TEST_CASE("ppp_coverage rejects invalid models") {
    CHECK_THROWS_AS(ppp_coverage(0.0, 4.0, 1.0, 0.0), DomainError);
    CHECK_THROWS_AS(ppp_coverage(1.0, 2.0, 1.0, 0.0), DomainError);
    CHECK_THROWS_AS(ppp_rate(1.0, 1.5, 0.0), DomainError);
}

TEST_CASE("quadrature failures surface as numerical errors") {
    QuadratureOptions starved;
    starved.abs_tol = 1e-15;
    starved.max_depth = 1;
    CHECK_THROWS_AS(ppp_coverage(1.0, 2.3, 1e4, 0.5, starved), NumericalError);
}

TEST_CASE("quadrature self-consistency") {
    QuadratureOptions tight;
    tight.abs_tol = 0.5e-8;
    for (double alpha : {3.0, 4.0})
        for (double q : {0.0, 0.2}) {
            CHECK(std::abs(ppp_coverage(0.7, alpha, 1.3, q) - ppp_coverage(0.7, alpha, 1.3, q, tight)) < 1e-6);
            CHECK(std::abs(ppp_rate(0.7, alpha, q) - ppp_rate(0.7, alpha, q, tight)) < 1e-6);
        }
}

TEST_CASE("ppp_rate reference values") {
    // Layer-cake integral at 25 digits in mpmath, with rho from the hypergeometric form.
    CHECK(ppp_rate(1.0, 4.0, 0.0) == doctest::Approx(2.148155062050429).epsilon(1e-7));
    CHECK(ppp_rate(1.0, 3.0, 0.0) == doctest::Approx(1.256962183004984).epsilon(1e-7));
    CHECK(ppp_rate(0.05, 4.0, 0.0) == doctest::Approx(ppp_rate(20.0, 4.0, 0.0)).epsilon(1e-10));
}

TEST_CASE("ppp_rate agrees with a PPP Monte Carlo") {
    const auto mc = ppp_monte_carlo(1.0, 4.0, 1.0, 0.0, 40'000, 20.0);
    const double tau = ppp_rate(1.0, 4.0, 0.0);
    CHECK(std::abs(mc.rate - tau) <= 0.01 * tau);
    const double pc = ppp_coverage(1.0, 4.0, 1.0, 0.0);
    CHECK(std::abs(mc.coverage - pc) <= 4.0 * std::sqrt(pc * (1 - pc) / 40'000.0));

    const auto noisy = ppp_monte_carlo(0.5, 4.0, 2.0, 0.3, 40'000, 25.0);
    const double pcn = ppp_coverage(0.5, 4.0, 2.0, 0.3);
    CHECK(std::abs(noisy.coverage - pcn) <= 4.0 * std::sqrt(pcn * (1 - pcn) / 40'000.0));
    const double taun = ppp_rate(0.5, 4.0, 0.3);
    CHECK(std::abs(noisy.rate - taun) <= 0.015 * taun);
}

TEST_CASE("ppp_rate decreases with noise") {
    double prev = ppp_rate(1.0, 4.0, 0.0);
    CHECK(prev > 0.0);
    for (double q : {1e-3, 1e-2, 0.1, 1.0, 10.0}) {
        const double r = ppp_rate(1.0, 4.0, q);
        CHECK(r >= 0.0);
        CHECK(r <= prev);
        prev = r;
    }
}

TEST_CASE("best_fit_value and constant_manifold") {
    CHECK(best_fit_value(constant_manifold(0.7)) == 0.7);
    Manifold half(ManifoldKind::coverage);
    for (std::size_t k = 0; k < 512; ++k) half[k] = 1.0;
    CHECK(best_fit_value(half) == 0.5);

    rng::Stream stream(3, 3, 0);
    Manifold m(ManifoldKind::coverage);
    double sum = 0.0;
    for (std::size_t k = 0; k < static_cast<std::size_t>(kRoePixels); ++k) {
        m[k] = stream.uniform();
        sum += m[k];
    }
    CHECK(best_fit_value(m) == doctest::Approx(sum / 1024.0).epsilon(1e-15));

    for (double v : {0.0, 0.25, 0.56010, 1.0}) {
        const Manifold c = constant_manifold(v);
        CHECK(best_fit_value(c) == v);
        for (double x : c.values()) CHECK(x == v);
    }
    CHECK_THROWS_AS(constant_manifold(1.2), DomainError);
    CHECK_THROWS_AS(constant_manifold(-0.1), DomainError);
    CHECK_NOTHROW(constant_manifold(3.5, ManifoldKind::rate_raw));
}

TEST_CASE("ppp_baseline uses the occupied-pixel density") {
    BsImage image;
    for (int k = 0; k < 50; ++k) image.set_id(k * 37, true);
    const auto base = ppp_baseline(image, 5.0, 4.0, 1.0, 0.0);
    CHECK(base.coverage[0] == doctest::Approx(1.0 / (1.0 + kPi / 4.0)).epsilon(1e-8));
    CHECK(base.rate[0] == doctest::Approx(2.148155062050429).epsilon(1e-7));
    const auto noisy = ppp_baseline(image, 5.0, 4.0, 1.0, 0.5);
    CHECK(noisy.coverage[5] == doctest::Approx(ppp_coverage(2.0, 4.0, 1.0, 0.5)).epsilon(1e-12));
    CHECK_THROWS_AS(ppp_baseline(BsImage{}, 5.0, 4.0, 1.0, 0.0), DomainError);
}
