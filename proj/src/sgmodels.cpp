#include "covmap/sgmodels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "covmap/errors.hpp"

namespace covmap::sgmodels {

namespace {

using Kronrod = boost::math::quadrature::gauss_kronrod<double, 15>;

// Adaptive Gauss-Kronrod on [0, 1]. Accepts the result when the error
// estimate is within tol * max(1, |result|).
template <typename F>
double integrate_unit(F f, double tol, unsigned max_depth, const char* what) {
    double error = 0.0;
    double l1 = 0.0;
    double value = 0.0;
    try {
        value = Kronrod::integrate(f, 0.0, 1.0, max_depth, tol, &error, &l1);
    } catch (const std::exception& e) {
        throw NumericalError(std::string(what) + ": quadrature failed: " + e.what());
    }
    if (!std::isfinite(value) || !(error <= tol * std::max(1.0, std::abs(value)))) {
        std::ostringstream msg;
        msg << what << ": quadrature did not converge (value " << value << ", error estimate " << error
            << ", tolerance " << tol << ", max depth " << max_depth << ")";
        throw NumericalError(msg.str());
    }
    return value;
}

void check_model(double lambda, double alpha, double noise_ratio) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("PPP density must be positive");
    if (!(alpha > 2.0) || !std::isfinite(alpha)) throw DomainError("path-loss exponent must exceed 2");
    if (!(noise_ratio >= 0.0) || !std::isfinite(noise_ratio)) throw DomainError("noise ratio must be >= 0");
}

} // namespace

double estimate_density(double bs_count, double area_km2) {
    if (!(area_km2 > 0.0) || !std::isfinite(area_km2)) throw DomainError("area must be positive");
    if (!(bs_count >= 0.0)) throw DomainError("BS count must be nonnegative");
    return bs_count / area_km2;
}

double ppp_rho(double gamma_th, double alpha, const QuadratureOptions& opts) {
    if (!(alpha > 2.0)) throw DomainError("path-loss exponent must exceed 2");
    if (!(gamma_th >= 0.0)) throw DomainError("threshold must be nonnegative");
    if (gamma_th == 0.0) return 0.0;
    if (std::isinf(gamma_th)) return gamma_th;
    const double beta = alpha / 2.0;
    if (gamma_th <= 1.0) {
        // w = s^{-1/(beta-1)}: rho = gamma/(beta-1) int_0^1 ds / (1 + gamma s^kappa), kappa = beta/(beta-1);
        // s = z^2 keeps the integrand smooth at 0.
        const double kappa2 = 2.0 * beta / (beta - 1.0);
        const double inner = integrate_unit(
            [&](double z) { return 2.0 * z / (1.0 + gamma_th * std::pow(z, kappa2)); }, opts.abs_tol,
            opts.max_depth, "ppp_rho");
        return gamma_th / (beta - 1.0) * inner;
    }
    // Large thresholds: w = 1 + v / eps with eps = gamma^{-1/beta}, then
    // v = s^{-1/(beta-1)} - 1. With r = s^{1/(beta-1)} the integrand is
    // 1 / ((beta-1) (r^beta + (1 - (1 - eps) r)^beta)), bounded on [0, 1].
    // For beta >= 2, r = z^2 removes the fractional power at 0.
    const double eps = std::pow(gamma_th, -1.0 / beta);
    const auto tail = [&](double r) { return std::pow(r, beta) + std::pow(1.0 - (1.0 - eps) * r, beta); };
    const double inner =
        beta < 2.0 ? integrate_unit(
                         [&](double s) { return 1.0 / ((beta - 1.0) * tail(std::pow(s, 1.0 / (beta - 1.0)))); },
                         opts.abs_tol, opts.max_depth, "ppp_rho")
                   : integrate_unit(
                         [&](double z) { return 2.0 * std::pow(z, 2.0 * beta - 3.0) / tail(z * z); },
                         opts.abs_tol, opts.max_depth, "ppp_rho");
    return inner / eps;
}

double ppp_coverage(double lambda, double alpha, double gamma_th, double noise_ratio,
                    const QuadratureOptions& opts) {
    check_model(lambda, alpha, noise_ratio);
    if (!(gamma_th >= 0.0) || std::isnan(gamma_th)) throw DomainError("threshold must be nonnegative");
    if (gamma_th == 0.0) return 1.0;
    const double rho = ppp_rho(gamma_th, alpha, opts);
    // p_c = int_0^inf exp(-s(1 + rho) - gamma q (s / (pi lambda))^{alpha/2}) ds; with
    // x = s (1 + rho) and x = t / (1 - t) this is an integral over [0, 1).
    const double c = gamma_th * noise_ratio * std::pow(std::numbers::pi * lambda * (1.0 + rho), -alpha / 2.0);
    const double beta = alpha / 2.0;
    const double integral = integrate_unit(
        [&](double t) {
            const double one_minus = 1.0 - t;
            const double x = t / one_minus;
            const double noise = c > 0.0 ? c * std::pow(x, beta) : 0.0;
            return std::exp(-x - noise) / (one_minus * one_minus);
        },
        opts.abs_tol, opts.max_depth, "ppp_coverage");
    return std::clamp(integral / (1.0 + rho), 0.0, 1.0);
}

double ppp_rate(double lambda, double alpha, double noise_ratio, const QuadratureOptions& opts) {
    check_model(lambda, alpha, noise_ratio);
    QuadratureOptions inner = opts;
    inner.abs_tol = opts.abs_tol / 10.0;
    const double value = integrate_unit(
        [&](double y) {
            const double one_minus = 1.0 - y;
            const double t = y / one_minus;
            return ppp_coverage(lambda, alpha, std::exp2(t) - 1.0, noise_ratio, inner) / (one_minus * one_minus);
        },
        opts.abs_tol, opts.max_depth, "ppp_rate");
    return std::max(value, 0.0);
}

double best_fit_value(const Manifold& ground_truth) {
    // Pairwise summation over the 2^10 values; exact for constant manifolds.
    std::array<double, kRoePixels> partial = ground_truth.values();
    for (std::size_t width = partial.size() / 2; width >= 1; width /= 2)
        for (std::size_t k = 0; k < width; ++k) partial[k] = partial[2 * k] + partial[2 * k + 1];
    return partial[0] / static_cast<double>(kRoePixels);
}

Manifold constant_manifold(double value, ManifoldKind kind) {
    Manifold out(kind, value);
    out.validate();
    return out;
}

BaselinePair ppp_baseline(const BsImage& image, double side_km, double alpha, double gamma_th, double noise_ratio,
                          const QuadratureOptions& opts) {
    if (!(side_km > 0.0)) throw DomainError("side_km must be positive");
    const double lambda = estimate_density(image.occupied_count(), side_km * side_km);
    if (!(lambda > 0.0)) throw DomainError("PPP baseline needs at least one BS");
    BaselinePair out;
    out.coverage = constant_manifold(ppp_coverage(lambda, alpha, gamma_th, noise_ratio, opts), ManifoldKind::coverage);
    out.rate = constant_manifold(ppp_rate(lambda, alpha, noise_ratio, opts), ManifoldKind::rate_raw);
    return out;
}

} // namespace covmap::sgmodels
