#pragma once

// Stochastic-geometry baselines: the PPP average coverage and rate of a
// homogeneous network, and the best-fitted constant manifold.

#include "covmap/grid.hpp"

namespace covmap::sgmodels {

struct QuadratureOptions {
    double abs_tol = 1e-8;
    unsigned max_depth = 30;
};

/// BSs per km^2.
double estimate_density(double bs_count, double area_km2);

/// rho(gamma, alpha) = int_1^inf dw / (1 + w^{alpha/2} / gamma), the
/// interference term of the Rayleigh PPP coverage integral.
double ppp_rho(double gamma_th, double alpha, const QuadratureOptions& opts = {});

/// Average coverage of a PPP network of density `lambda` with nearest-BS
/// association and Rayleigh fading. Throws NumericalError when the quadrature
/// cannot reach the requested tolerance.
double ppp_coverage(double lambda, double alpha, double gamma_th, double noise_ratio,
                    const QuadratureOptions& opts = {});

/// Ergodic rate int_0^inf ppp_coverage(lambda, alpha, 2^t - 1, noise_ratio) dt.
double ppp_rate(double lambda, double alpha, double noise_ratio, const QuadratureOptions& opts = {});

/// Arithmetic mean of the manifold values.
double best_fit_value(const Manifold& ground_truth);

Manifold constant_manifold(double value, ManifoldKind kind = ManifoldKind::coverage);

struct BaselinePair {
    Manifold coverage{ManifoldKind::coverage};
    Manifold rate{ManifoldKind::rate_raw};
};

/// PPP baseline for one RoI with lambda estimated from its occupied pixels.
BaselinePair ppp_baseline(const BsImage& image, double side_km, double alpha, double gamma_th, double noise_ratio,
                          const QuadratureOptions& opts = {});

} // namespace covmap::sgmodels
