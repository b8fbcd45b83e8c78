#include "covmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace covmap::rng {

std::uint64_t Stream::below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = max() - max() % bound;
    for (;;) {
        const std::uint64_t v = (*this)();
        if (v < limit) return v % bound;
    }
}

double Stream::normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Stream::poisson(double mean) {
    // Knuth's product method on chunks of mean <= 16 keeps exp() away from underflow.
    std::uint64_t total = 0;
    while (mean > 0.0) {
        const double chunk = std::min(mean, 16.0);
        mean -= chunk;
        const double limit = std::exp(-chunk);
        double product = uniform();
        while (product > limit) {
            ++total;
            product *= uniform();
        }
    }
    return total;
}

} // namespace covmap::rng
