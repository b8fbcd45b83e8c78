// Hot sampling loop. The logarithm is evaluated with plain arithmetic so the
// loop vectorizes and the vector and scalar paths produce the same bits.

#include "covmap/rng.hpp"

#include <bit>

namespace covmap::rng {

namespace {

// -log(x) for x in (0, 1]; max relative error about 5e-16.
inline double neg_log_unit(double x) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    const std::uint64_t mant = bits & 0x000fffffffffffffULL;
    // Split x = 2^e * f with f in [sqrt(1/2), sqrt(2)).
    const std::int64_t above = mant > 0x6a09e667f3bcdULL ? 1 : 0;
    const std::int64_t e = static_cast<std::int64_t>(bits >> 52) - 1023 + above;
    const double f = std::bit_cast<double>(mant | (static_cast<std::uint64_t>(1023 - above) << 52));
    // log f = 2 atanh(s), s = (f - 1) / (f + 1), |s| < 0.1716.
    const double s = (f - 1.0) / (f + 1.0);
    const double s2 = s * s;
    double p = 1.0 / 23;
    p = p * s2 + 1.0 / 21;
    p = p * s2 + 1.0 / 19;
    p = p * s2 + 1.0 / 17;
    p = p * s2 + 1.0 / 15;
    p = p * s2 + 1.0 / 13;
    p = p * s2 + 1.0 / 11;
    p = p * s2 + 1.0 / 9;
    p = p * s2 + 1.0 / 7;
    p = p * s2 + 1.0 / 5;
    p = p * s2 + 1.0 / 3;
    p = p * s2 + 1.0;
    return -(static_cast<double>(e) * 0.6931471805599453094 + 2.0 * s * p);
}

inline double exponential_at(std::uint64_t key, std::uint64_t counter) {
    const double u = static_cast<double>(mix64(key + (counter + 1) * kGolden) >> 11) * 0x1.0p-53;
    return neg_log_unit(1.0 - u);
}

} // namespace

void draw_gains(std::uint64_t key, std::span<const std::uint32_t> ids, std::uint64_t id_stride,
                std::uint64_t draw_begin, std::size_t draw_count, int shape_m, std::span<double> out) {
    const std::size_t n = ids.size();
    const auto m = static_cast<std::uint64_t>(shape_m);
    const std::uint32_t* id = ids.data();
    for (std::size_t d = 0; d < draw_count; ++d) {
        const std::uint64_t base = (draw_begin + d) * id_stride;
        double* row = out.data() + d * n;
        if (m == 1) {
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) row[j] = exponential_at(key, base + id[j]);
        } else {
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) {
                double sum = 0.0;
                for (std::uint64_t k = 0; k < m; ++k) sum += exponential_at(key, (base + id[j]) * m + k);
                row[j] = sum;
            }
        }
    }
}

} // namespace covmap::rng
