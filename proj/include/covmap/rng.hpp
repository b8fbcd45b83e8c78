#pragma once

// Counter-based random streams. A value is a pure function of (key, counter),
// so any draw can be regenerated independently of evaluation order.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>

namespace covmap::rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t stream) {
    return mix64(seed ^ mix64(stream + kGolden));
}

constexpr std::uint64_t bits_at(std::uint64_t key, std::uint64_t counter) {
    return mix64(key + (counter + 1) * kGolden);
}

/// Uniform on [0, 1) with 53 random bits.
constexpr double uniform_at(std::uint64_t key, std::uint64_t counter) {
    return static_cast<double>(bits_at(key, counter) >> 11) * 0x1.0p-53;
}

/// Sequential view of one keyed stream; satisfies UniformRandomBitGenerator.
class Stream {
public:
    using result_type = std::uint64_t;

    explicit Stream(std::uint64_t key, std::uint64_t first_counter = 0) : key_(key), counter_(first_counter) {}
    Stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t first_counter)
        : Stream(stream_key(seed, stream), first_counter) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return bits_at(key_, counter_++); }
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Unbiased integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

    /// Standard normal via Box-Muller (consumes two uniforms).
    double normal();

    /// Poisson(mean) by the product method, applied in chunks for large means.
    std::uint64_t poisson(double mean);

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

/// Fisher-Yates shuffle driven by `stream`.
template <typename T>
void shuffle(std::span<T> items, Stream& stream) {
    for (std::size_t k = items.size(); k > 1; --k) {
        const auto pick = static_cast<std::size_t>(stream.below(k));
        std::swap(items[k - 1], items[pick]);
    }
}

/// Fading power gains with integer shape m: gain(d, j) is the sum of m
/// Exponential(1) variates at counters ((draw_begin + d) * id_stride + ids[j]) * m + k.
/// `out` holds draw_count rows of ids.size() gains.
void draw_gains(std::uint64_t key, std::span<const std::uint32_t> ids, std::uint64_t id_stride,
                std::uint64_t draw_begin, std::size_t draw_count, int shape_m, std::span<double> out);

} // namespace covmap::rng
