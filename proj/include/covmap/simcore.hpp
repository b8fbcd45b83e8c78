#pragma once

// Monte Carlo ground truth: nearest-BS association, SINR under i.i.d. fading,
// coverage probability and ergodic rate over the 32x32 RoE grid.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "covmap/grid.hpp"

namespace covmap::simcore {

/// Linear SINR cap applied before log2 and to the noiseless single-BS case.
inline constexpr double kSinrCap = 1e9;

struct ChannelParams {
    double alpha = 4.0;       ///< path-loss exponent, > 2
    double noise_ratio = 0.0; ///< sigma^2 / P, >= 0
    double gamma_th = 1.0;    ///< linear SINR threshold, > 0

    void validate() const;
};

double db_to_linear(double db);

enum class FadingKind { rayleigh, nakagami };

/// Power-gain law: Rayleigh gives Exponential(1), Nakagami(m) gives Gamma(m, 1).
struct FadingModel {
    FadingKind kind = FadingKind::rayleigh;
    int m = 1;

    static FadingModel rayleigh() { return {}; }
    static FadingModel nakagami(int m);

    /// Accepts "rayleigh" or "nakagami:M" with a positive integer M.
    static FadingModel parse(const std::string& text);

    int shape() const { return kind == FadingKind::rayleigh ? 1 : m; }
    double mean() const { return static_cast<double>(shape()); }
    std::string name() const;
};

struct McConfig {
    std::size_t n_draws = 1000;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Distance clamp for an RoI of side L: half a pixel, L/128.
constexpr double min_distance_km(double side_km) { return side_km / (2.0 * kRoiGrid); }

double path_gain(double distance_km, double alpha);

/// log2(1 + min(sinr, kSinrCap)).
double spectral_efficiency(double sinr);

/// `count` i.i.d. gains from `model`, drawn from stream `key`.
std::vector<double> sample_fading(const FadingModel& model, std::size_t count, std::uint64_t key);

/// SINR at `user` with nearest-BS association (ties go to the lowest index).
/// Returns +infinity when there is neither interference nor noise.
double sinr(Point user, std::span<const Point> bs, std::span<const double> gains, const ChannelParams& params,
            double d_min_km);

struct PointEstimate {
    double coverage = 0.0;
    double rate = 0.0; ///< bits/s/Hz
};

/// Coverage and rate at one location from the same draws. Gains for draw d,
/// BS j come from stream (mc.seed, stream_id) at counter d * bs.size() + j.
PointEstimate estimate_at(Point user, std::span<const Point> bs, const ChannelParams& params,
                          const FadingModel& fading, const McConfig& mc, std::uint64_t stream_id, double d_min_km);

double coverage_at(Point user, std::span<const Point> bs, const ChannelParams& params, const FadingModel& fading,
                   const McConfig& mc, std::uint64_t stream_id, double d_min_km);

double rate_at(Point user, std::span<const Point> bs, const ChannelParams& params, const FadingModel& fading,
               const McConfig& mc, std::uint64_t stream_id, double d_min_km);

struct ManifoldPair {
    Manifold coverage{ManifoldKind::coverage};
    Manifold rate{ManifoldKind::rate_raw};
};

/// Ground-truth manifolds for one RoI image. BSs sit at occupied pixel
/// centers; users at the RoE pixel centers. The fading gain of BS pixel b in
/// draw d at user pixel u is keyed by (seed, u, d * 4096 + b), so the result
/// is identical for any thread count. Runs the pixel loop under OpenMP.
ManifoldPair simulate_manifolds(const BsImage& image, double side_km, const ChannelParams& params,
                                const FadingModel& fading, const McConfig& mc);

/// Single-threaded reference built on `sinr()`; bit-identical to simulate_manifolds.
ManifoldPair simulate_manifolds_serial(const BsImage& image, double side_km, const ChannelParams& params,
                                       const FadingModel& fading, const McConfig& mc);

/// Coverage manifolds for `base` plus one extra BS, reusing the per-draw
/// signal and interference of `base`. Draws match simulate_manifolds; only
/// the interference summation order differs, so results agree with a full
/// simulation up to rounding in the SINR comparison.
class SingleAdditionCoverage {
public:
    SingleAdditionCoverage(const BsImage& base, double side_km, const ChannelParams& params,
                           const FadingModel& fading, const McConfig& mc);

    /// `added_pixel` must be unoccupied in the base image.
    Manifold coverage_with(int added_pixel) const;

    const BsImage& base() const { return base_; }

private:
    BsImage base_;
    double side_km_;
    ChannelParams params_;
    FadingModel fading_;
    McConfig mc_;
    std::vector<int> serving_id_;      ///< per RoE pixel, -1 for an empty base
    std::vector<double> serving_dist_; ///< per RoE pixel
    std::vector<double> signal_;       ///< per RoE pixel, per draw
    std::vector<double> interference_; ///< per RoE pixel, per draw
};

nlohmann::json to_json(const ChannelParams& params);
nlohmann::json to_json(const FadingModel& fading);
nlohmann::json to_json(const McConfig& mc);
ChannelParams channel_params_from_json(const nlohmann::json& doc);
FadingModel fading_from_json(const nlohmann::json& doc);
McConfig mc_from_json(const nlohmann::json& doc);

} // namespace covmap::simcore
