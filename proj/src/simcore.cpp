#include "covmap/simcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "covmap/geodata.hpp"
#include "covmap/rng.hpp"

namespace covmap::simcore {

namespace {

constexpr std::size_t kDrawBlock = 64;

double distance(Point a, Point b) {
    const double dx = a.x_km - b.x_km;
    const double dy = a.y_km - b.y_km;
    return std::sqrt(dx * dx + dy * dy);
}

// Sum of a[j] * b[j] accumulated in eight fixed lanes. Every SINR evaluation
// in this file goes through here, which keeps all code paths bit-identical.
double lane_dot(const double* a, const double* b, std::size_t n) {
    double acc[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8)
        for (std::size_t k = 0; k < 8; ++k) acc[k] += a[j + k] * b[j + k];
    for (std::size_t k = 0; j < n; ++j, ++k) acc[k] += a[j] * b[j];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

double sinr_from_powers(double signal, double interference, double noise_ratio) {
    const double denom = interference + noise_ratio;
    if (denom == 0.0) return signal > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return signal / denom;
}

struct Geometry {
    std::vector<double> gain;          // path gain per BS
    std::vector<double> interferer;    // path gain with the serving entry zeroed
    std::size_t serving = 0;
};

Geometry geometry(Point user, std::span<const Point> bs, double alpha, double d_min_km) {
    Geometry g;
    g.gain.resize(bs.size());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < bs.size(); ++j) {
        const double d = std::max(distance(user, bs[j]), d_min_km);
        g.gain[j] = path_gain(d, alpha);
        if (d < best) {
            best = d;
            g.serving = j;
        }
    }
    g.interferer = g.gain;
    g.interferer[g.serving] = 0.0;
    return g;
}

std::vector<Point> bs_points(const std::vector<int>& ids, double side_km) {
    std::vector<Point> points;
    points.reserve(ids.size());
    for (int id : ids) points.push_back(geodata::pixel_center(id / kRoiGrid, id % kRoiGrid, side_km));
    return points;
}

int roe_to_roi_id(int roe_index) {
    return pixel_id(kRoeOffset + roe_index / kRoeGrid, kRoeOffset + roe_index % kRoeGrid);
}

void check_inputs(const ChannelParams& params, const McConfig& mc, double side_km) {
    params.validate();
    mc.validate();
    if (!(side_km > 0.0)) throw DomainError("side_km must be positive");
}

} // namespace

void ChannelParams::validate() const {
    if (!(alpha > 2.0) || !std::isfinite(alpha)) throw ConfigError("path-loss exponent must exceed 2");
    if (!(noise_ratio >= 0.0) || !std::isfinite(noise_ratio)) throw ConfigError("noise ratio must be >= 0");
    if (!(gamma_th > 0.0) || !std::isfinite(gamma_th)) throw ConfigError("SINR threshold must be positive");
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

FadingModel FadingModel::nakagami(int m) {
    if (m < 1) throw ConfigError("Nakagami shape must be a positive integer");
    return {FadingKind::nakagami, m};
}

FadingModel FadingModel::parse(const std::string& text) {
    if (text == "rayleigh") return rayleigh();
    const std::string prefix = "nakagami:";
    if (text.rfind(prefix, 0) == 0) {
        const std::string digits = text.substr(prefix.size());
        if (!digits.empty() && digits.size() < 4 &&
            std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
            return nakagami(std::stoi(digits));
    }
    throw ConfigError("invalid fading spec '" + text + "', expected rayleigh or nakagami:M");
}

std::string FadingModel::name() const {
    return kind == FadingKind::rayleigh ? "rayleigh" : "nakagami:" + std::to_string(m);
}

void McConfig::validate() const {
    if (n_draws < 1) throw ConfigError("n_draws must be at least 1");
}

double path_gain(double distance_km, double alpha) {
    if (alpha == 4.0) {
        const double d2 = distance_km * distance_km;
        return 1.0 / (d2 * d2);
    }
    return std::pow(distance_km, -alpha);
}

double spectral_efficiency(double s) { return std::log2(1.0 + std::min(s, kSinrCap)); }

std::vector<double> sample_fading(const FadingModel& model, std::size_t count, std::uint64_t key) {
    std::vector<double> out(count);
    std::vector<std::uint32_t> ids(std::min<std::size_t>(count, 4096));
    std::iota(ids.begin(), ids.end(), 0U);
    for (std::size_t first = 0; first < count; first += ids.size()) {
        const std::size_t n = std::min(ids.size(), count - first);
        // counter = (first + j) * m + k
        rng::draw_gains(key, std::span(ids).first(n), 1, first, 1, model.shape(), std::span(out).subspan(first, n));
    }
    return out;
}

double sinr(Point user, std::span<const Point> bs, std::span<const double> gains, const ChannelParams& params,
            double d_min_km) {
    if (bs.empty()) throw DomainError("SINR needs at least one BS");
    if (gains.size() != bs.size()) throw ShapeError("one fading gain per BS is required");
    const Geometry g = geometry(user, bs, params.alpha, d_min_km);
    const double signal = gains[g.serving] * g.gain[g.serving];
    return sinr_from_powers(signal, lane_dot(gains.data(), g.interferer.data(), bs.size()), params.noise_ratio);
}

PointEstimate estimate_at(Point user, std::span<const Point> bs, const ChannelParams& params,
                          const FadingModel& fading, const McConfig& mc, std::uint64_t stream_id, double d_min_km) {
    params.validate();
    mc.validate();
    if (bs.empty()) throw DomainError("coverage needs at least one BS");
    const std::size_t n = bs.size();
    const std::uint64_t key = rng::stream_key(mc.seed, stream_id);
    std::vector<std::uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0U);
    std::vector<double> gains(n);
    std::size_t covered = 0;
    double rate_sum = 0.0;
    for (std::size_t d = 0; d < mc.n_draws; ++d) {
        rng::draw_gains(key, ids, n, d, 1, fading.shape(), gains);
        const double s = sinr(user, bs, gains, params, d_min_km);
        covered += s > params.gamma_th;
        rate_sum += spectral_efficiency(s);
    }
    const auto draws = static_cast<double>(mc.n_draws);
    return {static_cast<double>(covered) / draws, rate_sum / draws};
}

double coverage_at(Point user, std::span<const Point> bs, const ChannelParams& params, const FadingModel& fading,
                   const McConfig& mc, std::uint64_t stream_id, double d_min_km) {
    return estimate_at(user, bs, params, fading, mc, stream_id, d_min_km).coverage;
}

double rate_at(Point user, std::span<const Point> bs, const ChannelParams& params, const FadingModel& fading,
               const McConfig& mc, std::uint64_t stream_id, double d_min_km) {
    return estimate_at(user, bs, params, fading, mc, stream_id, d_min_km).rate;
}

ManifoldPair simulate_manifolds(const BsImage& image, double side_km, const ChannelParams& params,
                                const FadingModel& fading, const McConfig& mc) {
    check_inputs(params, mc, side_km);
    const std::vector<int> occupied = image.occupied_ids();
    if (occupied.empty()) throw DomainError("cannot simulate an RoI without base stations");
    const std::vector<std::uint32_t> ids(occupied.begin(), occupied.end());
    const std::vector<Point> bs = bs_points(occupied, side_km);
    const std::size_t n = bs.size();
    const double d_min = min_distance_km(side_km);
    const int shape = fading.shape();

    ManifoldPair out;
#pragma omp parallel
    {
        std::vector<double> gains(kDrawBlock * n);
#pragma omp for schedule(dynamic, 8)
        for (int u = 0; u < kRoePixels; ++u) {
            const int uid = roe_to_roi_id(u);
            const Point user = geodata::pixel_center(uid / kRoiGrid, uid % kRoiGrid, side_km);
            const Geometry g = geometry(user, bs, params.alpha, d_min);
            const std::uint64_t key = rng::stream_key(mc.seed, static_cast<std::uint64_t>(uid));
            std::size_t covered = 0;
            double rate_sum = 0.0;
            for (std::size_t d0 = 0; d0 < mc.n_draws; d0 += kDrawBlock) {
                const std::size_t block = std::min(kDrawBlock, mc.n_draws - d0);
                rng::draw_gains(key, ids, kRoiPixels, d0, block, shape, std::span(gains).first(block * n));
                for (std::size_t b = 0; b < block; ++b) {
                    const double* h = gains.data() + b * n;
                    const double signal = h[g.serving] * g.gain[g.serving];
                    const double s = sinr_from_powers(signal, lane_dot(h, g.interferer.data(), n), params.noise_ratio);
                    covered += s > params.gamma_th;
                    rate_sum += spectral_efficiency(s);
                }
            }
            const auto draws = static_cast<double>(mc.n_draws);
            out.coverage[static_cast<std::size_t>(u)] = static_cast<double>(covered) / draws;
            out.rate[static_cast<std::size_t>(u)] = rate_sum / draws;
        }
    }
    return out;
}

ManifoldPair simulate_manifolds_serial(const BsImage& image, double side_km, const ChannelParams& params,
                                       const FadingModel& fading, const McConfig& mc) {
    check_inputs(params, mc, side_km);
    const std::vector<int> occupied = image.occupied_ids();
    if (occupied.empty()) throw DomainError("cannot simulate an RoI without base stations");
    const std::vector<std::uint32_t> ids(occupied.begin(), occupied.end());
    const std::vector<Point> bs = bs_points(occupied, side_km);
    std::vector<double> gains(bs.size());

    ManifoldPair out;
    for (int u = 0; u < kRoePixels; ++u) {
        const int uid = roe_to_roi_id(u);
        const Point user = geodata::pixel_center(uid / kRoiGrid, uid % kRoiGrid, side_km);
        const std::uint64_t key = rng::stream_key(mc.seed, static_cast<std::uint64_t>(uid));
        std::size_t covered = 0;
        double rate_sum = 0.0;
        for (std::size_t d = 0; d < mc.n_draws; ++d) {
            rng::draw_gains(key, ids, kRoiPixels, d, 1, fading.shape(), gains);
            const double s = sinr(user, bs, gains, params, min_distance_km(side_km));
            covered += s > params.gamma_th;
            rate_sum += spectral_efficiency(s);
        }
        out.coverage[static_cast<std::size_t>(u)] = static_cast<double>(covered) / static_cast<double>(mc.n_draws);
        out.rate[static_cast<std::size_t>(u)] = rate_sum / static_cast<double>(mc.n_draws);
    }
    return out;
}

SingleAdditionCoverage::SingleAdditionCoverage(const BsImage& base, double side_km, const ChannelParams& params,
                                               const FadingModel& fading, const McConfig& mc)
    : base_(base), side_km_(side_km), params_(params), fading_(fading), mc_(mc) {
    check_inputs(params, mc, side_km);
    const std::vector<int> occupied = base.occupied_ids();
    const std::vector<std::uint32_t> ids(occupied.begin(), occupied.end());
    const std::vector<Point> bs = bs_points(occupied, side_km);
    const std::size_t n = bs.size();
    const std::size_t draws = mc.n_draws;
    serving_id_.assign(kRoePixels, -1);
    serving_dist_.assign(kRoePixels, std::numeric_limits<double>::infinity());
    signal_.assign(kRoePixels * draws, 0.0);
    interference_.assign(kRoePixels * draws, 0.0);
    if (n == 0) return;

    const double d_min = min_distance_km(side_km);
#pragma omp parallel
    {
        std::vector<double> gains(kDrawBlock * n);
#pragma omp for schedule(dynamic, 8)
        for (int u = 0; u < kRoePixels; ++u) {
            const int uid = roe_to_roi_id(u);
            const Point user = geodata::pixel_center(uid / kRoiGrid, uid % kRoiGrid, side_km);
            const Geometry g = geometry(user, bs, params.alpha, d_min);
            const auto uu = static_cast<std::size_t>(u);
            serving_id_[uu] = occupied[g.serving];
            serving_dist_[uu] = std::max(distance(user, bs[g.serving]), d_min);
            const std::uint64_t key = rng::stream_key(mc.seed, static_cast<std::uint64_t>(uid));
            for (std::size_t d0 = 0; d0 < draws; d0 += kDrawBlock) {
                const std::size_t block = std::min(kDrawBlock, draws - d0);
                rng::draw_gains(key, ids, kRoiPixels, d0, block, fading.shape(), std::span(gains).first(block * n));
                for (std::size_t b = 0; b < block; ++b) {
                    const double* h = gains.data() + b * n;
                    signal_[uu * draws + d0 + b] = h[g.serving] * g.gain[g.serving];
                    interference_[uu * draws + d0 + b] = lane_dot(h, g.interferer.data(), n);
                }
            }
        }
    }
}

Manifold SingleAdditionCoverage::coverage_with(int added_pixel) const {
    if (added_pixel < 0 || added_pixel >= kRoiPixels) throw DomainError("added BS pixel out of range");
    if (base_.at_id(added_pixel)) throw DomainError("added BS pixel is already occupied");
    const std::size_t draws = mc_.n_draws;
    const Point added = geodata::pixel_center(added_pixel / kRoiGrid, added_pixel % kRoiGrid, side_km_);
    const std::uint32_t id = static_cast<std::uint32_t>(added_pixel);
    const double d_min = min_distance_km(side_km_);

    Manifold out(ManifoldKind::coverage);
#pragma omp parallel
    {
        std::vector<double> h(draws);
#pragma omp for schedule(static)
        for (int u = 0; u < kRoePixels; ++u) {
            const int uid = roe_to_roi_id(u);
            const auto uu = static_cast<std::size_t>(u);
            const Point user = geodata::pixel_center(uid / kRoiGrid, uid % kRoiGrid, side_km_);
            const double dist = std::max(distance(user, added), d_min);
            const double gain = path_gain(dist, params_.alpha);
            const int sid = serving_id_[uu];
            const double sdist = serving_dist_[uu];
            const bool takes_over = sid < 0 || dist < sdist || (dist == sdist && added_pixel < sid);
            const std::uint64_t key = rng::stream_key(mc_.seed, static_cast<std::uint64_t>(uid));
            rng::draw_gains(key, std::span(&id, 1), kRoiPixels, 0, draws, fading_.shape(), h);
            const double* sig = signal_.data() + uu * draws;
            const double* itf = interference_.data() + uu * draws;
            std::size_t covered = 0;
            for (std::size_t d = 0; d < draws; ++d) {
                const double p = h[d] * gain;
                const double s = takes_over ? sinr_from_powers(p, itf[d] + sig[d], params_.noise_ratio)
                                            : sinr_from_powers(sig[d], itf[d] + p, params_.noise_ratio);
                covered += s > params_.gamma_th;
            }
            out[uu] = static_cast<double>(covered) / static_cast<double>(draws);
        }
    }
    return out;
}

nlohmann::json to_json(const ChannelParams& p) {
    return {{"alpha", p.alpha}, {"noise_ratio", p.noise_ratio}, {"gamma_th", p.gamma_th}};
}

nlohmann::json to_json(const FadingModel& f) { return {{"kind", f.name()}, {"shape", f.shape()}}; }

nlohmann::json to_json(const McConfig& mc) { return {{"n_draws", mc.n_draws}, {"seed", mc.seed}}; }

ChannelParams channel_params_from_json(const nlohmann::json& doc) {
    try {
        ChannelParams p{doc.at("alpha").get<double>(), doc.at("noise_ratio").get<double>(),
                        doc.at("gamma_th").get<double>()};
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed channel params: ") + e.what());
    }
}

FadingModel fading_from_json(const nlohmann::json& doc) {
    try {
        return FadingModel::parse(doc.at("kind").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed fading model: ") + e.what());
    }
}

McConfig mc_from_json(const nlohmann::json& doc) {
    try {
        McConfig mc{doc.at("n_draws").get<std::size_t>(), doc.at("seed").get<std::uint64_t>()};
        mc.validate();
        return mc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed Monte Carlo config: ") + e.what());
    }
}

} // namespace covmap::simcore
