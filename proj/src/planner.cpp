#include "covmap/planner.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <memory>

#include "covmap/errors.hpp"
#include "covmap/geodata.hpp"
#include "covmap/rng.hpp"

namespace covmap::planner {

namespace {

constexpr std::uint64_t kInitStream = 0x1ac0;

std::vector<int> sorted_key(std::vector<int> added) {
    std::sort(added.begin(), added.end());
    return added;
}

} // namespace

Thresholds broadcast_threshold(double value) {
    Thresholds t;
    t.fill(value);
    return t;
}

void PlanConfig::validate() const {
    if (max_bs == 0) throw ConfigError("max_bs must be at least 1");
    if (!(frac_th >= 0.0 && frac_th <= 1.0)) throw ConfigError("frac_th must be in [0, 1]");
    for (double v : cov_th)
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("cov_th entries must be in [0, 1]");
}

nlohmann::json to_json(const PlanConfig& cfg) {
    nlohmann::json th;
    if (std::all_of(cfg.cov_th.begin(), cfg.cov_th.end(), [&](double v) { return v == cfg.cov_th[0]; })) {
        th = cfg.cov_th[0];
    } else {
        th = nlohmann::json::array();
        for (int i = 0; i < kRoeGrid; ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (int j = 0; j < kRoeGrid; ++j) row.push_back(cfg.cov_th[static_cast<std::size_t>(i * kRoeGrid + j)]);
            th.push_back(row);
        }
    }
    return {{"max_bs", cfg.max_bs}, {"cov_th", th}, {"frac_th", cfg.frac_th}, {"seed", cfg.seed}, {"grid_n", kRoiGrid}};
}

PlanConfig plan_config_from_json(const nlohmann::json& doc) {
    try {
        PlanConfig cfg;
        cfg.max_bs = doc.at("max_bs").get<std::size_t>();
        cfg.frac_th = doc.at("frac_th").get<double>();
        cfg.seed = doc.at("seed").get<std::uint64_t>();
        const auto& th = doc.at("cov_th");
        if (th.is_number()) {
            cfg.cov_th = broadcast_threshold(th.get<double>());
        } else {
            if (th.size() != kRoeGrid) throw ConfigError("cov_th grid must have 32 rows");
            for (int i = 0; i < kRoeGrid; ++i) {
                if (th[i].size() != kRoeGrid) throw ConfigError("cov_th grid rows must have 32 values");
                for (int j = 0; j < kRoeGrid; ++j)
                    cfg.cov_th[static_cast<std::size_t>(i * kRoeGrid + j)] = th[i][j].get<double>();
            }
        }
        cfg.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed plan config: ") + e.what());
    }
}

double frac_satisfied(const Manifold& manifold, const Thresholds& cov_th) {
    std::size_t hits = 0;
    for (std::size_t k = 0; k < kRoePixels; ++k) hits += manifold[k] > cov_th[k] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(kRoePixels);
}

Evaluator::Evaluator(const BsImage& base, Predictor predictor, const Thresholds& cov_th)
    : base_(base), predictor_(std::move(predictor)), cov_th_(cov_th) {
    if (!predictor_) throw ConfigError("planner needs a predictor");
}

BsImage Evaluator::topology(const std::vector<int>& added) const {
    BsImage img = base_;
    for (int id : added) {
        if (id < 0 || id >= kRoiPixels) throw DomainError("pixel id " + std::to_string(id) + " outside the RoI");
        if (img.at_id(id)) throw DomainError("pixel " + std::to_string(id) + " is already occupied");
        img.set_id(id);
    }
    return img;
}

double Evaluator::frac(const std::vector<int>& added) { return fracs({added}).front(); }

std::vector<double> Evaluator::fracs(const std::vector<std::vector<int>>& batch) {
    requests_ += batch.size();
    std::vector<std::vector<int>> keys(batch.size());
    std::vector<std::size_t> misses;
    std::map<std::vector<int>, std::size_t> pending;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        keys[k] = sorted_key(batch[k]);
        if (!cache_.contains(keys[k]) && pending.emplace(keys[k], k).second) misses.push_back(k);
    }
    std::vector<double> computed(misses.size());
    std::vector<BsImage> images(misses.size());
    for (std::size_t m = 0; m < misses.size(); ++m) images[m] = topology(batch[misses[m]]);
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 4)
    for (std::size_t m = 0; m < misses.size(); ++m) {
        try {
            computed[m] = frac_satisfied(predictor_(images[m]), cov_th_);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    for (std::size_t m = 0; m < misses.size(); ++m) cache_.emplace(keys[misses[m]], computed[m]);
    unique_ += misses.size();
    std::vector<double> out(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) out[k] = cache_.at(keys[k]);
    return out;
}

std::vector<int> admissible_pixels(const BsImage& base, const std::vector<int>& others) {
    BsImage blocked = base;
    for (int id : others) blocked.set_id(id);
    std::vector<int> out;
    for (int id = 0; id < kRoiPixels; ++id)
        if (!blocked.at_id(id)) out.push_back(id);
    return out;
}

CycleResult cyclic_opt(Evaluator& eval, const std::vector<int>& new_locs) {
    if (new_locs.empty()) throw ConfigError("cyclic_opt needs at least one new BS");
    CycleResult r;
    r.locations = new_locs;
    for (std::size_t j = 0; j < new_locs.size(); ++j) {
        std::vector<int> others = r.locations;
        others.erase(others.begin() + static_cast<std::ptrdiff_t>(j));
        const std::vector<int> pixels = admissible_pixels(eval.base(), others);
        std::vector<std::vector<int>> batch(pixels.size(), r.locations);
        for (std::size_t k = 0; k < pixels.size(); ++k) batch[k][j] = pixels[k];
        const std::vector<double> fr = eval.fracs(batch);
        r.predictor_calls += pixels.size();
        // Row-major scan: the first strict improvement wins.
        for (std::size_t k = 0; k < pixels.size(); ++k)
            if (fr[k] > r.max_frac) {
                r.max_frac = fr[k];
                r.locations = batch[k];
            }
    }
    return r;
}

std::vector<int> random_locations(const BsImage& base, std::size_t count, std::uint64_t seed) {
    std::vector<int> free = admissible_pixels(base, {});
    if (free.size() < count)
        throw ConfigError("only " + std::to_string(free.size()) + " free pixels for " + std::to_string(count) +
                          " new BSs");
    rng::Stream stream(seed, kInitStream + count, 0);
    // Partial Fisher-Yates: the first `count` slots are a uniform sample.
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t pick = k + static_cast<std::size_t>(stream.below(free.size() - k));
        std::swap(free[k], free[pick]);
    }
    return {free.begin(), free.begin() + static_cast<std::ptrdiff_t>(count)};
}

PlanOutcome plan(const BsImage& old_image, const Predictor& predictor, const PlanConfig& config) {
    config.validate();
    Evaluator eval(old_image, predictor, config.cov_th);
    PlanOutcome out;
    bool any_accepted = false;
    double max_frac = 0.0;
    bool done = false;
    for (std::size_t num_bs = 1; num_bs <= config.max_bs && !done; ++num_bs) {
        ++out.stages;
        std::vector<int> locs = random_locations(old_image, num_bs, config.seed);
        for (std::size_t cycle = 0;; ++cycle) {
            const CycleResult cr = cyclic_opt(eval, locs);
            ++out.cycles_used;
            const bool accept = !any_accepted || cr.max_frac > max_frac;
            if (accept) {
                any_accepted = true;
                max_frac = cr.max_frac;
                locs = cr.locations;
                out.best_locations = cr.locations;
            }
            out.log.push_back({num_bs, cycle, cr.max_frac, accept, max_frac, cr.locations, cr.predictor_calls,
                               kRoiPixels - static_cast<std::size_t>(old_image.occupied_count()) - (num_bs - 1)});
            if (!accept) break;
            if (max_frac >= config.frac_th) {
                done = true;
                break;
            }
        }
    }
    out.achieved_frac = max_frac;
    out.solution = any_accepted && max_frac >= config.frac_th;
    if (out.solution) out.locations = out.best_locations;
    out.predictor_calls = eval.requests();
    out.unique_evaluations = eval.unique_evaluations();
    return out;
}

Predictor model_predictor(const cnnae::Model& model) {
    if (model.kind != ManifoldKind::coverage) throw ConfigError("planning needs a coverage model");
    auto shared = std::make_shared<const cnnae::Model>(model);
    return [shared](const BsImage& image) { return cnnae::forward(*shared, image); };
}

Predictor simulator_predictor(const BsImage& base, double side_km, const simcore::ChannelParams& params,
                              const simcore::FadingModel& fading, const simcore::McConfig& mc) {
    auto single = std::make_shared<const simcore::SingleAdditionCoverage>(base, side_km, params, fading, mc);
    return [single, side_km, params, fading, mc](const BsImage& image) {
        const BsImage& b = single->base();
        int added = -1, extra = 0;
        bool superset = true;
        for (int id = 0; id < kRoiPixels; ++id) {
            if (b.at_id(id) && !image.at_id(id)) superset = false;
            if (!b.at_id(id) && image.at_id(id)) added = id, ++extra;
        }
        if (superset && extra == 1) return single->coverage_with(added);
        return simcore::simulate_manifolds(image, side_km, params, fading, mc).coverage;
    };
}

Scenario design_scenario(const BsImage& old_image, const Predictor& predictor, const PlanConfig& config) {
    Scenario s;
    s.outcome = plan(old_image, predictor, config);
    s.before = predictor(old_image);
    BsImage after = old_image;
    for (int id : s.outcome.best_locations) after.set_id(id);
    s.after = predictor(after);
    return s;
}

nlohmann::json to_json(const PlanOutcome& outcome, double side_km) {
    auto describe = [side_km](const std::vector<int>& ids) {
        nlohmann::json arr = nlohmann::json::array();
        for (int id : ids) {
            const int i = id / kRoiGrid, j = id % kRoiGrid;
            const Point p = geodata::pixel_center(i, j, side_km);
            arr.push_back({{"pixel", id}, {"i", i}, {"j", j}, {"x_km", p.x_km}, {"y_km", p.y_km}});
        }
        return arr;
    };
    nlohmann::json cycles = nlohmann::json::array();
    for (const CycleLog& c : outcome.log)
        cycles.push_back({{"num_bs", c.num_bs},
                          {"cycle", c.cycle},
                          {"cycle_max_frac", c.cycle_max_frac},
                          {"accepted", c.accepted},
                          {"max_frac", c.max_frac},
                          {"locations", c.locations},
                          {"predictor_calls", c.predictor_calls},
                          {"admissible", c.admissible}});
    return {{"result", outcome.solution ? "solution" : "none"},
            {"deployment", describe(outcome.locations)},
            {"best_locations", describe(outcome.best_locations)},
            {"achieved_frac", outcome.achieved_frac},
            {"stages", outcome.stages},
            {"cycles_used", outcome.cycles_used},
            {"predictor_calls", outcome.predictor_calls},
            {"unique_evaluations", outcome.unique_evaluations},
            {"cycles", cycles}};
}

} // namespace covmap::planner
