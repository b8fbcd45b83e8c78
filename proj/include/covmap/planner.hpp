#pragma once

// Brownfield BS placement: per-BS cyclic exhaustive sweeps driven by a
// coverage predictor, adding BSs one stage at a time until enough RoE
// locations beat their coverage threshold.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include <json.hpp>

#include "covmap/cnnae.hpp"
#include "covmap/grid.hpp"
#include "covmap/simcore.hpp"

namespace covmap::planner {

using Thresholds = std::array<double, kRoePixels>;

/// Pure map from a BS image to its coverage manifold. Must be safe to call
/// concurrently.
using Predictor = std::function<Manifold(const BsImage&)>;

Thresholds broadcast_threshold(double value);

struct PlanConfig {
    std::size_t max_bs = 1;
    Thresholds cov_th = broadcast_threshold(0.9);
    double frac_th = 0.95;
    std::uint64_t seed = 1;

    void validate() const;
};

nlohmann::json to_json(const PlanConfig& cfg);
PlanConfig plan_config_from_json(const nlohmann::json& doc);

/// Fraction of RoE cells whose value is strictly greater than its threshold.
double frac_satisfied(const Manifold& manifold, const Thresholds& cov_th);

/// Memoizing front end to a predictor for one fixed base image. Topologies
/// are keyed by the sorted set of added pixels, which identifies them exactly.
class Evaluator {
public:
    Evaluator(const BsImage& base, Predictor predictor, const Thresholds& cov_th);

    /// frac_satisfied for base plus `added` (distinct, unoccupied pixels).
    double frac(const std::vector<int>& added);
    /// Batch form; cache misses are predicted in parallel.
    std::vector<double> fracs(const std::vector<std::vector<int>>& batch);

    BsImage topology(const std::vector<int>& added) const;
    const BsImage& base() const { return base_; }

    std::size_t requests() const { return requests_; }
    std::size_t unique_evaluations() const { return unique_; }

private:
    BsImage base_;
    Predictor predictor_;
    Thresholds cov_th_;
    std::map<std::vector<int>, double> cache_;
    std::size_t requests_ = 0;
    std::size_t unique_ = 0;
};

struct CycleResult {
    double max_frac = 0.0;
    std::vector<int> locations;
    std::size_t predictor_calls = 0;
};

/// One pass of cyclic maximization. For each new BS in index order, sweeps
/// its location over every pixel not occupied by the base or by another new
/// BS (row-major) and keeps the first location whose fraction strictly
/// exceeds the best seen in this pass (which starts at 0).
CycleResult cyclic_opt(Evaluator& eval, const std::vector<int>& new_locs);

/// Pixels a BS may occupy given the base and the other new BSs.
std::vector<int> admissible_pixels(const BsImage& base, const std::vector<int>& others);

struct CycleLog {
    std::size_t num_bs = 0;
    std::size_t cycle = 0; ///< index within the stage
    double cycle_max_frac = 0.0;
    bool accepted = false;
    double max_frac = 0.0; ///< running MaxFrac after this cycle
    std::vector<int> locations;
    std::size_t predictor_calls = 0;
    std::size_t admissible = 0; ///< pixels swept per BS
};

struct PlanOutcome {
    bool solution = false;
    std::vector<int> locations; ///< pixel ids of the new BSs; empty for no solution
    std::vector<int> best_locations; ///< locations that reached max_frac, solution or not
    double achieved_frac = 0.0;      ///< final MaxFrac
    std::size_t stages = 0;
    std::size_t cycles_used = 0;
    std::size_t predictor_calls = 0;
    std::size_t unique_evaluations = 0;
    std::vector<CycleLog> log;
};

/// Initial locations for a stage: `count` distinct unoccupied pixels drawn
/// uniformly with stream (seed, count).
std::vector<int> random_locations(const BsImage& base, std::size_t count, std::uint64_t seed);

/// Staged planning loop. MaxFrac persists across stages; a cycle is accepted when its
/// fraction strictly exceeds MaxFrac, except that the very first cycle is
/// always accepted so a frac_th of 0 yields a solution.
PlanOutcome plan(const BsImage& old_image, const Predictor& predictor, const PlanConfig& config);

Predictor model_predictor(const cnnae::Model& model);

/// Ground-truth simulator as predictor. Images that add exactly one BS to
/// `base` go through SingleAdditionCoverage; anything else is simulated in full.
Predictor simulator_predictor(const BsImage& base, double side_km, const simcore::ChannelParams& params,
                              const simcore::FadingModel& fading, const simcore::McConfig& mc);

struct Scenario {
    PlanOutcome outcome;
    Manifold before{ManifoldKind::coverage};
    Manifold after{ManifoldKind::coverage}; ///< with the best locations added
};

Scenario design_scenario(const BsImage& old_image, const Predictor& predictor, const PlanConfig& config);

nlohmann::json to_json(const PlanOutcome& outcome, double side_km);

} // namespace covmap::planner
