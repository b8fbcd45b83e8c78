// covmap command-line front end.

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "covmap/cnnae.hpp"
#include "covmap/errors.hpp"
#include "covmap/geodata.hpp"
#include "covmap/io.hpp"
#include "covmap/planner.hpp"
#include "covmap/sgmodels.hpp"
#include "covmap/simcore.hpp"
#include "covmap/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace covmap;

namespace {

constexpr int kExitError = 2;

std::string fmt(double v) { return io::format_double(v); }

// ---------------------------------------------------------------- datasets

// One simulated RoI: the directory written by `simulate`.
struct SimRecord {
    std::string id;
    fs::path dir;
    json manifest;
    BsImage image;
};

std::vector<SimRecord> load_sim_dir(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("'" + root.string() + "' is not a directory");
    std::vector<fs::path> dirs;
    if (fs::exists(root / "manifest.json")) {
        dirs.push_back(root);
    } else {
        for (const auto& entry : fs::directory_iterator(root))
            if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw IoError("no simulated RoIs under '" + root.string() + "'");
    std::vector<SimRecord> out;
    for (const auto& d : dirs) {
        SimRecord r{d.filename().string(), d, io::read_json(d / "manifest.json"), io::read_bs_image(d / "image.pgm")};
        out.push_back(std::move(r));
    }
    // All RoIs of one dataset must share the simulation settings.
    for (const auto& r : out)
        if (r.manifest.at("simulation") != out.front().manifest.at("simulation"))
            throw ConfigError("RoI " + r.id + " was simulated with different settings than " + out.front().id);
    return out;
}

Manifold load_metric(const SimRecord& r, const std::string& metric) {
    if (metric == "coverage") return io::read_manifold_csv(r.dir / "coverage.csv", ManifoldKind::coverage);
    if (metric == "rate") return io::read_manifold_csv(r.dir / "rate.csv", ManifoldKind::rate_raw);
    throw ConfigError("metric must be coverage or rate, got '" + metric + "'");
}

std::string metric_of(const cnnae::Model& model) {
    return model.kind == ManifoldKind::coverage ? "coverage" : "rate";
}

std::vector<std::size_t> select_subset(const std::vector<SimRecord>& data, const cnnae::Model& model,
                                       const std::string& subset) {
    std::vector<std::size_t> idx;
    if (subset == "all") {
        idx.resize(data.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        return idx;
    }
    if (subset != "train" && subset != "test") throw ConfigError("subset must be train, test or all");
    const auto& ids = model.manifest.at("split").at(subset);
    std::map<std::string, std::size_t> by_id;
    for (std::size_t k = 0; k < data.size(); ++k) by_id[data[k].id] = k;
    for (const auto& id : ids) {
        auto it = by_id.find(id.get<std::string>());
        if (it == by_id.end()) throw ConfigError("RoI " + id.get<std::string>() + " of the model's split is missing");
        idx.push_back(it->second);
    }
    if (idx.empty()) throw ConfigError("the selected subset is empty");
    return idx;
}

// Ground truth in the model's output units (rate models see scaled targets).
Manifold model_target(const cnnae::Model& model, const SimRecord& r) {
    Manifold raw = load_metric(r, metric_of(model));
    if (model.kind == ManifoldKind::rate_scaled) return cnnae::scale_rate(raw, *model.rate_scale).manifold;
    return raw;
}

cnnae::Model load_checked_model(const fs::path& dir) {
    if (!fs::exists(dir / "model.json")) throw ConfigError("no trained model at '" + dir.string() + "'");
    return cnnae::load_model(dir);
}

void check_same_simulation(const cnnae::Model& model, const SimRecord& r) {
    if (model.manifest.contains("data") && model.manifest["data"].at("simulation") != r.manifest.at("simulation"))
        throw ConfigError("model was trained on data simulated with different settings than " + r.dir.string());
}

// ---------------------------------------------------------------- commands

struct IngestArgs {
    std::string cells, bounds, out, lat_col = "lat", lon_col = "lon";
    double side_km = 10.0;
};

void cmd_ingest(const IngestArgs& a) {
    std::ifstream in(a.cells, std::ios::binary);
    if (!in) throw IoError("cannot open '" + a.cells + "'");
    const auto parsed = geodata::parse_bs_records(in, {a.lat_col, a.lon_col});
    const auto bounds = geodata::parse_bounds(a.bounds);
    const auto grid = geodata::build_grid(bounds, a.side_km);
    const auto result = geodata::assign_and_filter(parsed.records, grid);
    json rois = json::array();
    for (const auto& roi : result.rois) {
        geodata::write_roi_dir(fs::path(a.out) / roi.spec.id(), roi);
        rois.push_back({{"id", roi.spec.id()}, {"occupied", roi.occupied()}, {"raw", roi.raw_count}});
    }
    json index = {{"command", "ingest"},
                  {"config", {{"cells", a.cells}, {"bounds", a.bounds}, {"side_km", a.side_km}}},
                  {"records", parsed.records.size()},
                  {"skipped_rows", parsed.skipped},
                  {"grid_cells", grid.size()},
                  {"kept", result.stats.kept},
                  {"dropped_low", result.stats.dropped_low},
                  {"dropped_high", result.stats.dropped_high},
                  {"unassigned_records", result.stats.unassigned_records},
                  {"rois", rois}};
    fs::create_directories(a.out);
    io::write_json(fs::path(a.out) / "index.json", index);
    std::cout << json{{"kept", result.stats.kept},
                      {"dropped_low", result.stats.dropped_low},
                      {"dropped_high", result.stats.dropped_high}}
                     .dump()
              << "\n";
}

struct SynthArgs {
    std::string kind = "ppp", out;
    std::size_t count = 10, parents = 10;
    double lambda = 1.0, side_km = 10.0, daughters = 10.0, spread_km = 0.5;
    std::uint64_t seed = 1;
};

void cmd_synth(const SynthArgs& a) {
    if (a.count == 0) throw ConfigError("count must be positive");
    json rois = json::array();
    for (std::size_t k = 0; k < a.count; ++k) {
        const std::uint64_t seed = rng::stream_key(a.seed, k);
        geodata::Roi roi;
        if (a.kind == "ppp")
            roi = synthgen::gen_ppp_roi(a.lambda, a.side_km, seed);
        else if (a.kind == "cluster")
            roi = synthgen::gen_cluster_roi(a.parents, a.daughters, a.spread_km, a.side_km, seed);
        else
            throw ConfigError("kind must be ppp or cluster, got '" + a.kind + "'");
        roi.spec.row = static_cast<int>(k);
        char name[32];
        std::snprintf(name, sizeof name, "synth_%05zu", k);
        roi.provenance["index"] = k;
        roi.provenance["base_seed"] = a.seed;
        geodata::write_roi_dir(fs::path(a.out) / name, roi);
        rois.push_back({{"id", name}, {"occupied", roi.occupied()}, {"resamples", roi.provenance["resamples"]}});
    }
    json config = {{"kind", a.kind}, {"count", a.count}, {"side_km", a.side_km}, {"seed", a.seed}};
    if (a.kind == "ppp") config["lambda_per_km2"] = a.lambda;
    else config.update({{"parents", a.parents}, {"daughters_per_parent", a.daughters}, {"spread_km", a.spread_km}});
    io::write_json(fs::path(a.out) / "index.json",
                   {{"command", "synth"}, {"synthetic", true}, {"config", config}, {"rois", rois}});
}

struct SimulateArgs {
    std::string roi_dir, out, fading = "rayleigh";
    double alpha = 4.0, gamma_db = 0.0, noise_ratio = 0.0;
    std::size_t mc = 1000;
    std::uint64_t seed = 1;
};

void cmd_simulate(const SimulateArgs& a) {
    simcore::ChannelParams ch;
    ch.alpha = a.alpha;
    ch.gamma_th = simcore::db_to_linear(a.gamma_db);
    ch.noise_ratio = a.noise_ratio;
    ch.validate();
    const simcore::FadingModel fading = simcore::FadingModel::parse(a.fading);
    simcore::McConfig mc{a.mc, a.seed};
    mc.validate();

    std::vector<fs::path> dirs;
    if (fs::exists(fs::path(a.roi_dir) / "roi.json")) dirs.push_back(a.roi_dir);
    else dirs = geodata::list_roi_dirs(a.roi_dir);
    if (dirs.empty()) throw IoError("no RoIs under '" + a.roi_dir + "'");

    json sim = {{"channel", simcore::to_json(ch)},
                {"gamma_db", a.gamma_db},
                {"fading", simcore::to_json(fading)},
                {"mc", simcore::to_json(mc)}};
    for (const auto& dir : dirs) {
        const geodata::Roi roi = geodata::read_roi_dir(dir);
        const auto pair = simcore::simulate_manifolds(roi.image, roi.spec.side_km, ch, fading, mc);
        const fs::path out = fs::path(a.out) / dir.filename();
        fs::create_directories(out);
        io::write_bs_image(out / "image.pgm", roi.image);
        io::write_manifold_csv(out / "coverage.csv", pair.coverage);
        io::write_manifold_csv(out / "rate.csv", pair.rate);
        char hash[17];
        std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(roi.image.hash()));
        io::write_json(out / "manifest.json",
                       {{"command", "simulate"},
                        {"roi",
                         {{"source", dir.string()},
                          {"id", dir.filename().string()},
                          {"side_km", roi.spec.side_km},
                          {"occupied", roi.occupied()},
                          {"synthetic", roi.synthetic},
                          {"image_hash", hash}}},
                        {"simulation", sim}});
    }
}

struct TrainArgs {
    std::string data, out, metric = "coverage";
    cnnae::TrainConfig cfg;
    std::optional<std::uint64_t> split_seed;
    std::size_t ff_hidden = 512, latent_dim = 128;
    std::optional<double> rate_scale;
};

void cmd_train(const TrainArgs& a) {
    a.cfg.validate();
    const auto data = load_sim_dir(a.data);
    const std::uint64_t split_seed = a.split_seed.value_or(a.cfg.seed);
    const cnnae::Split split = cnnae::split_dataset(data.size(), a.cfg.split_fraction, split_seed);

    std::vector<Manifold> targets;
    for (const auto& r : data) targets.push_back(load_metric(r, a.metric));
    const ManifoldKind kind = a.metric == "coverage" ? ManifoldKind::coverage : ManifoldKind::rate_scaled;
    std::optional<double> scale;
    std::size_t clipped_train = 0, clipped_test = 0;
    if (kind == ManifoldKind::rate_scaled) {
        std::vector<Manifold> train_raw;
        for (auto i : split.train) train_raw.push_back(targets[i]);
        scale = a.rate_scale.value_or(cnnae::max_value(train_raw));
        if (!(*scale > 0.0)) throw ConfigError("training rates are all zero; cannot scale");
        for (std::size_t k = 0; k < targets.size(); ++k) {
            auto s = cnnae::scale_rate(targets[k], *scale);
            const bool is_train = std::find(split.train.begin(), split.train.end(), k) != split.train.end();
            (is_train ? clipped_train : clipped_test) += s.clipped;
            targets[k] = s.manifold;
        }
    }

    std::vector<cnnae::Sample> train_set, test_set;
    json train_ids = json::array(), test_ids = json::array();
    for (auto i : split.train) {
        train_set.push_back(cnnae::make_sample(data[i].id, data[i].image, targets[i]));
        train_ids.push_back(data[i].id);
    }
    for (auto i : split.test) {
        test_set.push_back(cnnae::make_sample(data[i].id, data[i].image, targets[i]));
        test_ids.push_back(data[i].id);
    }

    cnnae::ArchConfig arch;
    arch.ff_hidden = a.ff_hidden;
    arch.latent_dim = a.latent_dim;
    cnnae::TrainResult result = cnnae::train(cnnae::make_model(arch, a.cfg.seed, kind), train_set, test_set, a.cfg);
    result.model.rate_scale = scale;
    auto& m = result.model.manifest;
    m["metric"] = a.metric;
    m["data"] = {{"root", a.data}, {"count", data.size()}, {"simulation", data.front().manifest.at("simulation")}};
    m["split"] = {{"seed", split_seed}, {"fraction", a.cfg.split_fraction}, {"train", train_ids}, {"test", test_ids}};
    if (scale) m["rate_scaling"] = {{"rate_scale", *scale}, {"clipped_train", clipped_train}, {"clipped_test", clipped_test}};
    cnnae::save_model(a.out, result.model, result.history);
    const auto& last = result.history.back();
    std::cout << json{{"epochs", a.cfg.epochs}, {"train_loss", last.train_loss}, {"test_loss", last.test_loss}}.dump()
              << "\n";
}

struct EvalArgs {
    std::string model, data, out, subset = "test";
};

void cmd_eval(const EvalArgs& a) {
    const cnnae::Model model = load_checked_model(a.model);
    const auto data = load_sim_dir(a.data);
    check_same_simulation(model, data.front());
    const auto idx = select_subset(data, model, a.subset);
    std::vector<cnnae::Sample> samples;
    for (auto i : idx) samples.push_back(cnnae::make_sample(data[i].id, data[i].image, model_target(model, data[i])));
    const cnnae::EvalResult r = cnnae::evaluate(model, samples);
    std::string csv = "roi,loss\n";
    for (std::size_t k = 0; k < samples.size(); ++k) csv += samples[k].id + "," + fmt(r.per_sample[k]) + "\n";
    io::write_text(a.out, csv);
    std::cout << json{{"subset", a.subset}, {"count", samples.size()}, {"mean_loss", r.mean_loss}}.dump() << "\n";
}

struct CompareArgs {
    std::vector<std::string> models, data;
    std::string out, summary, subset = "test", baseline_model;
};

void cmd_compare(const CompareArgs& a) {
    if (a.models.empty() || a.models.size() != a.data.size())
        throw ConfigError("compare needs one --data directory per --model");
    std::optional<cnnae::Model> other;
    if (!a.baseline_model.empty()) other = load_checked_model(a.baseline_model);

    std::string rows = "gamma_db,roi,loss_nn,loss_ppp,loss_bestfit,reduction_vs_ppp_pct,reduction_vs_bestfit_pct";
    std::string summary = "gamma_db,count,mean_loss_nn,mean_loss_ppp,mean_loss_bestfit,reduction_vs_ppp_pct,"
                          "reduction_vs_bestfit_pct";
    if (other) {
        rows += ",loss_model_baseline,reduction_vs_model_pct";
        summary += ",mean_loss_model_baseline,reduction_vs_model_pct";
    }
    rows += "\n";
    summary += "\n";

    for (std::size_t p = 0; p < a.models.size(); ++p) {
        const cnnae::Model model = load_checked_model(a.models[p]);
        const auto data = load_sim_dir(a.data[p]);
        check_same_simulation(model, data.front());
        if (other && metric_of(*other) != metric_of(model)) throw ConfigError("baseline model predicts another metric");
        const auto idx = select_subset(data, model, a.subset);
        const json& sim = data.front().manifest.at("simulation");
        const auto ch = simcore::channel_params_from_json(sim.at("channel"));
        const double gamma_db = sim.at("gamma_db").get<double>();
        const std::string metric = metric_of(model);

        double sum_nn = 0.0, sum_ppp = 0.0, sum_bf = 0.0, sum_other = 0.0;
        for (auto i : idx) {
            const SimRecord& r = data[i];
            const Manifold truth = load_metric(r, metric);
            const double side = r.manifest.at("roi").at("side_km").get<double>();
            const auto base = sgmodels::ppp_baseline(r.image, side, ch.alpha, ch.gamma_th, ch.noise_ratio);
            const Manifold& ppp = metric == "coverage" ? base.coverage : base.rate;
            const Manifold bf = sgmodels::constant_manifold(sgmodels::best_fit_value(truth), truth.kind());
            const double l_nn = cnnae::l1_loss(cnnae::predict(model, r.image), truth);
            const double l_ppp = cnnae::l1_loss(ppp, truth);
            const double l_bf = cnnae::l1_loss(bf, truth);
            sum_nn += l_nn;
            sum_ppp += l_ppp;
            sum_bf += l_bf;
            rows += fmt(gamma_db) + "," + r.id + "," + fmt(l_nn) + "," + fmt(l_ppp) + "," + fmt(l_bf) + "," +
                    fmt(cnnae::loss_reduction(l_ppp, l_nn)) + "," + fmt(cnnae::loss_reduction(l_bf, l_nn));
            if (other) {
                const double l_o = cnnae::l1_loss(cnnae::predict(*other, r.image), truth);
                sum_other += l_o;
                rows += "," + fmt(l_o) + "," + fmt(cnnae::loss_reduction(l_o, l_nn));
            }
            rows += "\n";
        }
        const double n = static_cast<double>(idx.size());
        summary += fmt(gamma_db) + "," + std::to_string(idx.size()) + "," + fmt(sum_nn / n) + "," + fmt(sum_ppp / n) +
                   "," + fmt(sum_bf / n) + "," + fmt(cnnae::loss_reduction(sum_ppp, sum_nn)) + "," +
                   fmt(cnnae::loss_reduction(sum_bf, sum_nn));
        if (other) summary += "," + fmt(sum_other / n) + "," + fmt(cnnae::loss_reduction(sum_other, sum_nn));
        summary += "\n";
    }
    io::write_text(a.out, rows);
    const fs::path summary_path =
        a.summary.empty() ? fs::path(a.out).replace_filename(fs::path(a.out).stem().string() + "_summary.csv")
                          : fs::path(a.summary);
    io::write_text(summary_path, summary);
    std::cout << summary;
}

struct PlanArgs {
    std::string roi, model, cov_th = "0.9", out, predictor = "model";
    double frac_th = 0.95;
    std::size_t max_bs = 1, mc = 200;
    std::uint64_t seed = 1, sim_seed = 1;
};

planner::Thresholds parse_thresholds(const std::string& text) {
    if (fs::exists(text)) return io::parse_grid_csv(io::read_text(text));
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size()) return planner::broadcast_threshold(v);
    } catch (const std::exception&) {
    }
    throw ConfigError("--cov-th must be a number or an existing 32x32 CSV file, got '" + text + "'");
}

void cmd_plan(const PlanArgs& a) {
    planner::PlanConfig cfg;
    cfg.max_bs = a.max_bs;
    cfg.frac_th = a.frac_th;
    cfg.seed = a.seed;
    cfg.cov_th = parse_thresholds(a.cov_th);
    cfg.validate();
    const geodata::Roi roi = geodata::read_roi_dir(a.roi);
    const cnnae::Model model = load_checked_model(a.model);
    if (model.kind != ManifoldKind::coverage) throw ConfigError("planning needs a coverage model");

    planner::Predictor predictor;
    json predictor_info;
    if (a.predictor == "model") {
        predictor = planner::model_predictor(model);
        predictor_info = {{"kind", "model"}, {"model", a.model}};
    } else if (a.predictor == "simulator") {
        if (!model.manifest.contains("data")) throw ConfigError("model has no recorded simulation settings");
        const json& sim = model.manifest["data"].at("simulation");
        const simcore::McConfig mc{a.mc, a.sim_seed};
        predictor = planner::simulator_predictor(roi.image, roi.spec.side_km,
                                                 simcore::channel_params_from_json(sim.at("channel")),
                                                 simcore::fading_from_json(sim.at("fading")), mc);
        predictor_info = {{"kind", "simulator"}, {"simulation", sim}, {"mc", simcore::to_json(mc)}};
    } else {
        throw ConfigError("predictor must be model or simulator");
    }

    const planner::Scenario s = planner::design_scenario(roi.image, predictor, cfg);
    json doc = planner::to_json(s.outcome, roi.spec.side_km);
    doc["config"] = planner::to_json(cfg);
    doc["roi"] = a.roi;
    doc["predictor"] = predictor_info;
    const fs::path out(a.out);
    const fs::path before = fs::path(out).replace_filename(out.stem().string() + "_before.csv");
    const fs::path after = fs::path(out).replace_filename(out.stem().string() + "_after.csv");
    doc["manifolds"] = {{"before", before.filename().string()}, {"after", after.filename().string()}};
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    io::write_json(out, doc);
    io::write_manifold_csv(before, s.before);
    io::write_manifold_csv(after, s.after);
    std::cout << json{{"result", doc["result"]}, {"achieved_frac", s.outcome.achieved_frac}}.dump() << "\n";
}

struct HeatmapArgs {
    std::string manifold, out;
    double scale_max = 1.0;
};

void cmd_heatmap(const HeatmapArgs& a) {
    if (!(a.scale_max > 0.0)) throw ConfigError("--scale-max must be positive");
    const auto values = io::parse_grid_csv(io::read_text(a.manifold));
    io::GrayImage img{kRoeGrid, kRoeGrid, 255, std::vector<std::uint8_t>(kRoePixels)};
    double lo = values[0], hi = values[0];
    for (std::size_t k = 0; k < kRoePixels; ++k) {
        const double v = std::clamp(values[k] / a.scale_max, 0.0, 1.0);
        img.pixels[k] = static_cast<std::uint8_t>(std::floor(255.0 * v + 0.5));
        lo = std::min(lo, values[k]);
        hi = std::max(hi, values[k]);
    }
    io::write_pgm(a.out, img);
    io::write_json(fs::path(a.out).replace_extension(".json"),
                   {{"source", a.manifold},
                    {"scale_max", a.scale_max},
                    {"rule", "gray = floor(255 * clamp(v / scale_max, 0, 1) + 0.5)"},
                    {"min", lo},
                    {"max", hi},
                    {"rows", "RoE row i is image row i"}});
}

void fail(const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    if (const char* env = std::getenv("COVMAP_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }

    CLI::App app{"Coverage and rate manifolds of cellular networks: simulation, learning and BS planning"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "OpenMP threads (overrides COVMAP_THREADS)")->check(CLI::PositiveNumber);

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Grid a tower file into filtered RoI directories");
    c_ingest->add_option("--cells", ingest.cells, "CSV tower file with a header row")->required();
    c_ingest->add_option("--bounds", ingest.bounds, "S,W,N,E in degrees")->required();
    c_ingest->add_option("--side-km", ingest.side_km, "RoI side length")->required();
    c_ingest->add_option("--out", ingest.out, "Output directory")->required();
    c_ingest->add_option("--lat-col", ingest.lat_col, "Latitude column name");
    c_ingest->add_option("--lon-col", ingest.lon_col, "Longitude column name");

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Generate synthetic RoIs");
    c_synth->add_option("--kind", synth.kind, "ppp or cluster");
    c_synth->add_option("--count", synth.count, "Number of RoIs");
    c_synth->add_option("--lambda", synth.lambda, "PPP density per km^2");
    c_synth->add_option("--side-km", synth.side_km, "RoI side length");
    c_synth->add_option("--parents", synth.parents, "Cluster parents");
    c_synth->add_option("--daughters", synth.daughters, "Mean daughters per parent");
    c_synth->add_option("--spread-km", synth.spread_km, "Daughter displacement sd");
    c_synth->add_option("--seed", synth.seed, "Base seed");
    c_synth->add_option("--out", synth.out, "Output directory")->required();

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Monte Carlo coverage and rate manifolds");
    c_sim->add_option("--roi-dir", sim.roi_dir, "RoI directory or a directory of RoIs")->required();
    c_sim->add_option("--alpha", sim.alpha, "Path-loss exponent");
    c_sim->add_option("--fading", sim.fading, "rayleigh or nakagami:M");
    c_sim->add_option("--gamma-db", sim.gamma_db, "SINR threshold in dB");
    c_sim->add_option("--noise-ratio", sim.noise_ratio, "sigma^2 / P");
    c_sim->add_option("--mc", sim.mc, "Monte Carlo draws per location");
    c_sim->add_option("--seed", sim.seed, "Seed");
    c_sim->add_option("--out", sim.out, "Output directory")->required();

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train the CNN auto-encoder on simulated RoIs");
    c_train->add_option("--data", tr.data, "Output directory of simulate")->required();
    c_train->add_option("--metric", tr.metric, "coverage or rate");
    c_train->add_option("--epochs", tr.cfg.epochs, "Epochs");
    c_train->add_option("--lr", tr.cfg.lr, "SGD learning rate");
    c_train->add_option("--batch-size", tr.cfg.batch_size, "Minibatch size");
    c_train->add_option("--seed", tr.cfg.seed, "Initialization and shuffle seed");
    c_train->add_option("--split-seed", tr.split_seed, "Train/test split seed (default: --seed)");
    c_train->add_option("--split-fraction", tr.cfg.split_fraction, "Training fraction");
    c_train->add_option("--ff-hidden", tr.ff_hidden, "FF hidden width");
    c_train->add_option("--latent-dim", tr.latent_dim, "Latent width");
    c_train->add_option("--rate-scale", tr.rate_scale, "Rate scale (default: max training rate)");
    c_train->add_option("--out", tr.out, "Model directory")->required();

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Per-RoI sum-L1 losses of a model");
    c_eval->add_option("--model", ev.model, "Model directory")->required();
    c_eval->add_option("--data", ev.data, "Output directory of simulate")->required();
    c_eval->add_option("--subset", ev.subset, "test, train or all");
    c_eval->add_option("--out", ev.out, "CSV of per-RoI losses")->required();

    CompareArgs cmp;
    auto* c_cmp = app.add_subcommand("compare", "Loss reduction against the PPP and best-fit baselines");
    c_cmp->add_option("--model", cmp.models, "Model directory (repeat for a gamma sweep)")->required();
    c_cmp->add_option("--data", cmp.data, "Simulated data matching each --model")->required();
    c_cmp->add_option("--subset", cmp.subset, "test, train or all");
    c_cmp->add_option("--baseline-model", cmp.baseline_model, "Another model to compare against");
    c_cmp->add_option("--out", cmp.out, "Per-RoI report CSV")->required();
    c_cmp->add_option("--summary", cmp.summary, "Summary CSV (default: <out>_summary.csv)");

    PlanArgs pl;
    auto* c_plan = app.add_subcommand("plan", "Place new BSs to meet coverage constraints");
    c_plan->add_option("--roi", pl.roi, "RoI directory")->required();
    c_plan->add_option("--model", pl.model, "Coverage model directory")->required();
    c_plan->add_option("--cov-th", pl.cov_th, "Coverage threshold or 32x32 CSV");
    c_plan->add_option("--frac-th", pl.frac_th, "Required fraction of RoE locations");
    c_plan->add_option("--max-bs", pl.max_bs, "Maximum new BSs");
    c_plan->add_option("--seed", pl.seed, "Seed for initial locations");
    c_plan->add_option("--predictor", pl.predictor, "model or simulator");
    c_plan->add_option("--mc", pl.mc, "Draws for the simulator predictor");
    c_plan->add_option("--sim-seed", pl.sim_seed, "Seed for the simulator predictor");
    c_plan->add_option("--out", pl.out, "Plan JSON")->required();

    HeatmapArgs hm;
    auto* c_heat = app.add_subcommand("heatmap", "Render a manifold CSV as an 8-bit PGM");
    c_heat->add_option("--manifold", hm.manifold, "Manifold CSV")->required();
    c_heat->add_option("--scale-max", hm.scale_max, "Value mapped to 255");
    c_heat->add_option("--out", hm.out, "Output PGM")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        fail("usage", e.what());
        return kExitError;
    }
    if (threads > 0) omp_set_num_threads(threads);

    try {
        if (*c_ingest) cmd_ingest(ingest);
        else if (*c_synth) cmd_synth(synth);
        else if (*c_sim) cmd_simulate(sim);
        else if (*c_train) cmd_train(tr);
        else if (*c_eval) cmd_eval(ev);
        else if (*c_cmp) cmd_compare(cmp);
        else if (*c_plan) cmd_plan(pl);
        else if (*c_heat) cmd_heatmap(hm);
    } catch (const Error& e) {
        fail(e.kind(), e.what());
        return kExitError;
    } catch (const json::exception& e) {
        fail("config", e.what());
        return kExitError;
    } catch (const fs::filesystem_error& e) {
        fail("io", e.what());
        return kExitError;
    } catch (const std::exception& e) {
        fail("internal", e.what());
        return 1;
    }
    return 0;
}
