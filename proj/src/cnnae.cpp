#include "covmap/cnnae.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>
#include <utility>

#include "covmap/errors.hpp"
#include "covmap/io.hpp"
#include "covmap/rng.hpp"

namespace covmap::cnnae {

using nn::LayerSpec;
using nn::Tensor;

namespace {

constexpr std::size_t kGroups = 4;
constexpr std::uint64_t kShuffleStream = 0x5eed0000;
constexpr std::uint64_t kSplitStream = 0x5911;

void expect_square(const Tensor& t, std::size_t rank_prefix, const char* what) {
    const bool ok = t.rank() == rank_prefix + 2 && t.dim(rank_prefix) == t.dim(rank_prefix + 1) &&
                    (rank_prefix == 0 || t.dim(0) == 1);
    if (!ok) throw ShapeError(std::string(what) + ": unexpected shape " + nn::shape_string(t.shape()));
}

} // namespace

void ArchConfig::validate() const {
    if (grid_n < 8 || grid_n % 8 != 0) throw ConfigError("grid_n must be a positive multiple of 8");
    if (ff_hidden == 0 || latent_dim == 0) throw ConfigError("FF widths must be positive");
}

std::size_t ArchConfig::flat_dim() const { return kConvChannels[3] * bottleneck_side() * bottleneck_side(); }

std::vector<LayerSpec> ArchConfig::layer_specs() const {
    validate();
    const std::size_t s = bottleneck_side();
    return {
        LayerSpec::conv(kConvChannels[0], kConvChannels[1]),
        LayerSpec::relu(),
        LayerSpec::conv(kConvChannels[1], kConvChannels[2]),
        LayerSpec::relu(),
        LayerSpec::conv(kConvChannels[2], kConvChannels[3]),
        LayerSpec::relu(),
        LayerSpec::affine(flat_dim(), ff_hidden),
        LayerSpec::relu(),
        LayerSpec::affine(ff_hidden, latent_dim),
        LayerSpec::affine(latent_dim, ff_hidden),
        LayerSpec::relu(),
        LayerSpec::affine(ff_hidden, flat_dim(), {kConvChannels[3], s, s}),
        LayerSpec::relu(),
        LayerSpec::conv_transpose(kConvChannels[3], kConvChannels[2]),
        LayerSpec::relu(),
        LayerSpec::conv_transpose(kConvChannels[2], kConvChannels[1]),
        LayerSpec::relu(),
        LayerSpec::conv_transpose(kConvChannels[1], kConvChannels[0]),
        LayerSpec::sigmoid(),
    };
}

nlohmann::json to_json(const ArchConfig& arch) {
    return {{"grid_n", arch.grid_n},
            {"conv_channels", {kConvChannels[0], kConvChannels[1], kConvChannels[2], kConvChannels[3]}},
            {"kernel", nn::kKernel},
            {"stride", nn::kStride},
            {"padding", nn::kPadding},
            {"output_padding", nn::kOutputPadding},
            {"flat_dim", arch.flat_dim()},
            {"ff_hidden", arch.ff_hidden},
            {"latent_dim", arch.latent_dim}};
}

ArchConfig arch_from_json(const nlohmann::json& doc) {
    try {
        ArchConfig arch;
        arch.grid_n = doc.at("grid_n").get<int>();
        arch.ff_hidden = doc.at("ff_hidden").get<std::size_t>();
        arch.latent_dim = doc.at("latent_dim").get<std::size_t>();
        arch.validate();
        return arch;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid architecture: ") + e.what());
    }
}

Model make_model(const ArchConfig& arch, std::uint64_t seed, ManifoldKind kind) {
    if (kind == ManifoldKind::rate_raw) throw ConfigError("models predict coverage or rate_scaled manifolds");
    Model model{arch, nn::Network(arch.layer_specs()), kind, std::nullopt, nlohmann::json::object()};
    model.net.init_xavier(seed);
    model.net.round_to_float();
    model.manifest["init"] = {{"scheme", "xavier-uniform"}, {"seed", seed}, {"bias", 0.0}};
    return model;
}

Tensor image_tensor(const BsImage& image) {
    Tensor t({1, kRoiGrid, kRoiGrid});
    for (int id = 0; id < kRoiPixels; ++id) t[static_cast<std::size_t>(id)] = image.at_id(id) ? 1.0 : 0.0;
    return t;
}

Tensor apply_mask(const Tensor& decoded) {
    expect_square(decoded, 1, "mask");
    const std::size_t n = decoded.dim(1), m = n / 2, off = n / 4;
    Tensor out({m, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = decoded[(i + off) * n + j + off];
    return out;
}

Tensor mask_backward(const Tensor& grad, std::size_t n) {
    expect_square(grad, 0, "mask gradient");
    if (grad.dim(0) * 2 != n) throw ShapeError("mask gradient does not match the decoder side");
    const std::size_t m = n / 2, off = n / 4;
    Tensor out({1, n, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) out[(i + off) * n + j + off] = grad[i * m + j];
    return out;
}

Tensor decode(const Model& model, const Tensor& input) {
    const auto n = static_cast<std::size_t>(model.arch.grid_n);
    if (input.shape() != std::vector<std::size_t>{1, n, n})
        throw ShapeError("model expects a [1, " + std::to_string(n) + ", " + std::to_string(n) + "] input, got " +
                         nn::shape_string(input.shape()));
    return model.net.forward(input);
}

Tensor forward(const Model& model, const Tensor& input) { return apply_mask(decode(model, input)); }

Manifold forward(const Model& model, const BsImage& image) {
    if (model.arch.grid_n != kRoiGrid) throw ShapeError("BS images need a 64x64 model");
    return tensor_manifold(forward(model, image_tensor(image)), model.kind);
}

Manifold predict(const Model& model, const BsImage& image) {
    Manifold out = forward(model, image);
    if (model.kind == ManifoldKind::rate_scaled) {
        if (!model.rate_scale) throw ConfigError("rate model has no rate_scale");
        out = unscale_rate(out, *model.rate_scale);
    }
    return out;
}

Tensor manifold_tensor(const Manifold& manifold) {
    return Tensor({kRoeGrid, kRoeGrid}, std::vector<double>(manifold.values().begin(), manifold.values().end()));
}

Manifold tensor_manifold(const Tensor& tensor, ManifoldKind kind) {
    if (tensor.size() != kRoePixels) throw ShapeError("manifold tensors have 1024 values");
    Manifold m(kind);
    std::copy(tensor.data(), tensor.data() + kRoePixels, m.values().begin());
    return m;
}

double l1_loss(const Manifold& x, const Manifold& y) {
    if (x.kind() != y.kind())
        throw DomainError("l1_loss: manifold kinds differ (" + to_string(x.kind()) + " vs " + to_string(y.kind()) + ")");
    double s = 0.0;
    for (std::size_t k = 0; k < kRoePixels; ++k) s += std::abs(x[k] - y[k]);
    return s;
}

double l1_loss(const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape()) throw ShapeError("l1_loss: shapes differ");
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += std::abs(x[k] - y[k]);
    return s;
}

Tensor l1_subgradient(const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape()) throw ShapeError("l1_subgradient: shapes differ");
    Tensor g(x.shape());
    for (std::size_t k = 0; k < x.size(); ++k) g[k] = x[k] > y[k] ? 1.0 : (x[k] < y[k] ? -1.0 : 0.0);
    return g;
}

double loss_reduction(double baseline_loss, double nn_loss) {
    if (!(baseline_loss > 0.0)) throw DomainError("loss_reduction needs a positive baseline loss");
    return (baseline_loss - nn_loss) / baseline_loss * 100.0;
}

ScaledManifold scale_rate(const Manifold& raw, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("rate_scale must be positive and finite");
    if (raw.kind() != ManifoldKind::rate_raw) throw DomainError("scale_rate expects a rate_raw manifold");
    ScaledManifold out;
    for (std::size_t k = 0; k < kRoePixels; ++k) {
        const double v = raw[k] / scale;
        if (v > 1.0) ++out.clipped;
        out.manifold[k] = std::min(v, 1.0);
    }
    return out;
}

Manifold unscale_rate(const Manifold& scaled, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("rate_scale must be positive and finite");
    Manifold out(ManifoldKind::rate_raw);
    for (std::size_t k = 0; k < kRoePixels; ++k) out[k] = scaled[k] * scale;
    return out;
}

double max_value(std::span<const Manifold> manifolds) {
    double best = 0.0;
    for (const Manifold& m : manifolds)
        for (double v : m.values()) best = std::max(best, v);
    return best;
}

Split split_dataset(std::size_t n, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must be in (0, 1)");
    if (n < 2) throw ConfigError("splitting needs at least 2 samples, got " + std::to_string(n));
    const auto n_train = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    if (n_train >= n)
        throw ConfigError("split of " + std::to_string(n) + " samples leaves an empty test set; use more samples");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng::Stream stream(seed, kSplitStream, 0);
    rng::shuffle(std::span<std::size_t>(order), stream);
    return {{order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train)},
            {order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end()}};
}

Sample make_sample(std::string id, const BsImage& image, const Manifold& target) {
    return {std::move(id), image_tensor(image), manifold_tensor(target)};
}

std::string dataset_fingerprint(std::span<const Sample> samples) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint64_t word) {
        for (int b = 0; b < 8; ++b) {
            h ^= (word >> (8 * b)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    for (const Sample& s : samples) {
        for (double v : s.input.values()) feed(std::bit_cast<std::uint64_t>(v));
        for (double v : s.target.values()) feed(std::bit_cast<std::uint64_t>(v));
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ConfigError("split_fraction must be in (0, 1)");
}

nlohmann::json to_json(const TrainConfig& cfg) {
    return {{"lr", cfg.lr},
            {"batch_size", cfg.batch_size},
            {"epochs", cfg.epochs},
            {"seed", cfg.seed},
            {"split_fraction", cfg.split_fraction},
            {"optimizer", "sgd"},
            {"loss", "batch-mean of per-sample sum-L1"}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
    TrainConfig cfg;
    cfg.lr = doc.value("lr", cfg.lr);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.epochs = doc.value("epochs", cfg.epochs);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.split_fraction = doc.value("split_fraction", cfg.split_fraction);
    cfg.validate();
    return cfg;
}

EvalResult evaluate(const Model& model, std::span<const Sample> samples) {
    if (samples.empty()) throw ConfigError("evaluation set is empty");
    EvalResult r;
    r.per_sample.resize(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k)
        r.per_sample[k] = l1_loss(forward(model, samples[k].input), samples[k].target);
    r.mean_loss = std::accumulate(r.per_sample.begin(), r.per_sample.end(), 0.0) / static_cast<double>(samples.size());
    return r;
}

TrainResult train(Model model, std::span<const Sample> train_set, std::span<const Sample> test_set,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.empty()) throw ConfigError("training set is empty");
    const auto n = static_cast<std::size_t>(model.arch.grid_n);
    for (auto set : {train_set, test_set})
        for (const Sample& s : set)
            if (s.input.shape() != std::vector<std::size_t>{1, n, n} ||
                s.target.shape() != std::vector<std::size_t>{n / 2, n / 2})
                throw ShapeError("sample " + s.id + " does not match the model grid");

    TrainResult result;
    auto record = [&](std::size_t epoch) {
        EpochRecord rec{epoch, evaluate(model, train_set).mean_loss, std::numeric_limits<double>::quiet_NaN()};
        if (!test_set.empty()) rec.test_loss = evaluate(model, test_set).mean_loss;
        result.history.push_back(rec);
    };
    record(0);

    std::vector<std::size_t> order(train_set.size());
    std::vector<nn::Gradients> groups(kGroups, model.net.zero_gradients());
    std::vector<double> group_loss(kGroups);
    std::vector<std::exception_ptr> group_error(kGroups);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng::Stream stream(cfg.seed, kShuffleStream + epoch, 0);
        rng::shuffle(std::span<std::size_t>(order), stream);

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t batch = std::min(cfg.batch_size, order.size() - start);
            const double inv = 1.0 / static_cast<double>(batch);
#pragma omp parallel for schedule(static, 1)
            for (std::size_t g = 0; g < kGroups; ++g) {
                try {
                    groups[g].zero();
                    group_loss[g] = 0.0;
                    nn::Tape tape;
                    for (std::size_t k = g; k < batch; k += kGroups) {
                        const Sample& s = train_set[order[start + k]];
                        const Tensor out = apply_mask(model.net.forward(s.input, tape));
                        group_loss[g] += l1_loss(out, s.target);
                        Tensor dy = l1_subgradient(out, s.target);
                        for (double& v : dy.values()) v *= inv;
                        model.net.backward(tape, mask_backward(dy, n), groups[g]);
                    }
                } catch (...) {
                    group_error[g] = std::current_exception();
                }
            }
            for (auto& err : group_error)
                if (err) std::rethrow_exception(std::exchange(err, nullptr));
            double loss = 0.0;
            for (std::size_t g = 1; g < kGroups; ++g) groups[0].add(groups[g]);
            for (double l : group_loss) loss += l;
            loss *= inv;
            if (!std::isfinite(loss) || !groups[0].all_finite())
                throw NumericalError("non-finite loss or gradient at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(start / cfg.batch_size) + " (batch loss " +
                                     io::format_double(loss) + ", lr " + io::format_double(cfg.lr) +
                                     "); lower the learning rate");
            nn::sgd_step(model.net, groups[0], cfg.lr);
        }
        if (epoch == cfg.epochs) model.net.round_to_float();
        record(epoch);
        if (!std::isfinite(result.history.back().train_loss))
            throw NumericalError("non-finite training loss after epoch " + std::to_string(epoch));
    }

    model.manifest["train"] = to_json(cfg);
    model.manifest["train"]["samples"] = train_set.size();
    model.manifest["train"]["held_out"] = test_set.size();
    model.manifest["train"]["dataset_fingerprint"] = dataset_fingerprint(train_set);
    model.manifest["weights_precision"] = "float32";
    result.model = std::move(model);
    return result;
}

std::string history_csv(std::span<const EpochRecord> history) {
    std::string out = "epoch,train_loss,test_loss\n";
    for (const EpochRecord& r : history)
        out += std::to_string(r.epoch) + "," + io::format_double(r.train_loss) + "," +
               (std::isnan(r.test_loss) ? std::string() : io::format_double(r.test_loss)) + "\n";
    return out;
}

void save_model(const std::filesystem::path& dir, const Model& model, std::span<const EpochRecord> history) {
    std::filesystem::create_directories(dir);
    Model rounded = model;
    rounded.net.round_to_float();
    nn::write_weights(dir / "weights.bin", rounded.net);
    nlohmann::json doc = {{"format", "covmap-cnnae"},
                          {"arch", to_json(model.arch)},
                          {"kind", to_string(model.kind)},
                          {"rate_scale", model.rate_scale ? nlohmann::json(*model.rate_scale) : nlohmann::json()},
                          {"manifest", model.manifest},
                          {"layout", nn::layout_json(rounded.net)}};
    io::write_json(dir / "model.json", doc);
    if (!history.empty()) io::write_text(dir / "history.csv", history_csv(history));
}

Model load_model(const std::filesystem::path& dir) {
    const nlohmann::json doc = io::read_json(dir / "model.json");
    try {
        if (doc.at("format") != "covmap-cnnae") throw ConfigError(dir.string() + " is not a model directory");
        Model model;
        model.arch = arch_from_json(doc.at("arch"));
        model.kind = parse_manifold_kind(doc.at("kind").get<std::string>());
        if (!doc.at("rate_scale").is_null()) model.rate_scale = doc.at("rate_scale").get<double>();
        model.manifest = doc.at("manifest");
        model.net = nn::read_weights(dir / "weights.bin", doc.at("layout"));
        const nn::Network expected(model.arch.layer_specs());
        if (model.net.layers().size() != expected.layers().size())
            throw ConfigError("weight layout does not match the architecture");
        for (std::size_t l = 0; l < expected.layers().size(); ++l)
            if (!(model.net.layers()[l].spec == expected.layers()[l].spec))
                throw ConfigError("weight layout does not match the architecture at layer " + std::to_string(l));
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid model.json: " + std::string(e.what()));
    }
}

} // namespace covmap::cnnae
