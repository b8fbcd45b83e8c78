#pragma once

// Convolutional auto-encoder mapping a BS image to a performance manifold:
// three stride-2 convolutions, a two-layer FF bottleneck on each side, three
// transposed convolutions, a sigmoid, and a concentric half-size mask.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "covmap/grid.hpp"
#include "covmap/neuralnet.hpp"

namespace covmap::cnnae {

inline constexpr std::size_t kConvChannels[4] = {1, 8, 16, 32};

struct ArchConfig {
    int grid_n = kRoiGrid;       ///< input side; divisible by 8
    std::size_t ff_hidden = 512;
    std::size_t latent_dim = 128;

    void validate() const;
    /// Side of the deepest feature map, grid_n / 8.
    std::size_t bottleneck_side() const { return static_cast<std::size_t>(grid_n) / 8; }
    /// Flattened encoder output, 32 * (grid_n / 8)^2 (2048 for 64x64 inputs).
    std::size_t flat_dim() const;
    /// Side of the masked output, grid_n / 2.
    std::size_t output_side() const { return static_cast<std::size_t>(grid_n) / 2; }

    std::vector<nn::LayerSpec> layer_specs() const;

    friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

nlohmann::json to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const nlohmann::json& doc);

struct Model {
    ArchConfig arch;
    nn::Network net;
    ManifoldKind kind = ManifoldKind::coverage; ///< coverage or rate_scaled
    std::optional<double> rate_scale;           ///< set for rate models
    nlohmann::json manifest = nlohmann::json::object();
};

/// Fresh model with Xavier-initialized weights.
Model make_model(const ArchConfig& arch, std::uint64_t seed, ManifoldKind kind = ManifoldKind::coverage);

/// 0/1 occupancy as a [1, 64, 64] tensor; row i is pixel row i.
nn::Tensor image_tensor(const BsImage& image);

/// Central crop: rows/cols n/4 .. 3n/4 - 1 of a [1, n, n] tensor, as [n/2, n/2].
nn::Tensor apply_mask(const nn::Tensor& decoded);
/// Scatters a [n/2, n/2] gradient back into a zero [1, n, n] tensor.
nn::Tensor mask_backward(const nn::Tensor& grad, std::size_t n);

/// Un-masked decoder output for a [1, n, n] input.
nn::Tensor decode(const Model& model, const nn::Tensor& input);
/// Masked output for a [1, n, n] input, shape [n/2, n/2].
nn::Tensor forward(const Model& model, const nn::Tensor& input);
/// Masked output as a manifold of the model's kind (values in (0, 1)).
Manifold forward(const Model& model, const BsImage& image);
/// forward() with rate models unscaled back to bits/s/Hz.
Manifold predict(const Model& model, const BsImage& image);

nn::Tensor manifold_tensor(const Manifold& manifold);
Manifold tensor_manifold(const nn::Tensor& tensor, ManifoldKind kind);

/// Sum of absolute differences; throws DomainError on a kind mismatch.
double l1_loss(const Manifold& x, const Manifold& y);
double l1_loss(const nn::Tensor& x, const nn::Tensor& y);
/// Subgradient of l1_loss with respect to x: sign(x - y), 0 at ties.
nn::Tensor l1_subgradient(const nn::Tensor& x, const nn::Tensor& y);

/// (baseline - nn) / baseline * 100. Throws DomainError for baseline <= 0.
double loss_reduction(double baseline_loss, double nn_loss);

struct ScaledManifold {
    Manifold manifold{ManifoldKind::rate_scaled};
    std::size_t clipped = 0;
};

/// Divides rate_raw values by `scale` and clips to 1.
ScaledManifold scale_rate(const Manifold& raw, double scale);
Manifold unscale_rate(const Manifold& scaled, double scale);
/// Largest value over the manifolds; the default rate_scale.
double max_value(std::span<const Manifold> manifolds);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded shuffle of 0..n-1; the first ceil(fraction * n) indices train.
/// Throws ConfigError when either side would be empty.
Split split_dataset(std::size_t n, double fraction, std::uint64_t seed);

struct Sample {
    std::string id;
    nn::Tensor input;  ///< [1, n, n]
    nn::Tensor target; ///< [n/2, n/2]
};

Sample make_sample(std::string id, const BsImage& image, const Manifold& target);

/// FNV-1a over inputs and target bit patterns, as 16 hex digits.
std::string dataset_fingerprint(std::span<const Sample> samples);

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 60;
    std::uint64_t seed = 1;
    double split_fraction = 0.7;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& doc);

struct EpochRecord {
    std::size_t epoch = 0; ///< 0 is the untrained model
    double train_loss = 0.0;
    double test_loss = 0.0; ///< NaN without a held-out set
};

struct TrainResult {
    Model model;
    std::vector<EpochRecord> history;
};

/// Minibatch SGD on the batch mean of per-sample sum-L1. Each epoch shuffles
/// the training order with stream (seed, epoch); batch items are spread over
/// four fixed accumulation groups that are reduced in group order, so results
/// do not depend on the thread count. Losses in the history are mean per-sample
/// sum-L1 after each epoch. Throws NumericalError on a non-finite loss.
TrainResult train(Model model, std::span<const Sample> train_set, std::span<const Sample> test_set,
                  const TrainConfig& cfg);

struct EvalResult {
    double mean_loss = 0.0;
    std::vector<double> per_sample;
};

/// Throws ConfigError on an empty set.
EvalResult evaluate(const Model& model, std::span<const Sample> samples);

std::string history_csv(std::span<const EpochRecord> history);

/// Writes weights.bin, model.json and (when given) history.csv into `dir`.
void save_model(const std::filesystem::path& dir, const Model& model, std::span<const EpochRecord> history = {});
Model load_model(const std::filesystem::path& dir);

} // namespace covmap::cnnae
