#pragma once

// Small dense/convolutional network layer with hand-written backward passes.
// All arithmetic is double precision; serialized weights are float32.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace covmap::nn {

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    /// Throws ShapeError when data.size() differs from the shape's element count.
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    double& operator[](std::size_t k) { return data_[k]; }
    double operator[](std::size_t k) const { return data_[k]; }

    /// Same elements, new shape; throws ShapeError on a count mismatch.
    void reshape(std::vector<std::size_t> shape);
    void fill(double value);
    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t element_count(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

inline constexpr std::size_t kKernel = 3;
inline constexpr std::size_t kStride = 2;
inline constexpr std::size_t kPadding = 1;
inline constexpr std::size_t kOutputPadding = 1;

/// Spatial extent after a stride-2 convolution: floor((n + 2 - 3) / 2) + 1.
constexpr std::size_t conv_output_extent(std::size_t n) { return (n + 2 * kPadding - kKernel) / kStride + 1; }
/// Spatial extent after a transposed convolution with output padding 1: 2n.
constexpr std::size_t conv_transpose_output_extent(std::size_t n) {
    return (n - 1) * kStride - 2 * kPadding + kKernel + kOutputPadding;
}

struct LayerGrads {
    Tensor dx;
    Tensor dw;
    Tensor db;
};

// Kernels. Convolution weights are [C_out, C_in, 3, 3]; transposed-convolution
// weights are [C_in, C_out, 3, 3], so conv_transpose2d with the weights of a
// conv2d is its adjoint. Affine weights are [out, in] and the input is
// flattened. The forward kernels parallelize over output channels/rows.

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b);
LayerGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy);
Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& w, const Tensor& b);
LayerGrads conv_transpose2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy);
Tensor affine_forward(const Tensor& x, const Tensor& w, const Tensor& b);
LayerGrads affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy);
Tensor relu_forward(const Tensor& x);
/// Passes dy where the pre-activation x is > 0.
Tensor relu_backward(const Tensor& x, const Tensor& dy);
/// Logistic function clamped to [DBL_MIN, 1 - 2^-53] so outputs stay inside (0, 1).
Tensor sigmoid_forward(const Tensor& x);
/// dy * y * (1 - y) from the forward output y.
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

/// Straightforward single-threaded loops with the same summation order as the
/// kernels above; used to test them.
namespace reference {
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b);
LayerGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy);
Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& w, const Tensor& b);
LayerGrads conv_transpose2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy);
Tensor affine_forward(const Tensor& x, const Tensor& w, const Tensor& b);
LayerGrads affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy);
} // namespace reference

enum class LayerKind { conv, conv_transpose, affine, relu, sigmoid };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& text);

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t in = 0;  ///< input channels or input dimension
    std::size_t out = 0; ///< output channels or output dimension
    /// Affine only: shape of the output tensor (default [out]).
    std::vector<std::size_t> out_shape;

    static LayerSpec conv(std::size_t in_channels, std::size_t out_channels);
    static LayerSpec conv_transpose(std::size_t in_channels, std::size_t out_channels);
    static LayerSpec affine(std::size_t in_dim, std::size_t out_dim, std::vector<std::size_t> out_shape = {});
    static LayerSpec relu();
    static LayerSpec sigmoid();

    bool has_params() const;
    std::vector<std::size_t> weight_shape() const;
    std::vector<std::size_t> bias_shape() const;
    std::size_t fan_in() const;
    std::size_t fan_out() const;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Layer {
    LayerSpec spec;
    Tensor weight;
    Tensor bias;
};

/// values[0] is the network input, values[k + 1] the output of layer k.
struct Tape {
    std::vector<Tensor> values;
};

/// One weight and one bias gradient per layer; empty tensors for layers without parameters.
struct Gradients {
    std::vector<Tensor> weight;
    std::vector<Tensor> bias;

    void add(const Gradients& other);
    void scale(double factor);
    void zero();
    bool all_finite() const;
};

class Network {
public:
    Network() = default;
    /// Allocates zero-valued parameters for every layer.
    explicit Network(std::vector<LayerSpec> specs);

    /// Xavier-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    /// Layer k draws from stream (seed, k).
    void init_xavier(std::uint64_t seed);

    Tensor forward(const Tensor& x) const;
    Tensor forward(const Tensor& x, Tape& tape) const;
    /// Reverse pass over a recorded tape. Parameter gradients are added into
    /// `grads`; the input gradient is returned.
    Tensor backward(const Tape& tape, const Tensor& dy, Gradients& grads) const;

    Gradients zero_gradients() const;

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }
    std::size_t parameter_count() const;
    /// Rounds every parameter to the nearest float32 value.
    void round_to_float();

    friend bool operator==(const Network&, const Network&);

private:
    std::vector<Layer> layers_;
};

bool operator==(const Layer& a, const Layer& b);

/// p <- p - lr * g.
void sgd_step(Tensor& param, const Tensor& grad, double lr);
void sgd_step(Network& net, const Gradients& grads, double lr);

/// Scalar loss and its gradient with respect to the network output.
using LossFn = std::function<double(const Tensor& output, Tensor* grad)>;
/// Alternative backward used in place of Network::backward (for injecting faults in tests).
using BackwardFn = std::function<Tensor(const Network&, const Tape&, const Tensor&, Gradients&)>;

/// L = sum_k c_k y_k with fixed pseudo-random c_k in [-1, 1].
LossFn linear_probe(const std::vector<std::size_t>& output_shape, std::uint64_t seed);

struct GradientCheckOptions {
    double h = 1e-5;
    double tolerance = 1e-4;
    /// Relative error is |a - n| / max(|a|, |n|, floor).
    double floor = 1e-6;
    /// Entries checked per tensor; 0 checks every entry, otherwise a seeded sample.
    std::size_t max_entries = 0;
    std::uint64_t seed = 1;
};

struct GradientCheckEntry {
    std::size_t layer = 0; ///< layer index; layers().size() for the network input
    std::string tensor;    ///< "weight", "bias" or "input"
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    bool passed = true;
};

struct GradientCheckReport {
    std::vector<GradientCheckEntry> entries;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = true;

    nlohmann::json to_json() const;
};

GradientCheckReport check_gradients(const Network& net, const Tensor& input, const LossFn& loss,
                                    const GradientCheckOptions& opts = {}, const BackwardFn& backward = {});

/// Layer specs, tensor shapes and byte offsets of the weight blob.
nlohmann::json layout_json(const Network& net);
/// Little-endian float32 blob of all parameters in layer order (weight then bias).
std::vector<std::uint8_t> weights_blob(const Network& net);
void write_weights(const std::filesystem::path& path, const Network& net);
/// Rebuilds a network from layout_json output and a blob.
Network network_from_blob(const nlohmann::json& layout, std::span<const std::uint8_t> blob);
Network read_weights(const std::filesystem::path& path, const nlohmann::json& layout);

} // namespace covmap::nn
