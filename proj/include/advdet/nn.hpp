#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advdet/tensor.hpp"

namespace advdet {

enum class LayerKind { Conv2d, MaxPool2d, Dense, Relu, Softmax, Dropout };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// One layer of the stack. Only the fields relevant to `kind` are used.
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    std::size_t out_channels = 0;  // conv2d
    std::size_t kernel_size = 0;   // conv2d
    std::size_t stride = 1;        // conv2d, maxpool2d
    std::size_t window = 0;        // maxpool2d
    std::size_t out_dim = 0;       // dense
    double rate = 0.0;             // dropout

    static LayerSpec conv2d(std::size_t out_channels, std::size_t kernel_size, std::size_t stride = 1);
    /// Non-overlapping pooling unless a stride is given.
    static LayerSpec maxpool2d(std::size_t window, std::size_t stride = 0);
    static LayerSpec dense(std::size_t out_dim);
    static LayerSpec relu();
    static LayerSpec softmax();
    static LayerSpec dropout(double rate);

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// The small LeNet used for MNIST: two conv/relu/pool blocks, a 128-unit
/// hidden layer, dropout 0.5 after the last pool and after the hidden layer.
std::vector<LayerSpec> lenet_small_specs(std::size_t num_classes = 10);

struct Layer {
    LayerSpec spec;
    Shape input_shape;
    Shape output_shape;
    Tensor weight;  // conv: [out, in, k, k]; dense: [out, in]; empty otherwise
    Tensor bias;    // [out]; empty for parameter-free layers

    bool has_params() const { return !weight.empty(); }
};

/// Immutable after construction apart from `layers()` access used by training
/// and persistence.
class NetworkModel {
public:
    NetworkModel() = default;
    NetworkModel(Shape input_shape, std::size_t num_classes, std::vector<Layer> layers);

    const Shape& input_shape() const noexcept { return input_shape_; }
    std::size_t input_size() const noexcept { return shape_size(input_shape_); }
    std::size_t num_classes() const noexcept { return num_classes_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::vector<Layer>& mutable_layers() noexcept { return layers_; }

    /// Index of the final dense layer (its output is the logit vector Z).
    std::size_t logit_layer() const noexcept { return layers_.size() - 2; }
    /// Dimension of the last hidden representation (input of the logit layer).
    std::size_t hidden_size() const;
    bool has_active_dropout() const;
    std::vector<LayerSpec> specs() const;

private:
    Shape input_shape_;
    std::size_t num_classes_ = 0;
    std::vector<Layer> layers_;
};

/// Either the scaled deterministic network or one sampled dropout mask set.
struct DropoutMode {
    bool sampled = false;
    std::uint64_t seed = 0;

    static DropoutMode deterministic() { return {}; }
    static DropoutMode sample(std::uint64_t seed) { return {true, seed}; }
};

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double adadelta_rho = 0.95;
    double adadelta_epsilon = 1e-6;
    double learning_rate = 1.0;
    std::uint64_t rng_seed = 0;
};

struct TrainReport {
    double initial_loss = 0.0;  // mean deterministic cross-entropy before training
    double final_loss = 0.0;    // same, after training
    std::vector<double> epoch_losses;  // mean sampled-dropout batch loss per epoch
};

struct ForwardOutput {
    Tensor probs;   // [num_classes]
    Tensor hidden;  // [hidden_size], the last hidden representation
};

/// Validates shapes and initializes weights uniform(-b, b), b = sqrt(6 / (fan_in + fan_out)).
NetworkModel build_model(const std::vector<LayerSpec>& specs, const Shape& input_shape,
                         std::size_t num_classes, std::uint64_t rng_seed);

ForwardOutput forward(const NetworkModel& model, std::span<const double> x,
                      DropoutMode mode = DropoutMode::deterministic());

/// Pre-softmax outputs Z(x), deterministic mode.
Tensor logits(const NetworkModel& model, std::span<const double> x);

std::size_t predict(const NetworkModel& model, std::span<const double> x);

/// Gradient of the cross-entropy loss with respect to the input, deterministic mode.
Tensor input_gradient(const NetworkModel& model, std::span<const double> x, std::span<const double> y_onehot);

struct ClassJacobians {
    Tensor probs;   // [num_classes]
    Tensor logits;  // [num_classes]
    Tensor d_probs;   // [num_classes, input_size], rows dF_j/dx
    Tensor d_logits;  // [num_classes, input_size], rows dZ_j/dx
};

ClassJacobians class_jacobians(const NetworkModel& model, std::span<const double> x);

/// Gradient of sum_j weights[j] * Z_j(x) with respect to x.
Tensor logit_gradient(const NetworkModel& model, std::span<const double> x, std::span<const double> weights);

/// T stochastic forward passes; pass t uses DropoutMode::sample(derive_seed(seed, t)).
std::vector<Tensor> sample_predictions(const NetworkModel& model, std::span<const double> x, std::size_t samples,
                                       std::uint64_t seed);

/// Trains in place with Adadelta on mini-batches, one sampled mask per example.
/// `images` is [n, ...input_shape], `onehot` is [n, num_classes].
TrainReport train(NetworkModel& model, const Tensor& images, const Tensor& onehot, const TrainConfig& config);

/// Mean deterministic cross-entropy over a labelled set.
double mean_loss(const NetworkModel& model, const Tensor& images, const Tensor& onehot);

double accuracy(const NetworkModel& model, const Tensor& images, std::span<const int> labels);

Tensor one_hot(std::span<const int> labels, std::size_t num_classes);

}  // namespace advdet
