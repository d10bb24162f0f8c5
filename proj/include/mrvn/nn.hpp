// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0
//
// A small feed-forward network with hand-written backprop. Every trainable
// layer keeps a float master copy (weight, bias) and a quantized shadow copy
// (qweight, qbias); forward and backward run on the shadow copy, SGD updates
// the master.
//
// Layouts: dense weight (out, in); conv weight (out_c, in_c, k, k); activations
// are (batch, ...) row-major with channels before spatial dims.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mrvn/rng.hpp"
#include "mrvn/tensor.hpp"

namespace mrvn {

enum class LayerKind { Dense, Conv2d, Relu, MaxPool, Flatten };

/// A layer produced NaN or infinity during forward.
class NonFiniteActivation : public std::runtime_error {
public:
    explicit NonFiniteActivation(std::string layer)
        : std::runtime_error("non-finite activation produced by layer '" + layer + "'"), layer_(std::move(layer)) {}
    const std::string& layer() const noexcept { return layer_; }

private:
    std::string layer_;
};

std::string_view to_string(LayerKind kind) noexcept;
std::optional<LayerKind> parse_layer_kind(std::string_view s) noexcept;

/// User-facing layer description. Input-side dimensions (dense in_features,
/// conv in_channels) are inferred from the preceding shape when left at 0.
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    std::size_t in_features = 0;   // dense
    std::size_t out_features = 0;  // dense
    std::size_t in_channels = 0;   // conv2d
    std::size_t out_channels = 0;  // conv2d
    std::size_t kernel = 0;        // conv2d
    std::size_t stride = 1;        // conv2d
    std::size_t pool = 2;          // maxpool window and stride

    static LayerSpec dense(std::size_t out, std::size_t in = 0) {
        return {.kind = LayerKind::Dense, .in_features = in, .out_features = out};
    }
    static LayerSpec conv2d(std::size_t out_c, std::size_t k, std::size_t stride = 1, std::size_t in_c = 0) {
        return {.kind = LayerKind::Conv2d, .in_channels = in_c, .out_channels = out_c, .kernel = k, .stride = stride};
    }
    static LayerSpec relu() { return {.kind = LayerKind::Relu}; }
    static LayerSpec maxpool(std::size_t size) { return {.kind = LayerKind::MaxPool, .pool = size}; }
    static LayerSpec flatten() { return {.kind = LayerKind::Flatten}; }

    bool trainable() const noexcept { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Per-sample output shape of `spec` applied to `input` (no batch dim). Fills
/// inferred dims in `spec`. Throws std::invalid_argument on mismatch.
Shape infer_output_shape(LayerSpec& spec, const Shape& input);

struct Layer {
    LayerSpec spec;
    std::string name;  // e.g. "conv0", "dense3"; index is the layer position
    Shape in_shape;    // per sample
    Shape out_shape;   // per sample
    Tensor weight;     // master
    Tensor bias;
    Tensor qweight;    // quantized shadow
    Tensor qbias;

    std::size_t fan_in() const noexcept;
};

class Network {
public:
    /// Resolves shapes and allocates zero parameters.
    static Network build(Shape input_shape, std::vector<LayerSpec> specs);

    const Shape& input_shape() const noexcept { return input_shape_; }
    const Shape& output_shape() const noexcept { return layers_.back().out_shape; }
    std::size_t num_classes() const noexcept { return shape_size(output_shape()); }

    std::span<const Layer> layers() const noexcept { return layers_; }
    /// Mutable access invalidates outstanding forward caches.
    Layer& layer(std::size_t i) {
        ++generation_;
        return layers_.at(i);
    }

    std::vector<std::size_t> trainable_indices() const;
    std::vector<std::string> trainable_names() const;
    const Layer* find(std::string_view name) const noexcept;
    Layer* find_mut(std::string_view name) noexcept;

    std::uint64_t generation() const noexcept { return generation_; }
    void bump_generation() noexcept { ++generation_; }

    std::size_t parameter_count() const noexcept;
    std::vector<LayerSpec> specs() const;

private:
    Shape input_shape_;
    std::vector<Layer> layers_;
    std::uint64_t generation_ = 0;
};

/// Activations retained for backward.
struct ForwardCache {
    std::uint64_t generation = 0;
    std::size_t batch = 0;
    std::vector<Tensor> inputs;  // input of each layer
    std::vector<std::vector<std::size_t>> argmax;  // maxpool winners, per layer
    Tensor probabilities;        // softmax of the logits
};

struct ForwardResult {
    ForwardCache cache;
    Tensor logits;
    double loss = 0.0;
};

/// Logits on the quantized weights.
Tensor predict(const Network& net, const Tensor& batch, ForwardCache* cache = nullptr);

/// Forward pass plus mean softmax cross-entropy against integer labels.
ForwardResult forward(const Network& net, const Tensor& batch, std::span<const int> labels);

struct ParamGrads {
    Tensor weight;
    Tensor bias;
};

using GradMap = std::map<std::string, ParamGrads, std::less<>>;

/// Softmax cross-entropy gradient wrt logits: (softmax - onehot) / B.
Tensor cross_entropy_grad(const ForwardCache& cache, std::span<const int> labels);

/// Backpropagates an arbitrary logit gradient through the cached graph.
/// Throws std::logic_error if the network changed since the cache was taken.
GradMap backward_from(const Network& net, const ForwardCache& cache, const Tensor& dlogits);

/// Gradients of the cross-entropy loss of the cached forward pass.
GradMap backward(const Network& net, const ForwardCache& cache, std::span<const int> labels);

/// Normal(0, scale/fan_in) truncated at ±2σ. fan_in is the product of all but
/// the leading dim. Throws std::invalid_argument for scale <= 0.
Tensor tnvs_init(const Shape& shape, double scale, Rng& rng);

struct RegularizedLoss {
    double loss_hat = 0.0;
    std::map<std::string, Tensor, std::less<>> grad;  // α·sign(W) + β·W
};

/// ℒ̂ = α‖W‖₁ + (β/2)‖W‖₂² + ℒ summed over the master weights (biases excluded).
RegularizedLoss regularized_loss(double loss, const Network& master, double alpha, double beta);

/// W ← W − lr·(G + α·sign(W) + β·W); b ← b − lr·G_b. Master copy only.
void sgd_step(Network& net, const GradMap& grads, double lr, double alpha, double beta);

}  // namespace mrvn
