// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace mrvn {

std::string shape_to_string(const Shape& shape) { return fmt::format("({})", fmt::join(shape, ",")); }

std::string_view to_string(LayerKind kind) noexcept {
    switch (kind) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

std::optional<LayerKind> parse_layer_kind(std::string_view s) noexcept {
    if (s == "dense") return LayerKind::Dense;
    if (s == "conv2d") return LayerKind::Conv2d;
    if (s == "relu") return LayerKind::Relu;
    if (s == "maxpool") return LayerKind::MaxPool;
    if (s == "flatten") return LayerKind::Flatten;
    return std::nullopt;
}

Shape infer_output_shape(LayerSpec& spec, const Shape& input) {
    auto fail = [&](std::string_view why) {
        return std::invalid_argument(
            fmt::format("{} layer cannot take input {}: {}", to_string(spec.kind), shape_to_string(input), why));
    };
    switch (spec.kind) {
        case LayerKind::Dense: {
            if (input.size() != 1) throw fail("dense expects a flat input");
            if (spec.in_features == 0) spec.in_features = input[0];
            if (spec.in_features != input[0]) throw fail(fmt::format("declared in_features {}", spec.in_features));
            if (spec.out_features == 0) throw fail("out_features must be positive");
            return {spec.out_features};
        }
        case LayerKind::Conv2d: {
            if (input.size() != 3) throw fail("conv2d expects (channels, height, width)");
            if (spec.in_channels == 0) spec.in_channels = input[0];
            if (spec.in_channels != input[0]) throw fail(fmt::format("declared in_channels {}", spec.in_channels));
            if (spec.out_channels == 0 || spec.kernel == 0 || spec.stride == 0) {
                throw fail("out_channels, kernel and stride must be positive");
            }
            if (spec.kernel > input[1] || spec.kernel > input[2]) throw fail("kernel larger than the input");
            return {spec.out_channels, (input[1] - spec.kernel) / spec.stride + 1,
                    (input[2] - spec.kernel) / spec.stride + 1};
        }
        case LayerKind::MaxPool: {
            if (input.size() != 3) throw fail("maxpool expects (channels, height, width)");
            if (spec.pool == 0 || spec.pool > input[1] || spec.pool > input[2]) throw fail("bad pool size");
            return {input[0], input[1] / spec.pool, input[2] / spec.pool};
        }
        case LayerKind::Relu: return input;
        case LayerKind::Flatten: return {shape_size(input)};
    }
    throw fail("unknown layer kind");
}

std::size_t Layer::fan_in() const noexcept {
    if (weight.shape.size() < 2) return 0;
    return shape_size(Shape(weight.shape.begin() + 1, weight.shape.end()));
}

Network Network::build(Shape input_shape, std::vector<LayerSpec> specs) {
    if (specs.empty()) throw std::invalid_argument("network needs at least one layer");
    if (input_shape.empty() || shape_size(input_shape) == 0) throw std::invalid_argument("empty input shape");
    Network net;
    net.input_shape_ = input_shape;
    Shape shape = std::move(input_shape);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        Layer layer;
        layer.spec = specs[i];
        layer.in_shape = shape;
        layer.out_shape = infer_output_shape(layer.spec, shape);
        const auto kind = layer.spec.kind;
        layer.name = fmt::format("{}{}", kind == LayerKind::Conv2d ? "conv" : to_string(kind), i);
        if (kind == LayerKind::Dense) {
            layer.weight = Tensor({layer.spec.out_features, layer.spec.in_features});
            layer.bias = Tensor({layer.spec.out_features});
        } else if (kind == LayerKind::Conv2d) {
            layer.weight = Tensor({layer.spec.out_channels, layer.spec.in_channels, layer.spec.kernel, layer.spec.kernel});
            layer.bias = Tensor({layer.spec.out_channels});
        }
        layer.qweight = layer.weight;
        layer.qbias = layer.bias;
        shape = layer.out_shape;
        net.layers_.push_back(std::move(layer));
    }
    if (net.layers_.back().out_shape.size() != 1) {
        throw std::invalid_argument("the last layer must produce a flat logit vector");
    }
    if (net.trainable_indices().empty()) throw std::invalid_argument("network has no trainable layer");
    return net;
}

std::vector<std::size_t> Network::trainable_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].spec.trainable()) out.push_back(i);
    }
    return out;
}

std::vector<std::string> Network::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& l : layers_) {
        if (l.spec.trainable()) out.push_back(l.name);
    }
    return out;
}

const Layer* Network::find(std::string_view name) const noexcept {
    auto it = std::find_if(layers_.begin(), layers_.end(), [&](const Layer& l) { return l.name == name; });
    return it == layers_.end() ? nullptr : &*it;
}

Layer* Network::find_mut(std::string_view name) noexcept {
    auto it = std::find_if(layers_.begin(), layers_.end(), [&](const Layer& l) { return l.name == name; });
    if (it == layers_.end()) return nullptr;
    ++generation_;
    return &*it;
}

std::size_t Network::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

std::vector<LayerSpec> Network::specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) out.push_back(l.spec);
    return out;
}

// ---------------------------------------------------------------------------
// Layer kernels

namespace {

Shape batched(std::size_t batch, const Shape& per_sample) {
    Shape s{batch};
    s.insert(s.end(), per_sample.begin(), per_sample.end());
    return s;
}

Tensor dense_forward(const Layer& l, const Tensor& x, std::size_t batch) {
    const std::size_t in = l.spec.in_features, out = l.spec.out_features;
    Tensor y(batched(batch, l.out_shape));
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = &x.data[b * in];
        for (std::size_t o = 0; o < out; ++o) {
            const double* w = &l.qweight.data[o * in];
            double acc = l.qbias.data[o];
            for (std::size_t i = 0; i < in; ++i) acc += w[i] * xb[i];
            y.data[b * out + o] = acc;
        }
    }
    return y;
}

void dense_backward(const Layer& l, const Tensor& x, const Tensor& dy, std::size_t batch, ParamGrads& g, Tensor* dx) {
    const std::size_t in = l.spec.in_features, out = l.spec.out_features;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = &x.data[b * in];
        for (std::size_t o = 0; o < out; ++o) {
            const double d = dy.data[b * out + o];
            g.bias.data[o] += d;
            if (d == 0.0) continue;
            double* gw = &g.weight.data[o * in];
            for (std::size_t i = 0; i < in; ++i) gw[i] += d * xb[i];
        }
    }
    if (!dx) return;
    for (std::size_t b = 0; b < batch; ++b) {
        double* dxb = &dx->data[b * in];
        for (std::size_t o = 0; o < out; ++o) {
            const double d = dy.data[b * out + o];
            if (d == 0.0) continue;
            const double* w = &l.qweight.data[o * in];
            for (std::size_t i = 0; i < in; ++i) dxb[i] += w[i] * d;
        }
    }
}

struct ConvDims {
    std::size_t ic, ih, iw, oc, oh, ow, k, s;
};

ConvDims conv_dims(const Layer& l) {
    return {l.in_shape[0], l.in_shape[1], l.in_shape[2], l.out_shape[0],
            l.out_shape[1], l.out_shape[2], l.spec.kernel, l.spec.stride};
}

Tensor conv_forward(const Layer& l, const Tensor& x, std::size_t batch) {
    const auto d = conv_dims(l);
    Tensor y(batched(batch, l.out_shape));
    const std::size_t in_sz = d.ic * d.ih * d.iw, out_sz = d.oc * d.oh * d.ow;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = &x.data[b * in_sz];
        double* yb = &y.data[b * out_sz];
        for (std::size_t o = 0; o < d.oc; ++o) {
            for (std::size_t oy = 0; oy < d.oh; ++oy) {
                for (std::size_t ox = 0; ox < d.ow; ++ox) {
                    double acc = l.qbias.data[o];
                    for (std::size_t c = 0; c < d.ic; ++c) {
                        const double* w = &l.qweight.data[((o * d.ic + c) * d.k) * d.k];
                        const double* xc = &xb[c * d.ih * d.iw];
                        for (std::size_t ky = 0; ky < d.k; ++ky) {
                            const double* row = &xc[(oy * d.s + ky) * d.iw + ox * d.s];
                            for (std::size_t kx = 0; kx < d.k; ++kx) acc += w[ky * d.k + kx] * row[kx];
                        }
                    }
                    yb[(o * d.oh + oy) * d.ow + ox] = acc;
                }
            }
        }
    }
    return y;
}

void conv_backward(const Layer& l, const Tensor& x, const Tensor& dy, std::size_t batch, ParamGrads& g, Tensor* dx) {
    const auto d = conv_dims(l);
    const std::size_t in_sz = d.ic * d.ih * d.iw, out_sz = d.oc * d.oh * d.ow;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = &x.data[b * in_sz];
        const double* dyb = &dy.data[b * out_sz];
        double* dxb = dx ? &dx->data[b * in_sz] : nullptr;
        for (std::size_t o = 0; o < d.oc; ++o) {
            for (std::size_t oy = 0; oy < d.oh; ++oy) {
                for (std::size_t ox = 0; ox < d.ow; ++ox) {
                    const double dv = dyb[(o * d.oh + oy) * d.ow + ox];
                    g.bias.data[o] += dv;
                    if (dv == 0.0) continue;
                    for (std::size_t c = 0; c < d.ic; ++c) {
                        const std::size_t wbase = ((o * d.ic + c) * d.k) * d.k;
                        const std::size_t xbase = c * d.ih * d.iw;
                        for (std::size_t ky = 0; ky < d.k; ++ky) {
                            const std::size_t xrow = xbase + (oy * d.s + ky) * d.iw + ox * d.s;
                            for (std::size_t kx = 0; kx < d.k; ++kx) {
                                g.weight.data[wbase + ky * d.k + kx] += dv * xb[xrow + kx];
                                if (dxb) dxb[xrow + kx] += dv * l.qweight.data[wbase + ky * d.k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

Tensor maxpool_forward(const Layer& l, const Tensor& x, std::size_t batch, std::vector<std::size_t>& argmax) {
    const std::size_t c = l.in_shape[0], ih = l.in_shape[1], iw = l.in_shape[2];
    const std::size_t oh = l.out_shape[1], ow = l.out_shape[2], p = l.spec.pool;
    Tensor y(batched(batch, l.out_shape));
    argmax.assign(y.size(), 0);
    std::size_t out = 0;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (b * c + ch) * ih * iw;
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox, ++out) {
                    std::size_t best = base + (oy * p) * iw + ox * p;
                    for (std::size_t py = 0; py < p; ++py) {
                        for (std::size_t px = 0; px < p; ++px) {
                            const std::size_t idx = base + (oy * p + py) * iw + ox * p + px;
                            if (x.data[idx] > x.data[best]) best = idx;
                        }
                    }
                    y.data[out] = x.data[best];
                    argmax[out] = best;
                }
            }
        }
    }
    return y;
}

void check_finite(const Tensor& t, const Layer& l) {
    for (double v : t.data) {
        if (!std::isfinite(v)) {
            throw NonFiniteActivation(l.name);
        }
    }
}

Tensor run_forward(const Network& net, const Tensor& batch, ForwardCache* cache) {
    const auto& in_shape = net.input_shape();
    if (batch.shape.size() != in_shape.size() + 1 || !std::equal(in_shape.begin(), in_shape.end(), batch.shape.begin() + 1)) {
        throw std::invalid_argument(fmt::format("batch shape {} does not match network input {}",
                                                shape_to_string(batch.shape), shape_to_string(in_shape)));
    }
    const std::size_t n = batch.shape[0];
    if (n == 0) throw std::invalid_argument("empty batch");
    if (cache) {
        cache->generation = net.generation();
        cache->batch = n;
        cache->inputs.clear();
        cache->argmax.assign(net.layers().size(), {});
    }
    Tensor x = batch;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const Layer& l = net.layers()[i];
        Tensor y;
        switch (l.spec.kind) {
            case LayerKind::Dense: y = dense_forward(l, x, n); break;
            case LayerKind::Conv2d: y = conv_forward(l, x, n); break;
            case LayerKind::Relu:
                y = x;
                for (double& v : y.data) v = v > 0.0 ? v : 0.0;
                break;
            case LayerKind::MaxPool: {
                std::vector<std::size_t> am;
                y = maxpool_forward(l, x, n, am);
                if (cache) cache->argmax[i] = std::move(am);
                break;
            }
            case LayerKind::Flatten: y = Tensor(batched(n, l.out_shape), x.data); break;
        }
        check_finite(y, l);
        if (cache) cache->inputs.push_back(std::move(x));
        x = std::move(y);
    }
    return x;
}

Tensor softmax_rows(const Tensor& logits) {
    const std::size_t n = logits.shape[0], k = logits.shape[1];
    Tensor p(logits.shape);
    for (std::size_t b = 0; b < n; ++b) {
        const double* z = &logits.data[b * k];
        const double zmax = *std::max_element(z, z + k);
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += (p.data[b * k + j] = std::exp(z[j] - zmax));
        for (std::size_t j = 0; j < k; ++j) p.data[b * k + j] /= total;
    }
    return p;
}

void check_labels(std::span<const int> labels, std::size_t batch, std::size_t classes) {
    if (labels.size() != batch) {
        throw std::invalid_argument(fmt::format("{} labels for a batch of {}", labels.size(), batch));
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw std::invalid_argument(fmt::format("label {} outside [0, {})", y, classes));
        }
    }
}

}  // namespace

Tensor predict(const Network& net, const Tensor& batch, ForwardCache* cache) {
    return run_forward(net, batch, cache);
}

ForwardResult forward(const Network& net, const Tensor& batch, std::span<const int> labels) {
    ForwardResult r;
    r.logits = run_forward(net, batch, &r.cache);
    const std::size_t n = r.logits.shape[0], k = r.logits.shape[1];
    check_labels(labels, n, k);
    r.cache.probabilities = softmax_rows(r.logits);
    // log-sum-exp form keeps the loss finite for saturated softmax rows
    double loss = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        const double* z = &r.logits.data[b * k];
        const double zmax = *std::max_element(z, z + k);
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += std::exp(z[j] - zmax);
        loss += zmax + std::log(total) - z[labels[b]];
    }
    r.loss = loss / static_cast<double>(n);
    return r;
}

Tensor cross_entropy_grad(const ForwardCache& cache, std::span<const int> labels) {
    const Tensor& p = cache.probabilities;
    if (p.shape.size() != 2) throw std::logic_error("cache carries no softmax output; use forward()");
    const std::size_t n = p.shape[0], k = p.shape[1];
    check_labels(labels, n, k);
    Tensor d = p;
    for (std::size_t b = 0; b < n; ++b) {
        d.data[b * k + static_cast<std::size_t>(labels[b])] -= 1.0;
    }
    for (double& v : d.data) v /= static_cast<double>(n);
    return d;
}

GradMap backward_from(const Network& net, const ForwardCache& cache, const Tensor& dlogits) {
    if (cache.generation != net.generation() || cache.inputs.size() != net.layers().size()) {
        throw std::logic_error("stale forward cache: the network changed after the forward pass");
    }
    const std::size_t n = cache.batch;
    if (dlogits.shape != batched(n, net.output_shape())) {
        throw std::invalid_argument(fmt::format("logit gradient shape {} does not match {}",
                                                shape_to_string(dlogits.shape),
                                                shape_to_string(batched(n, net.output_shape()))));
    }
    GradMap grads;
    // Input gradients are not needed below the first trainable layer.
    const std::size_t first_trainable = net.trainable_indices().front();

    Tensor dy = dlogits;
    for (std::size_t i = net.layers().size(); i-- > 0;) {
        const Layer& l = net.layers()[i];
        const Tensor& x = cache.inputs[i];
        const bool need_dx = i > first_trainable;
        Tensor dx = need_dx ? Tensor(x.shape) : Tensor{};
        switch (l.spec.kind) {
            case LayerKind::Dense:
            case LayerKind::Conv2d: {
                ParamGrads g{Tensor(l.weight.shape), Tensor(l.bias.shape)};
                if (l.spec.kind == LayerKind::Dense) {
                    dense_backward(l, x, dy, n, g, need_dx ? &dx : nullptr);
                } else {
                    conv_backward(l, x, dy, n, g, need_dx ? &dx : nullptr);
                }
                grads.emplace(l.name, std::move(g));
                break;
            }
            case LayerKind::Relu:
                if (need_dx) {
                    for (std::size_t j = 0; j < x.size(); ++j) dx.data[j] = x.data[j] > 0.0 ? dy.data[j] : 0.0;
                }
                break;
            case LayerKind::MaxPool:
                if (need_dx) {
                    const auto& am = cache.argmax[i];
                    for (std::size_t j = 0; j < am.size(); ++j) dx.data[am[j]] += dy.data[j];
                }
                break;
            case LayerKind::Flatten:
                if (need_dx) dx.data = dy.data;
                break;
        }
        if (!need_dx) break;
        dy = std::move(dx);
    }
    return grads;
}

GradMap backward(const Network& net, const ForwardCache& cache, std::span<const int> labels) {
    return backward_from(net, cache, cross_entropy_grad(cache, labels));
}

Tensor tnvs_init(const Shape& shape, double scale, Rng& rng) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw std::invalid_argument(fmt::format("tnvs_init: scale must be positive, got {}", scale));
    }
    if (shape.empty()) throw std::invalid_argument("tnvs_init: empty shape");
    const std::size_t fan_in = shape.size() == 1 ? shape[0] : shape_size(Shape(shape.begin() + 1, shape.end()));
    if (fan_in == 0) throw std::invalid_argument("tnvs_init: zero fan-in");
    const double sigma = std::sqrt(scale / static_cast<double>(fan_in));
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor t(shape);
    for (double& v : t.data) {
        double z;
        do {
            z = normal(rng);
        } while (std::abs(z) > 2.0);
        v = sigma * z;
    }
    return t;
}

RegularizedLoss regularized_loss(double loss, const Network& master, double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("regularized_loss: alpha and beta must be >= 0");
    RegularizedLoss r;
    double l1 = 0.0, l2 = 0.0;
    for (const auto& l : master.layers()) {
        if (!l.spec.trainable()) continue;
        Tensor g(l.weight.shape);
        for (std::size_t i = 0; i < l.weight.size(); ++i) {
            const double w = l.weight.data[i];
            l1 += std::abs(w);
            l2 += w * w;
            const double sign = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
            g.data[i] = alpha * sign + beta * w;
        }
        r.grad.emplace(l.name, std::move(g));
    }
    r.loss_hat = alpha * l1 + 0.5 * beta * l2 + loss;
    return r;
}

void sgd_step(Network& net, const GradMap& grads, double lr, double alpha, double beta) {
    if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: learning rate must be positive");
    for (std::size_t idx : net.trainable_indices()) {
        const Layer& cl = net.layers()[idx];
        auto it = grads.find(cl.name);
        if (it == grads.end()) throw std::invalid_argument(fmt::format("sgd_step: no gradient for '{}'", cl.name));
        const ParamGrads& g = it->second;
        if (g.weight.shape != cl.weight.shape || g.bias.shape != cl.bias.shape) {
            throw std::invalid_argument(fmt::format("sgd_step: gradient shape mismatch for '{}'", cl.name));
        }
        Layer& l = net.layer(idx);
        for (std::size_t i = 0; i < l.weight.size(); ++i) {
            const double w = l.weight.data[i];
            const double sign = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
            l.weight.data[i] = w - lr * (g.weight.data[i] + alpha * sign + beta * w);
        }
        for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias.data[i] -= lr * g.bias.data[i];
    }
}

}  // namespace mrvn
