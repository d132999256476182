#pragma once

// The two convolutional architectures, their parameters, and the forward
// and backward passes over a layer list.
//
// QUB1: conv x4, pool, conv x4, pool, conv(ceil(F/2)), dense(2)
// QUB2: conv x3, pool, dense(2)
// Every conv is 3x3, stride 1, zero padding 1, followed by ReLU.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "classifier.hpp"
#include "errors.hpp"
#include "ops.hpp"
#include "patch.hpp"
#include "tensor.hpp"

namespace tlab {

enum class Arch : std::uint8_t { qub1 = 1, qub2 = 2 };

inline std::string arch_name(Arch a) { return a == Arch::qub1 ? "QUB1" : "QUB2"; }

inline Arch parse_arch(const std::string& s) {
    if (s == "qub1" || s == "QUB1") return Arch::qub1;
    if (s == "qub2" || s == "QUB2") return Arch::qub2;
    throw ConfigError("unknown architecture '" + s + "' (expected qub1 or qub2)");
}

enum class LayerKind : std::uint8_t { conv, relu, pool, dense };

struct LayerDesc {
    LayerKind kind;
    std::size_t in_channels = 0;  // conv, relu, pool
    std::size_t out_channels = 0;
    std::size_t in_side = 0;       // spatial side of this layer's input
    std::size_t in_features = 0;   // dense
    std::size_t out_features = 0;

    friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

struct ModelSpec {
    Arch arch = Arch::qub2;
    std::size_t input_side = 64;
    std::size_t base_width = 64;
    std::vector<LayerDesc> layers;

    std::size_t count(LayerKind k) const {
        return static_cast<std::size_t>(
            std::count_if(layers.begin(), layers.end(), [k](const LayerDesc& l) { return l.kind == k; }));
    }

    // Parameter tensor shapes in storage order: (kernels, bias) per conv,
    // (weights, bias) for the dense layer.
    std::vector<Shape> parameter_shapes() const {
        std::vector<Shape> out;
        for (const auto& l : layers) {
            if (l.kind == LayerKind::conv) {
                out.push_back({l.out_channels, l.in_channels, 3, 3});
                out.push_back({l.out_channels});
            } else if (l.kind == LayerKind::dense) {
                out.push_back({l.out_features, l.in_features});
                out.push_back({l.out_features});
            }
        }
        return out;
    }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

inline ModelSpec build_spec(Arch arch, std::size_t input_side, std::size_t base_width) {
    if (base_width == 0) throw ConfigError("base width must be positive");
    const std::size_t pools = arch == Arch::qub1 ? 2 : 1;
    const std::size_t div = std::size_t{1} << pools;
    if (input_side == 0 || input_side % div != 0) {
        throw ConfigError(arch_name(arch) + " needs an input side divisible by " + std::to_string(div) + ", got " +
                          std::to_string(input_side));
    }

    ModelSpec spec{arch, input_side, base_width, {}};
    std::size_t side = input_side;
    std::size_t channels = 1;
    auto conv = [&](std::size_t out) {
        spec.layers.push_back({LayerKind::conv, channels, out, side, 0, 0});
        spec.layers.push_back({LayerKind::relu, out, out, side, 0, 0});
        channels = out;
    };
    auto pool = [&] {
        spec.layers.push_back({LayerKind::pool, channels, channels, side, 0, 0});
        side /= 2;
    };

    const std::size_t f = base_width;
    if (arch == Arch::qub1) {
        for (int i = 0; i < 4; ++i) conv(f);
        pool();
        for (int i = 0; i < 4; ++i) conv(f);
        pool();
        conv((f + 1) / 2);
    } else {
        for (int i = 0; i < 3; ++i) conv(f);
        pool();
    }
    spec.layers.push_back({LayerKind::dense, channels, 0, side, channels * side * side, 2});
    return spec;
}

struct TrainingMeta {
    std::string dataset_id;
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    double validation_accuracy = 0.0;
};

// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardTrace {
    std::vector<Tensor> inputs;  // inputs[i] is the input of layer i
    std::vector<std::vector<std::uint32_t>> argmax;  // per layer, pools only
    Tensor logits;
};

struct Gradients {
    Tensor input;
    std::vector<Tensor> params;  // empty unless requested
};

class TrainedModel {
public:
    TrainedModel() = default;

    TrainedModel(ModelSpec spec, std::vector<Tensor> weights, TrainingMeta meta = {})
        : spec_(std::move(spec)), weights_(std::move(weights)), meta_(std::move(meta)) {
        const auto shapes = spec_.parameter_shapes();
        if (shapes.size() != weights_.size()) {
            throw DimensionError("model has " + std::to_string(weights_.size()) + " weight tensors, spec needs " +
                                 std::to_string(shapes.size()));
        }
        for (std::size_t i = 0; i < shapes.size(); ++i) {
            if (weights_[i].shape() != shapes[i]) {
                throw DimensionError("weight " + std::to_string(i) + " has shape " +
                                     shape_string(weights_[i].shape()) + ", spec needs " + shape_string(shapes[i]));
            }
        }
    }

    // Seeded uniform init with limit sqrt(6 / fan_in); biases start at zero.
    static TrainedModel initialize(const ModelSpec& spec, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::vector<Tensor> w;
        for (const auto& shape : spec.parameter_shapes()) {
            Tensor t(shape);
            if (shape.size() > 1) {
                const std::size_t fan_in = shape_size(shape) / shape[0];
                const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
                std::uniform_real_distribution<float> dist(-limit, limit);
                for (auto& v : t.values()) v = dist(rng);
            }
            w.push_back(std::move(t));
        }
        return TrainedModel(spec, std::move(w));
    }

    const ModelSpec& spec() const noexcept { return spec_; }
    const std::vector<Tensor>& weights() const noexcept { return weights_; }
    std::vector<Tensor>& mutable_weights() noexcept { return weights_; }
    const TrainingMeta& meta() const noexcept { return meta_; }
    TrainingMeta& mutable_meta() noexcept { return meta_; }

    Shape input_shape() const { return {1, spec_.input_side, spec_.input_side}; }

    ForwardTrace forward(const Tensor& x) const {
        if (x.shape() != input_shape()) {
            throw DimensionError("model input must be " + shape_string(input_shape()) + ", got " +
                                 shape_string(x.shape()));
        }
        ForwardTrace t;
        t.inputs.reserve(spec_.layers.size());
        t.argmax.resize(spec_.layers.size());
        Tensor cur = x;
        std::size_t p = 0;
        for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
            t.inputs.push_back(cur);
            switch (spec_.layers[i].kind) {
            case LayerKind::conv:
                cur = ops::conv2d_forward(cur, weights_[p], weights_[p + 1]);
                p += 2;
                break;
            case LayerKind::relu:
                cur = ops::relu_forward(cur);
                break;
            case LayerKind::pool: {
                auto r = ops::maxpool2x2_forward(cur);
                cur = std::move(r.output);
                t.argmax[i] = std::move(r.argmax);
                break;
            }
            case LayerKind::dense:
                cur = ops::dense_forward(cur, weights_[p], weights_[p + 1]);
                p += 2;
                break;
            }
        }
        t.logits = std::move(cur);
        return t;
    }

    Gradients backward(const ForwardTrace& t, const Tensor& dlogits, bool need_param_grads) const {
        Gradients g;
        if (need_param_grads) g.params.resize(weights_.size());
        Tensor up = dlogits;
        std::size_t p = weights_.size();
        for (std::size_t i = spec_.layers.size(); i-- > 0;) {
            const Tensor& in = t.inputs[i];
            switch (spec_.layers[i].kind) {
            case LayerKind::conv: {
                p -= 2;
                auto lg = ops::conv2d_backward(in, weights_[p], up, need_param_grads);
                if (need_param_grads) {
                    g.params[p] = std::move(lg.param_grads[0]);
                    g.params[p + 1] = std::move(lg.param_grads[1]);
                }
                up = std::move(lg.input_grad);
                break;
            }
            case LayerKind::relu:
                up = ops::relu_backward(in, up);
                break;
            case LayerKind::pool:
                up = ops::maxpool2x2_backward(t.argmax[i], up);
                break;
            case LayerKind::dense: {
                p -= 2;
                auto lg = ops::dense_backward(in, weights_[p], up, need_param_grads);
                if (need_param_grads) {
                    g.params[p] = std::move(lg.param_grads[0]);
                    g.params[p + 1] = std::move(lg.param_grads[1]);
                }
                up = std::move(lg.input_grad);
                break;
            }
            }
        }
        g.input = std::move(up);
        return g;
    }

    Tensor logits(const Tensor& x) const { return forward(x).logits; }

    Tensor input_vjp(const Tensor& x, const Tensor& dlogits) const {
        return backward(forward(x), dlogits, false).input;
    }

    friend bool operator==(const TrainedModel& a, const TrainedModel& b) {
        return a.spec_ == b.spec_ && a.weights_ == b.weights_;
    }

private:
    ModelSpec spec_;
    std::vector<Tensor> weights_;
    TrainingMeta meta_;
};

static_assert(Classifier<TrainedModel>);
static_assert(Classifier<LinearClassifier>);

inline Prediction predict(const TrainedModel& model, const Patch& patch) { return predict(model, to_unit(patch)); }

inline float margin(const TrainedModel& model, const Patch& patch) {
    return margin(model, to_unit(patch), patch.label);
}

} // namespace tlab
