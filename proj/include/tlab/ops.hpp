#pragma once

// Forward and backward kernels for the layer types used by the classifiers:
// 3x3 same-padded convolution, 2x2 max pooling, ReLU, dense, and the
// softmax cross-entropy loss. All kernels are pure and run in a fixed loop
// order, so identical inputs give bit-identical outputs.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace tlab::ops {

struct LayerGrad {
    Tensor input_grad;
    std::vector<Tensor> param_grads;
};

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                             shape_string(t.shape()));
    }
}

// Copies a [C,H,W] tensor into a zero border of width one.
inline std::vector<float> pad1(const Tensor& in) {
    const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
    const std::size_t pw = w + 2;
    std::vector<float> out(c * (h + 2) * pw, 0.0f);
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t y = 0; y < h; ++y) {
            const float* src = in.data() + (ci * h + y) * w;
            float* dst = out.data() + (ci * (h + 2) + y + 1) * pw + 1;
            std::copy(src, src + w, dst);
        }
    }
    return out;
}

inline void check_conv(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
    require_rank(input, 3, "conv2d input");
    require_rank(kernels, 4, "conv2d kernels");
    require_rank(bias, 1, "conv2d bias");
    if (kernels.dim(2) != 3 || kernels.dim(3) != 3) {
        throw DimensionError("conv2d kernels must be 3x3, got " + shape_string(kernels.shape()));
    }
    if (kernels.dim(1) != input.dim(0)) {
        throw DimensionError("conv2d: input has " + std::to_string(input.dim(0)) + " channels, kernels expect " +
                             std::to_string(kernels.dim(1)));
    }
    if (bias.dim(0) != kernels.dim(0)) {
        throw DimensionError("conv2d: bias length " + std::to_string(bias.dim(0)) + " vs " +
                             std::to_string(kernels.dim(0)) + " output channels");
    }
}

} // namespace detail

inline Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
    detail::check_conv(input, kernels, bias);
    const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t cout = kernels.dim(0);
    const std::size_t pw = w + 2, ph = h + 2;
    const auto pad = detail::pad1(input);

    Tensor out({cout, h, w});
    for (std::size_t co = 0; co < cout; ++co) {
        float* dst_plane = out.data() + co * h * w;
        std::fill(dst_plane, dst_plane + h * w, bias[co]);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const float* k = kernels.data() + (co * cin + ci) * 9;
            const float* src_plane = pad.data() + ci * ph * pw;
            for (std::size_t ky = 0; ky < 3; ++ky) {
                for (std::size_t kx = 0; kx < 3; ++kx) {
                    const float wv = k[ky * 3 + kx];
                    for (std::size_t y = 0; y < h; ++y) {
                        const float* src = src_plane + (y + ky) * pw + kx;
                        float* dst = dst_plane + y * w;
                        for (std::size_t x = 0; x < w; ++x) dst[x] += wv * src[x];
                    }
                }
            }
        }
    }
    return out;
}

// param_grads = {d kernels, d bias}; skipped when need_param_grads is false
// (attacks only need the input adjoint).
inline LayerGrad conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& upstream,
                                 bool need_param_grads = true) {
    detail::require_rank(input, 3, "conv2d input");
    detail::require_rank(kernels, 4, "conv2d kernels");
    detail::require_rank(upstream, 3, "conv2d upstream");
    const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t cout = kernels.dim(0);
    if (kernels.dim(1) != cin || kernels.dim(2) != 3 || kernels.dim(3) != 3) {
        throw DimensionError("conv2d_backward: kernels " + shape_string(kernels.shape()) + " vs input " +
                             shape_string(input.shape()));
    }
    if (upstream.shape() != Shape{cout, h, w}) {
        throw DimensionError("conv2d_backward: upstream " + shape_string(upstream.shape()) +
                             " does not match forward output");
    }
    const std::size_t pw = w + 2, ph = h + 2;

    std::vector<float> dpad(cin * ph * pw, 0.0f);
    for (std::size_t co = 0; co < cout; ++co) {
        const float* up_plane = upstream.data() + co * h * w;
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const float* k = kernels.data() + (co * cin + ci) * 9;
            float* dplane = dpad.data() + ci * ph * pw;
            for (std::size_t ky = 0; ky < 3; ++ky) {
                for (std::size_t kx = 0; kx < 3; ++kx) {
                    const float wv = k[ky * 3 + kx];
                    for (std::size_t y = 0; y < h; ++y) {
                        const float* up = up_plane + y * w;
                        float* dst = dplane + (y + ky) * pw + kx;
                        for (std::size_t x = 0; x < w; ++x) dst[x] += wv * up[x];
                    }
                }
            }
        }
    }

    LayerGrad g;
    g.input_grad = Tensor(input.shape());
    for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t y = 0; y < h; ++y) {
            const float* src = dpad.data() + (ci * ph + y + 1) * pw + 1;
            std::copy(src, src + w, g.input_grad.data() + (ci * h + y) * w);
        }
    }
    if (!need_param_grads) return g;

    const auto pad = detail::pad1(input);
    Tensor dk(kernels.shape());
    Tensor db({cout});
    for (std::size_t co = 0; co < cout; ++co) {
        const float* up_plane = upstream.data() + co * h * w;
        float bsum = 0.0f;
        for (std::size_t i = 0; i < h * w; ++i) bsum += up_plane[i];
        db[co] = bsum;
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const float* src_plane = pad.data() + ci * ph * pw;
            float* k = dk.data() + (co * cin + ci) * 9;
            for (std::size_t ky = 0; ky < 3; ++ky) {
                for (std::size_t kx = 0; kx < 3; ++kx) {
                    float acc = 0.0f;
                    for (std::size_t y = 0; y < h; ++y) {
                        const float* src = src_plane + (y + ky) * pw + kx;
                        const float* up = up_plane + y * w;
                        for (std::size_t x = 0; x < w; ++x) acc += up[x] * src[x];
                    }
                    k[ky * 3 + kx] = acc;
                }
            }
        }
    }
    g.param_grads.push_back(std::move(dk));
    g.param_grads.push_back(std::move(db));
    return g;
}

struct PoolResult {
    Tensor output;
    // Flat input index of each window's winner, one per output cell.
    std::vector<std::uint32_t> argmax;
};

// Ties go to the first cell of the window in row-major order.
inline PoolResult maxpool2x2_forward(const Tensor& input) {
    detail::require_rank(input, 3, "maxpool input");
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw DimensionError("maxpool2x2 needs even spatial dims, got " + shape_string(input.shape()));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    PoolResult r{Tensor({c, oh, ow}), std::vector<std::uint32_t>(c * oh * ow)};
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                std::size_t best = (ci * h + 2 * y) * w + 2 * x;
                const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
                for (auto idx : cand) {
                    if (input[idx] > input[best]) best = idx;
                }
                const std::size_t o = (ci * oh + y) * ow + x;
                r.output[o] = input[best];
                r.argmax[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return r;
}

inline Tensor maxpool2x2_backward(const std::vector<std::uint32_t>& argmax, const Tensor& upstream) {
    detail::require_rank(upstream, 3, "maxpool upstream");
    if (argmax.size() != upstream.size()) {
        throw DimensionError("maxpool2x2_backward: " + std::to_string(argmax.size()) + " indices vs upstream " +
                             shape_string(upstream.shape()));
    }
    Tensor g({upstream.dim(0), upstream.dim(1) * 2, upstream.dim(2) * 2});
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        if (argmax[i] >= g.size()) throw DimensionError("maxpool2x2_backward: index out of range");
        g[argmax[i]] += upstream[i];
    }
    return g;
}

inline Tensor relu_forward(const Tensor& input) {
    Tensor out = input;
    for (auto& v : out.values()) v = v > 0.0f ? v : 0.0f;
    return out;
}

// Subgradient 0 at exactly 0.
inline Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
    require_same_shape(input, upstream, "relu_backward");
    Tensor g(upstream.shape());
    for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0f ? upstream[i] : 0.0f;
    return g;
}

// Input of any shape is treated as its flattened vector.
inline Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    detail::require_rank(weights, 2, "dense weights");
    const std::size_t m = weights.dim(0), n = weights.dim(1);
    if (input.size() != n) {
        throw DimensionError("dense: input length " + std::to_string(input.size()) + " vs weights " +
                             shape_string(weights.shape()));
    }
    if (bias.size() != m) throw DimensionError("dense: bias length mismatch");
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        const float* row = weights.data() + i * n;
        float acc = 0.0f;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * input[j];
        out[i] = acc + bias[i];
    }
    return out;
}

inline LayerGrad dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream,
                                bool need_param_grads = true) {
    detail::require_rank(weights, 2, "dense weights");
    const std::size_t m = weights.dim(0), n = weights.dim(1);
    if (input.size() != n || upstream.size() != m) {
        throw DimensionError("dense_backward: input " + shape_string(input.shape()) + ", upstream " +
                             shape_string(upstream.shape()) + ", weights " + shape_string(weights.shape()));
    }
    LayerGrad g;
    g.input_grad = Tensor(input.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const float u = upstream[i];
        const float* row = weights.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) g.input_grad[j] += row[j] * u;
    }
    if (!need_param_grads) return g;
    Tensor dw({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        float* row = dw.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] = upstream[i] * input[j];
    }
    g.param_grads.push_back(std::move(dw));
    g.param_grads.push_back(Tensor({m}, std::vector<float>(upstream.values().begin(), upstream.values().end())));
    return g;
}

struct LossGrad {
    float loss = 0.0f;
    Tensor logit_grad;
};

// Loss is evaluated in double with max-subtraction; the true-class gradient is
// formed as minus the sum of the other probabilities so saturated logits
// still yield a nonzero, exactly balanced gradient.
inline LossGrad softmax_cross_entropy(const Tensor& logits, std::size_t true_class) {
    const std::size_t k = logits.size();
    if (k < 2) throw DimensionError("softmax_cross_entropy needs at least 2 logits");
    if (true_class >= k) throw DimensionError("softmax_cross_entropy: class index out of range");

    std::size_t top = 0;
    for (std::size_t i = 1; i < k; ++i) {
        if (logits[i] > logits[top]) top = i;
    }
    const double mx = logits[top];
    std::vector<double> e(k);
    double tail = 0.0;  // sum over non-max entries
    for (std::size_t i = 0; i < k; ++i) {
        e[i] = std::exp(double(logits[i]) - mx);
        if (i != top) tail += e[i];
    }
    const double log_z = std::log1p(tail);  // log sum exp(l - mx)
    const double sum = 1.0 + tail;

    LossGrad r;
    r.loss = static_cast<float>(log_z - (double(logits[true_class]) - mx));
    r.logit_grad = Tensor({k});
    double others = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        if (i == true_class) continue;
        const double p = e[i] / sum;
        r.logit_grad[i] = static_cast<float>(p);
        others += p;
    }
    r.logit_grad[true_class] = static_cast<float>(-others);
    return r;
}

inline std::vector<double> softmax(const Tensor& logits) {
    double mx = -std::numeric_limits<double>::infinity();
    for (auto v : logits.values()) mx = std::max(mx, double(v));
    std::vector<double> p(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::exp(double(logits[i]) - mx));
    for (auto& v : p) v /= s;
    return p;
}

} // namespace tlab::ops
