#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace tlab {

struct AdamConfig {
    float learning_rate = 1e-4f;
    // "momentum 0.99" is read as the first-moment decay.
    float beta1 = 0.99f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t step = 0;

    static AdamState zeros_like(const std::vector<Tensor>& params) {
        AdamState s;
        for (const auto& p : params) {
            s.m.emplace_back(p.shape());
            s.v.emplace_back(p.shape());
        }
        return s;
    }
};

// Bias-corrected Adam, elementwise, in place.
inline void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
                      const AdamConfig& cfg = {}) {
    if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
        throw DimensionError("adam_step: parameter, gradient and state counts differ");
    }
    ++state.step;
    const double t = double(state.step);
    const float c1 = static_cast<float>(1.0 - std::pow(double(cfg.beta1), t));
    const float c2 = static_cast<float>(1.0 - std::pow(double(cfg.beta2), t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(params[i], grads[i], "adam_step");
        auto p = params[i].values();
        auto g = grads[i].values();
        auto m = state.m[i].values();
        auto v = state.v[i].values();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0f - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0f - cfg.beta2) * g[j] * g[j];
            const float mhat = m[j] / c1;
            const float vhat = v[j] / c2;
            p[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

} // namespace tlab
