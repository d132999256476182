#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "adam.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "model.hpp"

namespace tlab {

struct TrainConfig {
    std::size_t epochs = 10;
    float learning_rate = 1e-4f;
    std::size_t batch_train = 32;
    std::size_t batch_val = 32;
    std::size_t batch_test = 100;
    std::uint64_t seed = 0;
};

// Fraction of the given split the model labels correctly.
inline double accuracy(const TrainedModel& model, const Dataset& data, Split split) {
    const auto idx = data.indices(split);
    if (idx.empty()) return 0.0;
    std::size_t correct = 0;
    for (auto i : idx) {
        const auto& p = data.patches[i];
        if (predicted_class(model, to_unit(p)) == p.label) ++correct;
    }
    return double(correct) / double(idx.size());
}

// Mini-batch Adam on mean cross-entropy. Initialization and shuffling are
// drawn from config.seed, so the result is a pure function of its inputs.
inline TrainedModel train(const ModelSpec& spec, const Dataset& data, const TrainConfig& config) {
    if (config.epochs == 0 || config.batch_train == 0 || config.batch_val == 0 || config.batch_test == 0 ||
        !(config.learning_rate > 0.0f)) {
        throw ConfigError("training configuration values must be positive");
    }
    if (data.input_side != spec.input_side) {
        throw DimensionError("dataset side " + std::to_string(data.input_side) + " does not match model side " +
                             std::to_string(spec.input_side));
    }
    const auto counts = split_counts(data);
    for (auto s : {Split::train, Split::validation}) {
        const auto& c = counts[static_cast<std::size_t>(s)];
        if (c[0] == 0 || c[1] == 0) {
            throw DataError(std::string(split_name(s)) + " split must contain both classes");
        }
    }

    TrainedModel model = TrainedModel::initialize(spec, config.seed);
    auto& params = model.mutable_weights();
    AdamState state = AdamState::zeros_like(params);
    AdamConfig adam;
    adam.learning_rate = config.learning_rate;

    std::vector<Tensor> unit;
    std::vector<std::uint8_t> labels;
    for (auto i : data.indices(Split::train)) {
        unit.push_back(to_unit(data.patches[i]));
        labels.push_back(data.patches[i].label);
    }
    std::vector<std::size_t> order(unit.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

    std::vector<Tensor> grad_sum;
    for (const auto& p : params) grad_sum.emplace_back(p.shape());

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_train) {
            const std::size_t end = std::min(order.size(), start + config.batch_train);
            for (auto& g : grad_sum) g.fill(0.0f);
            for (std::size_t k = start; k < end; ++k) {
                const auto trace = model.forward(unit[order[k]]);
                const auto lg = ops::softmax_cross_entropy(trace.logits, labels[order[k]]);
                const auto g = model.backward(trace, lg.logit_grad, true);
                for (std::size_t p = 0; p < grad_sum.size(); ++p) {
                    auto dst = grad_sum[p].values();
                    auto src = g.params[p].values();
                    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                }
            }
            const float scale = 1.0f / static_cast<float>(end - start);
            for (auto& g : grad_sum) {
                for (auto& v : g.values()) v *= scale;
            }
            adam_step(params, grad_sum, state, adam);
        }
    }

    model.mutable_meta() = {data.id, config.seed, config.epochs, accuracy(model, data, Split::validation)};
    return model;
}

} // namespace tlab
