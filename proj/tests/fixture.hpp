#pragma once

// Trained desk-scale models shared by the slower tests. Built once per
// process and cached.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "tlab/tlab.hpp"

namespace tlab::fx {

inline const Dataset& fixture_dataset() {
    static const Dataset d = [] {
        auto ds = synth_dataset(2024, 500, 4.0, 16);
        ds.id = "synth";
        return ds;
    }();
    return d;
}

inline const TrainedModel& fixture_model(Arch arch) {
    static const TrainedModel q1 = train(build_spec(Arch::qub1, 16, 8), fixture_dataset(), TrainConfig{.seed = 11});
    static const TrainedModel q2 = train(build_spec(Arch::qub2, 16, 8), fixture_dataset(), TrainConfig{.seed = 11});
    return arch == Arch::qub1 ? q1 : q2;
}

// Up to n test inputs the model classifies correctly, in dataset order.
inline std::vector<std::pair<Tensor, std::size_t>> correct_samples(const TrainedModel& m, std::size_t n) {
    std::vector<std::pair<Tensor, std::size_t>> out;
    const auto& d = fixture_dataset();
    for (auto i : d.indices(Split::test)) {
        auto x = to_unit(d.patches[i]);
        if (!misclassifies(m, x, d.patches[i].label)) out.emplace_back(std::move(x), d.patches[i].label);
        if (out.size() == n) break;
    }
    return out;
}

// Central finite difference of f at x along coordinate i.
template <class F>
double central_difference(F&& f, Tensor x, std::size_t i, float h = 1e-3f) {
    const float v = x[i];
    x[i] = v + h;
    const double up = f(x);
    x[i] = v - h;
    const double down = f(x);
    return (up - down) / (2.0 * double(h));
}

// Relative agreement |a - n| <= rel * max(|a|, |n|, 1).
inline bool grad_close(double analytic, double numeric, double rel = 1e-3) {
    return std::fabs(analytic - numeric) <= rel * std::max({std::fabs(analytic), std::fabs(numeric), 1.0});
}

// True when both inputs produce the same ReLU on/off pattern and the same
// pooling winners, i.e. the network is a single smooth piece between them.
inline bool same_piece(const TrainedModel& m, const Tensor& a, const Tensor& b) {
    const auto ta = m.forward(a);
    const auto tb = m.forward(b);
    for (std::size_t i = 0; i < m.spec().layers.size(); ++i) {
        const auto kind = m.spec().layers[i].kind;
        if (kind == LayerKind::relu) {
            const auto& ia = ta.inputs[i];
            const auto& ib = tb.inputs[i];
            for (std::size_t j = 0; j < ia.size(); ++j) {
                if ((ia[j] > 0.0f) != (ib[j] > 0.0f)) return false;
            }
        } else if (kind == LayerKind::pool && ta.argmax[i] != tb.argmax[i]) {
            return false;
        }
    }
    return true;
}

} // namespace tlab::fx
