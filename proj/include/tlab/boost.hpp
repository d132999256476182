#pragma once

// Margin boosting: take an adversarial example that already crosses the
// source model's decision boundary and push it further into the wrong
// class, until the source margin reaches delta, while staying inside the
// L-inf ball of radius epsilon around the ORIGINAL sample.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "attacks.hpp"
#include "classifier.hpp"
#include "errors.hpp"
#include "tensor.hpp"

namespace tlab {

struct BoostConfig {
    float epsilon = 0.1f;   // L-inf budget around the original, [0,1] scale
    float delta = 1.0f;     // required source margin, logit units
    float step_size = 0.0f; // 0 means epsilon / 20
    std::size_t max_iter = 100;

    float effective_step() const { return step_size > 0.0f ? step_size : epsilon / 20.0f; }

    void validate() const {
        if (!(epsilon > 0.0f)) throw ConfigError("boost epsilon must be positive");
        if (!(delta >= 0.0f)) throw ConfigError("boost delta must be non-negative");
        const float s = effective_step();
        if (!(s > 0.0f && s <= epsilon)) throw ConfigError("boost step size must be in (0, epsilon]");
        if (max_iter == 0) throw ConfigError("boost max_iter must be at least 1");
    }

    std::string describe() const {
        char buf[96];
        std::snprintf(buf, sizeof buf, "eps=%g;delta=%g;step=%g;iters=%zu", double(epsilon), double(delta),
                      double(effective_step()), max_iter);
        return buf;
    }
};

struct BoostResult {
    Tensor boosted;
    bool reached_delta = false;
    bool attack_failed = false;
    std::size_t iterations = 0;
    float initial_margin = 0.0f;
    float final_margin = 0.0f;
    float final_linf = 0.0f;
};

inline constexpr float kBudgetSlack = 1e-6f;

namespace detail {

// Signed ascent on the margin with projection onto the epsilon ball around
// `original` and onto [0,1]. A step that lowers the margin is rejected and
// halves the step; once a step of size step/16 is rejected the search ends.
template <Classifier C>
BoostResult ascend_margin(const C& source, const Tensor& original, const Tensor& start, std::size_t y,
                          const BoostConfig& cfg) {
    BoostResult r;
    r.boosted = start;
    float m = margin(source, start, y);
    r.initial_margin = m;
    float step = cfg.effective_step();
    const float min_step = step / 16.0f;
    Tensor cand(start.shape());
    while (m < cfg.delta && r.iterations < cfg.max_iter) {
        const Tensor g = margin_gradient(source, r.boosted, y);
        if (std::all_of(g.values().begin(), g.values().end(), [](float v) { return v == 0.0f; })) break;
        for (std::size_t i = 0; i < cand.size(); ++i) {
            const float v = detail::clip01(r.boosted[i] + step * detail::sign(g[i]));
            cand[i] = std::clamp(v, original[i] - cfg.epsilon, original[i] + cfg.epsilon);
        }
        ++r.iterations;
        const float mc = margin(source, cand, y);
        if (mc >= m) {
            r.boosted = cand;
            m = mc;
        } else {
            if (step <= min_step) break;
            step *= 0.5f;
        }
    }
    // Fresh forward pass; the loop value is not trusted.
    r.final_margin = margin(source, r.boosted, y);
    r.reached_delta = r.final_margin >= cfg.delta;
    r.final_linf = linf_distance(original, r.boosted);
    return r;
}

} // namespace detail

// Pushes an adversarial example deeper into the wrong class until the source
// margin reaches delta, staying within epsilon (L-inf) of the original.
template <Classifier C>
BoostResult boost_margin(const C& source, const Tensor& original, const Tensor& adversarial, std::size_t y,
                         const BoostConfig& cfg) {
    cfg.validate();
    require_same_shape(original, adversarial, "boost_margin");
    const float m = margin(source, adversarial, y);
    if (!(m > 0.0f)) {
        throw ContractError("boost_margin: adversarial input is not misclassified by the source (margin " +
                            std::to_string(m) + ")");
    }
    if (linf_distance(original, adversarial) > cfg.epsilon + kBudgetSlack) {
        throw ContractError("boost_margin: adversarial input lies outside the epsilon ball");
    }
    return detail::ascend_margin(source, original, adversarial, y, cfg);
}

// The attack with up to three escalation rounds that double its iteration
// budgets (and reseed PGD's start).
template <Classifier C>
AttackResult attack_with_escalation(const C& source, const Tensor& x, std::size_t y, const AttackConfig& attack,
                                    std::size_t rounds = 3) {
    AttackConfig cfg = attack;
    AttackResult best = run_attack(source, x, y, cfg);
    std::size_t used = best.iterations_used;
    for (std::size_t r = 0; r < rounds && !best.success; ++r) {
        cfg.steps *= 2;
        cfg.cw_steps *= 2;
        cfg.lbfgs_max_iter *= 2;
        cfg.deepfool_max_iter *= 2;
        cfg.seed += 0x9e3779b97f4a7c15ULL;
        auto next = run_attack(source, x, y, cfg);
        used += next.iterations_used;
        best = std::move(next);
    }
    best.iterations_used = used;
    return best;
}

// Hands an attack's output to the booster. A candidate outside the boost
// ball (L2 and L0 attacks are not bounded in L-inf) is clipped into it; if
// the clipped point no longer fools the source, the same projected ascent
// runs from there. attack_failed marks samples that end correctly
// classified.
template <Classifier C>
BoostResult boost_attack_result(const C& source, const Tensor& x, std::size_t y, const AttackResult& a,
                                const BoostConfig& boost) {
    boost.validate();
    Tensor cand = a.adversarial;
    if (linf_distance(x, cand) > boost.epsilon + kBudgetSlack) {
        for (std::size_t i = 0; i < cand.size(); ++i) {
            cand[i] = std::clamp(cand[i], x[i] - boost.epsilon, x[i] + boost.epsilon);
        }
    }
    if (a.success && margin(source, cand, y) > 0.0f) return boost_margin(source, x, cand, y, boost);
    auto r = detail::ascend_margin(source, x, cand, y, boost);
    r.attack_failed = !(r.final_margin > 0.0f);
    return r;
}

// Attack until the source is fooled, then deepen with boost_margin.
template <Classifier C>
BoostResult attack_and_boost(const C& source, const Tensor& x, std::size_t y, const AttackConfig& attack,
                             const BoostConfig& boost) {
    boost.validate();
    if (misclassifies(source, x, y)) {
        throw ContractError("attack_and_boost: the source model must classify the input correctly");
    }
    return boost_attack_result(source, x, y, attack_with_escalation(source, x, y, attack), boost);
}

} // namespace tlab
