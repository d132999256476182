#pragma once

// The seven evasion attacks. Each takes a classifier, a [0,1]-scaled input
// the classifier labels correctly, and its true label, and returns the
// perturbed input with a success flag re-checked against the classifier.
// An input that is already misclassified comes back unchanged with
// success = true.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adam.hpp"
#include "classifier.hpp"
#include "errors.hpp"
#include "tensor.hpp"

namespace tlab {

enum class AttackKind { fgsm, ifgsm, pgd, jsma, lbfgs, cw, deepfool };

enum class AttackNorm { linf, l0, l2 };

inline const char* attack_label(AttackKind k) {
    switch (k) {
    case AttackKind::fgsm: return "FGSM";
    case AttackKind::ifgsm: return "I-FGSM";
    case AttackKind::pgd: return "PGD";
    case AttackKind::jsma: return "JSMA";
    case AttackKind::lbfgs: return "LBFGS";
    case AttackKind::cw: return "CW";
    case AttackKind::deepfool: return "DeepFool";
    }
    return "?";
}

inline AttackNorm attack_norm(AttackKind k) {
    switch (k) {
    case AttackKind::fgsm:
    case AttackKind::ifgsm:
    case AttackKind::pgd: return AttackNorm::linf;
    case AttackKind::jsma: return AttackNorm::l0;
    default: return AttackNorm::l2;
    }
}

struct AttackConfig {
    AttackKind kind = AttackKind::ifgsm;

    float epsilon = 0.1f;   // fgsm, ifgsm, pgd: L-inf budget on the [0,1] scale
    std::size_t steps = 10; // ifgsm, pgd
    float step_size = 0.0f; // pgd; 0 means epsilon / 10

    float theta = 0.1f;       // jsma per-selection change
    float jsma_budget = 0.1f; // jsma fraction of pixels that may change

    float c = 100.0f;           // cw trade-off constant
    float kappa = 0.0f;         // cw confidence
    std::size_t cw_steps = 1000;
    float cw_learning_rate = 1e-2f;

    float lbfgs_c_init = 1.0f;
    std::size_t lbfgs_doublings = 10;
    std::size_t lbfgs_bisections = 10;
    std::size_t lbfgs_max_iter = 100;

    std::size_t deepfool_max_iter = 50;
    float deepfool_overshoot = 0.02f;

    std::uint64_t seed = 0;  // pgd random start

    // Toolkit defaults for kinds the caller does not parameterize.
    static AttackConfig defaults(AttackKind kind) {
        AttackConfig c;
        c.kind = kind;
        if (kind == AttackKind::pgd) {
            c.epsilon = 0.03f;
            c.steps = 40;
        }
        return c;
    }

    void validate() const {
        auto unit = [](float v, const char* name) {
            if (!(v > 0.0f && v <= 1.0f)) throw ConfigError(std::string(name) + " must be in (0,1]");
        };
        switch (kind) {
        case AttackKind::fgsm:
        case AttackKind::ifgsm:
        case AttackKind::pgd:
            unit(epsilon, "epsilon");
            if (steps == 0) throw ConfigError("steps must be positive");
            if (step_size < 0.0f) throw ConfigError("step size must be non-negative");
            break;
        case AttackKind::jsma:
            unit(theta, "theta");
            unit(jsma_budget, "jsma budget");
            break;
        case AttackKind::cw:
            if (!(c > 0.0f) || kappa < 0.0f || cw_steps == 0 || !(cw_learning_rate > 0.0f)) {
                throw ConfigError("cw needs c > 0, kappa >= 0, positive steps and learning rate");
            }
            break;
        case AttackKind::lbfgs:
            if (!(lbfgs_c_init > 0.0f) || lbfgs_max_iter == 0) throw ConfigError("lbfgs caps must be positive");
            break;
        case AttackKind::deepfool:
            if (deepfool_max_iter == 0 || deepfool_overshoot < 0.0f) throw ConfigError("deepfool caps invalid");
            break;
        }
    }

    std::string describe() const;
};

namespace detail {

inline std::string fmt_param(float v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", double(v));
    return buf;
}

} // namespace detail

inline std::string AttackConfig::describe() const {
    const std::string name = attack_label(kind);
    const auto base = defaults(kind);
    switch (kind) {
    case AttackKind::fgsm: return name + " eps=" + detail::fmt_param(epsilon);
    case AttackKind::ifgsm:
        return name + " eps=" + detail::fmt_param(epsilon) + (steps != 10 ? " steps=" + std::to_string(steps) : "");
    case AttackKind::pgd:
        if (epsilon == base.epsilon && steps == base.steps && step_size == 0.0f) return name + " default";
        return name + " eps=" + detail::fmt_param(epsilon) + " steps=" + std::to_string(steps);
    case AttackKind::jsma: return name + " theta=" + detail::fmt_param(theta);
    case AttackKind::cw: return name + " c=" + detail::fmt_param(c);
    case AttackKind::lbfgs:
    case AttackKind::deepfool: return name + " default";
    }
    return name;
}

struct AttackResult {
    Tensor adversarial;
    bool success = false;
    std::size_t iterations_used = 0;
    AttackNorm norm = AttackNorm::linf;
};

namespace detail {

inline float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

inline float clip01(float v) { return std::clamp(v, 0.0f, 1.0f); }

// One signed step of size `step`, projected onto the L-inf ball of radius
// eps around `origin`, then onto [0,1].
inline void signed_step(Tensor& x, const Tensor& grad, const Tensor& origin, float step, float eps) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const float v = std::clamp(x[i] + step * sign(grad[i]), origin[i] - eps, origin[i] + eps);
        x[i] = clip01(v);
    }
}

template <Classifier C>
AttackResult finish(const C& model, Tensor adv, std::size_t y, std::size_t iters, AttackKind kind) {
    const bool ok = misclassifies(model, adv, y);
    return {std::move(adv), ok, iters, attack_norm(kind)};
}

template <Classifier C>
std::optional<AttackResult> skip_if_misclassified(const C& model, const Tensor& x, std::size_t y, AttackKind kind) {
    if (misclassifies(model, x, y)) return AttackResult{x, true, 0, attack_norm(kind)};
    return std::nullopt;
}

} // namespace detail

template <Classifier C>
AttackResult fgsm(const C& model, const Tensor& x, std::size_t y, const AttackConfig& cfg) {
    if (auto r = detail::skip_if_misclassified(model, x, y, AttackKind::fgsm)) return *r;
    const Tensor g = input_gradient(model, x, y);
    Tensor adv = x;
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] = detail::clip01(x[i] + cfg.epsilon * detail::sign(g[i]));
    return detail::finish(model, std::move(adv), y, 1, AttackKind::fgsm);
}

// Iterative FGSM with step epsilon / steps; stops at the first success.
template <Classifier C>
AttackResult ifgsm(const C& model, const Tensor& x, std::size_t y, const AttackConfig& cfg) {
    if (auto r = detail::skip_if_misclassified(model, x, y, AttackKind::ifgsm)) return *r;
    const float step = cfg.epsilon / static_cast<float>(cfg.steps);
    Tensor adv = x;
    std::size_t it = 0;
    while (it < cfg.steps) {
        detail::signed_step(adv, input_gradient(model, adv, y), x, step, cfg.epsilon);
        ++it;
        if (misclassifies(model, adv, y)) break;
    }
    return detail::finish(model, std::move(adv), y, it, AttackKind::ifgsm);
}

// Uniform random start in the epsilon ball, then projected signed steps.
template <Classifier C>
AttackResult pgd(const C& model, const Tensor& x, std::size_t y, const AttackConfig& cfg) {
    if (auto r = detail::skip_if_misclassified(model, x, y, AttackKind::pgd)) return *r;
    const float step = cfg.step_size > 0.0f ? cfg.step_size : cfg.epsilon / 10.0f;
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<float> start(-cfg.epsilon, cfg.epsilon);
    Tensor adv = x;
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] = detail::clip01(x[i] + start(rng));
    std::size_t it = 0;
    while (it < cfg.steps && !misclassifies(model, adv, y)) {
        detail::signed_step(adv, input_gradient(model, adv, y), x, step, cfg.epsilon);
        ++it;
    }
    return detail::finish(model, std::move(adv), y, it, AttackKind::pgd);
}

// Best pixel pair under the saliency rule: with a = alpha_p + alpha_q
// (target-logit gradient) and b = beta_p + beta_q (gradient of the other
// logits), require a > 0 and b < 0 and maximize -a * b. Only admissible
// pixels are considered; a pair may include at most `max_new` pixels that
// are not yet marked in `modified`. Ties go to the lexicographically
// smallest (p, q) with p < q.
inline std::optional<std::pair<std::size_t, std::size_t>> select_saliency_pair(
    std::span<const float> alpha, std::span<const float> beta, std::span<const std::uint8_t> admissible,
    std::span<const std::uint8_t> modified, std::size_t max_new) {
    const std::size_t n = alpha.size();
    if (beta.size() != n || admissible.size() != n || modified.size() != n) {
        throw DimensionError("select_saliency_pair: span lengths differ");
    }
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < n; ++i) {
        if (admissible[i] && (modified[i] || max_new > 0)) cand.push_back(i);
    }
    std::optional<std::pair<std::size_t, std::size_t>> best;
    double best_score = 0.0;
    for (std::size_t a = 0; a < cand.size(); ++a) {
        const std::size_t p = cand[a];
        const double ap = alpha[p], bp = beta[p];
        const std::size_t new_p = modified[p] ? 0 : 1;
        for (std::size_t b = a + 1; b < cand.size(); ++b) {
            const std::size_t q = cand[b];
            if (new_p + (modified[q] ? 0 : 1) > max_new) continue;
            const double sa = ap + double(alpha[q]);
            const double sb = bp + double(beta[q]);
            if (!(sa > 0.0 && sb < 0.0)) continue;
            const double score = -sa * sb;
            if (!best || score > best_score) {
                best = std::pair{p, q};
                best_score = score;
            }
        }
    }
    return best;
}

// Pixel-pair saliency map attack that only increases pixels. A selected
// pixel moves by theta (clipped at 1) and may be selected again until it
// saturates; at most floor(jsma_budget * n) distinct pixels change.
template <Classifier C>
AttackResult jsma(const C& model, const Tensor& x, std::size_t y, const AttackConfig& cfg) {
    if (auto r = detail::skip_if_misclassified(model, x, y, AttackKind::jsma)) return *r;
    const std::size_t n = x.size();
    const auto budget = static_cast<std::size_t>(std::floor(double(cfg.jsma_budget) * double(n) + 1e-9));
    const auto per_pixel = static_cast<std::size_t>(std::ceil(1.0 / double(cfg.theta) - 1e-9));
    const std::size_t max_iter = budget * per_pixel / 2 + 1;

    Tensor adv = x;
    std::vector<std::uint8_t> modified(n, 0), admissible(n, 0);
    std::size_t n_modified = 0;
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        const Tensor z = model.logits(adv);
        if (argmax_class(z) != y) break;
        const std::size_t target = strongest_other(z, y);
        Tensor e_target(z.shape()), e_rest(z.shape(), 1.0f);
        e_target[target] = 1.0f;
        e_rest[target] = 0.0f;
        const Tensor alpha = model.input_vjp(adv, e_target);
        const Tensor beta = model.input_vjp(adv, e_rest);
        for (std::size_t i = 0; i < n; ++i) admissible[i] = adv[i] < 1.0f ? 1 : 0;
        const auto pair = select_saliency_pair(alpha.values(), beta.values(), admissible, modified,
                                               budget - n_modified);
        if (!pair) break;
        for (auto p : {pair->first, pair->second}) {
            adv[p] = std::min(1.0f, adv[p] + cfg.theta);
            if (!modified[p]) {
                modified[p] = 1;
                ++n_modified;
            }
        }
    }
    return detail::finish(model, std::move(adv), y, it, AttackKind::jsma);
}

namespace detail {

inline double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
    return s;
}

struct BoxObjective {
    double value = 0.0;
    Tensor grad;
};

// Projected limited-memory BFGS on the box [0,1]^n with Armijo backtracking
// along the projected path.
template <class Eval>
Tensor minimize_box_lbfgs(Eval&& eval, Tensor z, std::size_t max_iter, std::size_t memory = 10) {
    auto cur = eval(z);
    std::vector<Tensor> s_hist, y_hist;
    std::vector<double> rho;
    const std::size_t n = z.size();
    for (std::size_t it = 0; it < max_iter; ++it) {
        Tensor pg = cur.grad;
        double pg_max = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if ((z[i] <= 0.0f && pg[i] > 0.0f) || (z[i] >= 1.0f && pg[i] < 0.0f)) pg[i] = 0.0f;
            pg_max = std::max(pg_max, double(std::fabs(pg[i])));
        }
        if (pg_max < 1e-6) break;

        Tensor d = pg;
        if (s_hist.empty()) {
            const float scale = static_cast<float>(0.1 / pg_max);
            for (auto& v : d.values()) v *= -scale;
        } else {
            std::vector<double> alpha(s_hist.size());
            for (std::size_t k = s_hist.size(); k-- > 0;) {
                alpha[k] = rho[k] * dot(s_hist[k], d);
                for (std::size_t i = 0; i < n; ++i) d[i] -= static_cast<float>(alpha[k]) * y_hist[k][i];
            }
            const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
            for (auto& v : d.values()) v *= static_cast<float>(gamma);
            for (std::size_t k = 0; k < s_hist.size(); ++k) {
                const double b = rho[k] * dot(y_hist[k], d);
                for (std::size_t i = 0; i < n; ++i) d[i] += static_cast<float>(alpha[k] - b) * s_hist[k][i];
            }
            for (auto& v : d.values()) v = -v;
            for (std::size_t i = 0; i < n; ++i) {
                if (pg[i] == 0.0f) d[i] = 0.0f;
            }
            if (dot(d, pg) >= 0.0) {
                s_hist.clear();
                y_hist.clear();
                rho.clear();
                const float scale = static_cast<float>(0.1 / pg_max);
                for (std::size_t i = 0; i < n; ++i) d[i] = -pg[i] * scale;
            }
        }

        bool accepted = false;
        Tensor z_new(z.shape());
        BoxObjective next;
        double step = 1.0;
        for (int ls = 0; ls < 30; ++ls, step *= 0.5) {
            for (std::size_t i = 0; i < n; ++i) z_new[i] = clip01(z[i] + static_cast<float>(step) * d[i]);
            next = eval(z_new);
            double decrease = 0.0;
            for (std::size_t i = 0; i < n; ++i) decrease += double(cur.grad[i]) * (double(z_new[i]) - double(z[i]));
            if (next.value <= cur.value + 1e-4 * decrease && decrease < 0.0) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;

        Tensor s(z.shape()), yv(z.shape());
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = z_new[i] - z[i];
            yv[i] = next.grad[i] - cur.grad[i];
        }
        const double sy = dot(s, yv);
        if (sy > 1e-12) {
            if (s_hist.size() == memory) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho.erase(rho.begin());
            }
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            rho.push_back(1.0 / sy);
        }
        const double change = cur.value - next.value;
        z = z_new;
        cur = std::move(next);
        if (change < 1e-9 * std::max(1.0, std::fabs(cur.value))) break;
    }
    return z;
}

} // namespace detail

// Box-constrained L-BFGS attack: minimize ||z - x||^2 + c * CE(z, target)
// and search for the smallest c that flips the label (doubling from
// lbfgs_c_init, then bisection). Returns the closest successful point.
template <Classifier C>
AttackResult lbfgs_attack(const C& model, const Tensor& x, std::size_t y, const AttackConfig& cfg) {
    if (auto r = detail::skip_if_misclassified(model, x, y, AttackKind::lbfgs)) return *r;
    const std::size_t target = strongest_other(model.logits(x), y);
    std::size_t solves = 0;

    auto solve = [&](double c) {
        ++solves;
        auto eval = [&](const Tensor& z) {
            const auto lg = ops::softmax_cross_entropy(model.logits(z), target);
            detail::BoxObjective o;
            o.grad = model.input_vjp(z, lg.logit_grad);
            double dist = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double d = double(z[i]) - double(x[i]);
                dist += d * d;
                o.grad[i] = static_cast<float>(2.0 * d + c * double(o.grad[i]));
            }
            o.value = dist + c * double(lg.loss);
            return o;
        };
        return detail::minimize_box_lbfgs(eval, x, cfg.lbfgs_max_iter);
    };

    std::optional<Tensor> best;
    Tensor last = x;
    double lo = 0.0, hi = 0.0;
    double c = cfg.lbfgs_c_init;
    for (std::size_t d = 0; d <= cfg.lbfgs_doublings; ++d, c *= 2.0) {
        last = solve(c);
        if (misclassifies(model, last, y)) {
            best = last;
            hi = c;
            break;
        }
        lo = c;
    }
    if (!best) return detail::finish(model, std::move(last), y, solves, AttackKind::lbfgs);

    double best_l2 = l2_distance(*best, x);
    for (std::size_t b = 0; b < cfg.lbfgs_bisections; ++b) {
        const double mid = 0.5 * (lo + hi);
        Tensor z = solve(mid);
        if (misclassifies(model, z, y)) {
            hi = mid;
            const double l2 = l2_distance(z, x);
            if (l2 < best_l2) {
                best_l2 = l2;
                best = std::move(z);
            }
        } else {
            lo = mid;
        }
    }
    return detail::finish(model, std::move(*best), y, solves, AttackKind::lbfgs);
}

// Carlini-Wagner L2: x' = (tanh(w) + 1) / 2, Adam on
// ||x' - x||^2 + c * max(z_true - max_other z + kappa, 0).
// |w| is held at or below 7 so x' stays strictly inside (0,1) in float.
template <Classifier C>
AttackResult cw_l2(const C& model, const Tensor& x, std::size_t y, const AttackConfig& cfg) {
    if (auto r = detail::skip_if_misclassified(model, x, y, AttackKind::cw)) return *r;
    constexpr float w_max = 7.0f;
    std::vector<Tensor> w{Tensor(x.shape())};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double u = (2.0 * double(x[i]) - 1.0) * (1.0 - 1e-6);
        w[0][i] = std::clamp(static_cast<float>(std::atanh(u)), -w_max, w_max);
    }
    auto to_image = [&](const Tensor& wt) {
        Tensor img(x.shape());
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = 0.5f * (std::tanh(wt[i]) + 1.0f);
        return img;
    };

    AdamState state = AdamState::zeros_like(w);
    AdamConfig adam{cfg.cw_learning_rate, 0.9f, 0.999f, 1e-8f};
    Tensor img = to_image(w[0]);
    std::size_t it = 0;
    for (; it < cfg.cw_steps; ++it) {
        const Tensor z = model.logits(img);
        if (argmax_class(z) != y && margin_of(z, y) >= cfg.kappa) break;
        const std::size_t other = strongest_other(z, y);
        std::vector<Tensor> grad{Tensor(x.shape())};
        Tensor dimg(x.shape());
        if (z[y] - z[other] + cfg.kappa > 0.0f) {
            Tensor dz(z.shape());
            dz[y] = cfg.c;
            dz[other] = -cfg.c;
            dimg = model.input_vjp(img, dz);
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            const float t = std::tanh(w[0][i]);
            grad[0][i] = (dimg[i] + 2.0f * (img[i] - x[i])) * 0.5f * (1.0f - t * t);
        }
        adam_step(w, grad, state, adam);
        for (auto& v : w[0].values()) v = std::clamp(v, -w_max, w_max);
        img = to_image(w[0]);
    }
    return detail::finish(model, std::move(img), y, it, AttackKind::cw);
}

// DeepFool: repeatedly step to the linearized nearest boundary; the total
// perturbation is scaled by (1 + overshoot).
template <Classifier C>
AttackResult deepfool(const C& model, const Tensor& x, std::size_t y, const AttackConfig& cfg) {
    if (auto r = detail::skip_if_misclassified(model, x, y, AttackKind::deepfool)) return *r;
    Tensor total(x.shape());
    Tensor adv = x;
    std::size_t it = 0;
    for (; it < cfg.deepfool_max_iter; ++it) {
        const Tensor z = model.logits(adv);
        if (argmax_class(z) != y) break;
        double best_ratio = std::numeric_limits<double>::infinity();
        Tensor best_w;
        double best_f = 0.0;
        for (std::size_t k = 0; k < z.size(); ++k) {
            if (k == y) continue;
            Tensor dz(z.shape());
            dz[k] = 1.0f;
            dz[y] = -1.0f;
            Tensor wk = model.input_vjp(adv, dz);
            const double norm = std::sqrt(detail::dot(wk, wk));
            if (norm == 0.0) continue;
            const double f = double(z[k]) - double(z[y]);
            const double ratio = std::fabs(f) / norm;
            if (ratio < best_ratio) {
                best_ratio = ratio;
                best_w = std::move(wk);
                best_f = f;
            }
        }
        if (best_w.empty()) break;
        const double scale = std::fabs(best_f) / detail::dot(best_w, best_w);
        for (std::size_t i = 0; i < x.size(); ++i) {
            total[i] += static_cast<float>(scale * double(best_w[i]));
            adv[i] = detail::clip01(x[i] + (1.0f + cfg.deepfool_overshoot) * total[i]);
        }
    }
    return detail::finish(model, std::move(adv), y, it, AttackKind::deepfool);
}

template <Classifier C>
AttackResult run_attack(const C& model, const Tensor& x, std::size_t y, const AttackConfig& cfg) {
    switch (cfg.kind) {
    case AttackKind::fgsm: return fgsm(model, x, y, cfg);
    case AttackKind::ifgsm: return ifgsm(model, x, y, cfg);
    case AttackKind::pgd: return pgd(model, x, y, cfg);
    case AttackKind::jsma: return jsma(model, x, y, cfg);
    case AttackKind::lbfgs: return lbfgs_attack(model, x, y, cfg);
    case AttackKind::cw: return cw_l2(model, x, y, cfg);
    case AttackKind::deepfool: return deepfool(model, x, y, cfg);
    }
    throw ConfigError("unknown attack kind");
}

} // namespace tlab
