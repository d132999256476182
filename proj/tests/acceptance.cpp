// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "fixture.hpp"
#include "tlab/tlab.hpp"

using namespace tlab;
using tlab::fx::correct_samples;
using tlab::fx::fixture_dataset;
using tlab::fx::fixture_model;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Tensor random_tensor(std::mt19937_64& rng, Shape s, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> u(lo, hi);
    Tensor t(std::move(s));
    for (auto& v : t.values()) v = u(rng);
    return t;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * b[i];
    return s;
}

// ---- 1 ----------------------------------------------------------------------

Outcome gradient_correctness() {
    Outcome o;
    std::mt19937_64 rng(101);
    const float h = 1e-3f;
    std::size_t conv_n = 0, relu_n = 0, pool_n = 0, dense_n = 0, ce_n = 0, bad = 0;
    auto check = [&](double analytic, double numeric, std::size_t& counter) {
        ++counter;
        if (!fx::grad_close(analytic, numeric)) ++bad;
    };

    // conv: f = <up, conv(x)>; smooth everywhere
    while (conv_n < 100) {
        const auto x = random_tensor(rng, {2, 6, 6});
        const auto k = random_tensor(rng, {3, 2, 3, 3});
        const auto b = random_tensor(rng, {3});
        const auto up = random_tensor(rng, {3, 6, 6});
        const auto g = ops::conv2d_backward(x, k, up, false).input_grad;
        auto f = [&](const Tensor& v) { return dot(up, ops::conv2d_forward(v, k, b)); };
        for (int t = 0; t < 10; ++t) {
            const std::size_t i = rng() % x.size();
            check(g[i], fx::central_difference(f, x, i, h), conv_n);
        }
    }
    // relu: keep |x| clear of the kink
    while (relu_n < 100) {
        auto x = random_tensor(rng, {4, 5, 5});
        const auto up = random_tensor(rng, {4, 5, 5});
        const auto g = ops::relu_backward(x, up);
        auto f = [&](const Tensor& v) { return dot(up, ops::relu_forward(v)); };
        for (int t = 0; t < 10; ++t) {
            const std::size_t i = rng() % x.size();
            if (std::fabs(x[i]) <= 2 * h) continue;
            check(g[i], fx::central_difference(f, x, i, h), relu_n);
        }
    }
    // maxpool: skip windows whose winner changes under the stencil
    while (pool_n < 100) {
        const auto x = random_tensor(rng, {2, 6, 6});
        const auto up = random_tensor(rng, {2, 3, 3});
        const auto fwd = ops::maxpool2x2_forward(x);
        const auto g = ops::maxpool2x2_backward(fwd.argmax, up);
        auto f = [&](const Tensor& v) { return dot(up, ops::maxpool2x2_forward(v).output); };
        for (int t = 0; t < 10; ++t) {
            const std::size_t i = rng() % x.size();
            Tensor a = x, b = x;
            a[i] += h;
            b[i] -= h;
            if (ops::maxpool2x2_forward(a).argmax != fwd.argmax || ops::maxpool2x2_forward(b).argmax != fwd.argmax) {
                continue;
            }
            check(g[i], fx::central_difference(f, x, i, h), pool_n);
        }
    }
    // dense
    while (dense_n < 100) {
        const auto x = random_tensor(rng, {3, 4, 4});
        const auto w = random_tensor(rng, {2, 48});
        const auto b = random_tensor(rng, {2});
        const auto up = random_tensor(rng, {2});
        const auto g = ops::dense_backward(x, w, up, false).input_grad;
        auto f = [&](const Tensor& v) { return dot(up, ops::dense_forward(v, w, b)); };
        for (int t = 0; t < 10; ++t) {
            const std::size_t i = rng() % x.size();
            check(g[i], fx::central_difference(f, x, i, h), dense_n);
        }
    }
    // softmax cross-entropy w.r.t. logits
    while (ce_n < 100) {
        const auto z = random_tensor(rng, {2}, -5.0f, 5.0f);
        const std::size_t y = rng() % 2;
        const auto g = ops::softmax_cross_entropy(z, y).logit_grad;
        auto f = [&](const Tensor& v) { return ops::softmax_cross_entropy(v, y).loss; };
        for (std::size_t i = 0; i < 2; ++i) check(g[i], fx::central_difference(f, z, i, h), ce_n);
    }
    o.require(bad == 0, std::to_string(bad) + " layer points disagree");

    // whole-model input gradients at side 16
    std::size_t model_n = 0, model_bad = 0;
    for (auto arch : {Arch::qub1, Arch::qub2}) {
        const auto m = TrainedModel::initialize(build_spec(arch, 16, 8), 7);
        const auto x = random_tensor(rng, {1, 16, 16}, 0.0f, 1.0f);
        std::size_t done = 0;
        for (int t = 0; t < 1000 && done < 50; ++t) {
            const std::size_t cls = t % 2;
            const std::size_t i = rng() % x.size();
            Tensor a = x, b = x;
            a[i] += h;
            b[i] -= h;
            if (!fx::same_piece(m, a, b)) continue;
            const auto g = input_gradient(m, x, cls);
            auto f = [&](const Tensor& v) { return ops::softmax_cross_entropy(m.logits(v), cls).loss; };
            ++done;
            if (!fx::grad_close(g[i], fx::central_difference(f, x, i, h))) ++model_bad;
        }
        model_n += done;
    }
    o.require(model_n == 100 && model_bad == 0, std::to_string(model_bad) + " of " + std::to_string(model_n) +
                                                     " model input-gradient points disagree");
    o.detail = o.detail.empty() ? "conv/relu/pool/dense/softmax 100 points each, QUB1+QUB2 input 50 each" : o.detail;
    return o;
}

// ---- 2 ----------------------------------------------------------------------

Tensor conv_oracle(const Tensor& in, const Tensor& k, const Tensor& b) {
    const std::size_t ci = in.dim(0), H = in.dim(1), W = in.dim(2), co = k.dim(0);
    Tensor out({co, H, W});
    for (std::size_t o = 0; o < co; ++o)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double s = b[o];
                for (std::size_t c = 0; c < ci; ++c)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const long yy = long(y) + dy, xx = long(x) + dx;
                            if (yy < 0 || xx < 0 || yy >= long(H) || xx >= long(W)) continue;
                            s += double(in.at(c, std::size_t(yy), std::size_t(xx))) *
                                 k[((o * ci + c) * 3 + std::size_t(dy + 1)) * 3 + std::size_t(dx + 1)];
                        }
                out.at(o, y, x) = float(s);
            }
    return out;
}

Outcome oracle_equivalence() {
    Outcome o;
    std::mt19937_64 rng(202);
    double conv_err = 0;
    for (int t = 0; t < 20; ++t) {
        const std::size_t ci = 1 + rng() % 4, co = 1 + rng() % 4, s = 2 + rng() % 15;
        const auto in = random_tensor(rng, {ci, s, s});
        const auto k = random_tensor(rng, {co, ci, 3, 3});
        const auto b = random_tensor(rng, {co});
        conv_err = std::max(conv_err, double(linf_distance(ops::conv2d_forward(in, k, b), conv_oracle(in, k, b))));
    }
    o.require(conv_err <= 1e-5, "conv max error " + fmt("%.3g", conv_err));

    double metric_err = 0;
    for (int t = 0; t < 100; ++t) {
        const auto a = random_tensor(rng, {1, 8, 8}, 0.0f, 1.0f);
        const auto b = random_tensor(rng, {1, 8, 8}, 0.0f, 1.0f);
        long double sq = 0, l1 = 0, mx = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const long double d = fabsl((long double)b[i] * 255 - (long double)a[i] * 255);
            sq += d * d;
            l1 += d;
            mx = std::max(mx, d);
        }
        const auto s = distortion(a, b);
        metric_err = std::max({metric_err, std::fabs(s.psnr_db - double(10 * log10l(65025.0L * 64 / sq))),
                               std::fabs(s.l1_mean - double(l1 / 64)), std::fabs(s.max_abs - double(mx))});
    }
    o.require(metric_err <= 1e-6, "metric max error " + fmt("%.3g", metric_err));

    std::size_t mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<float> al(16), be(16);
        std::vector<std::uint8_t> adm(16), mod(16);
        for (std::size_t i = 0; i < 16; ++i) {
            al[i] = float(int(rng() % 7) - 3);
            be[i] = float(int(rng() % 7) - 3);
            adm[i] = rng() % 6 != 0;
            mod[i] = rng() % 4 == 0;
        }
        const std::size_t max_new = rng() % 3;
        std::optional<std::pair<std::size_t, std::size_t>> want;
        double best = -1;
        for (std::size_t p = 0; p < 16; ++p)
            for (std::size_t q = 0; q < 16; ++q) {
                if (p == q || !adm[p] || !adm[q] || std::size_t(!mod[p]) + std::size_t(!mod[q]) > max_new) continue;
                const double a = double(al[p]) + al[q], b = double(be[p]) + be[q];
                if (!(a > 0 && b < 0)) continue;
                const std::pair<std::size_t, std::size_t> key{std::min(p, q), std::max(p, q)};
                if (-a * b > best || (-a * b == best && key < *want)) {
                    best = -a * b;
                    want = key;
                }
            }
        if (select_saliency_pair(al, be, adm, mod, max_new) != want) ++mismatches;
    }
    o.require(mismatches == 0, std::to_string(mismatches) + " JSMA pair mismatches");
    if (o.pass) o.detail = "conv err " + fmt("%.2g", conv_err) + ", metric err " + fmt("%.2g", metric_err) +
                           ", JSMA 1000/1000 exact";
    return o;
}

// ---- 3 ----------------------------------------------------------------------

Outcome fixture_training() {
    Outcome o;
    const double a1 = accuracy(fixture_model(Arch::qub1), fixture_dataset(), Split::test);
    const double a2 = accuracy(fixture_model(Arch::qub2), fixture_dataset(), Split::test);
    o.require(a1 >= 0.95, "QUB1 accuracy " + fmt("%.4f", a1));
    o.require(a2 >= 0.95, "QUB2 accuracy " + fmt("%.4f", a2));
    if (o.pass) o.detail = "QUB1 test acc " + fmt("%.4f", a1) + ", QUB2 test acc " + fmt("%.4f", a2);
    return o;
}

// ---- 4 ----------------------------------------------------------------------

std::vector<AttackConfig> default_attacks() {
    std::vector<AttackConfig> v;
    for (auto k : {AttackKind::ifgsm, AttackKind::fgsm}) {
        auto c = AttackConfig::defaults(k);
        c.epsilon = 0.1f;
        v.push_back(c);
    }
    v.push_back(AttackConfig::defaults(AttackKind::pgd));
    auto j = AttackConfig::defaults(AttackKind::jsma);
    j.theta = 0.1f;
    v.push_back(j);
    v.push_back(AttackConfig::defaults(AttackKind::lbfgs));
    v.push_back(AttackConfig::defaults(AttackKind::cw));
    v.push_back(AttackConfig::defaults(AttackKind::deepfool));
    return v;
}

Outcome source_asr() {
    Outcome o;
    const auto& m = fixture_model(Arch::qub2);
    const auto samples = correct_samples(m, 100);
    o.require(samples.size() == 100, "only " + std::to_string(samples.size()) + " correct samples");
    std::string rates;
    for (auto c : default_attacks()) {
        std::vector<bool> ok;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            c.seed = i;
            const auto r = run_attack(m, samples[i].first, samples[i].second, c);
            ok.push_back(r.success && misclassifies(m, r.adversarial, samples[i].second));
        }
        const double rate = asr(ok);
        o.require(rate >= 0.99, c.describe() + " ASR " + fmt("%.2f", rate));
        rates += (rates.empty() ? "" : ", ") + c.describe() + " " + fmt("%.2f", rate);
    }
    if (o.pass) o.detail = "QUB2 fixture, 100 samples: " + rates;
    return o;
}

// ---- 5 ----------------------------------------------------------------------

Outcome boost_contracts() {
    Outcome o;
    const auto& m = fixture_model(Arch::qub2);
    const auto samples = correct_samples(m, 200);
    o.require(samples.size() == 200, "only " + std::to_string(samples.size()) + " correct samples");
    BoostConfig bc;
    bc.epsilon = 0.1f;
    bc.delta = 1.0f;
    BoostConfig zero = bc;
    zero.delta = 0.0f;
    const auto attacks = default_attacks();
    std::size_t over_budget = 0, unsound = 0, reached = 0, not_identity = 0, identity_checked = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& [x, y] = samples[i];
        auto ac = attacks[i % 4];  // I-FGSM, FGSM, PGD, JSMA
        ac.seed = i;
        const auto r = attack_and_boost(m, x, y, ac, bc);
        if (linf_distance(r.boosted, x) > bc.epsilon + 1e-6) ++over_budget;
        if (r.reached_delta) {
            ++reached;
            if (!(margin(m, r.boosted, y) >= bc.delta)) ++unsound;
        }
        const auto a = run_attack(m, x, y, ac);
        if (a.success && linf_distance(a.adversarial, x) <= bc.epsilon) {
            ++identity_checked;
            const auto z = boost_margin(m, x, a.adversarial, y, zero);
            if (!(z.boosted == a.adversarial) || z.iterations != 0) ++not_identity;
        }
    }
    o.require(over_budget == 0, std::to_string(over_budget) + " samples over budget");
    o.require(unsound == 0, std::to_string(unsound) + " reached_delta samples fail re-verification");
    o.require(not_identity == 0 && identity_checked > 0, std::to_string(not_identity) + " delta=0 outputs changed");
    if (o.pass) {
        o.detail = "200 samples in budget, " + std::to_string(reached) + " reached delta and re-verified, " +
                   std::to_string(identity_checked) + " delta=0 identities";
    }
    return o;
}

// ---- 6 ----------------------------------------------------------------------

Outcome transfer_improvement() {
    Outcome o;
    std::vector<AttackConfig> sweep;
    for (auto k : {AttackKind::ifgsm, AttackKind::fgsm, AttackKind::pgd}) {
        auto c = AttackConfig::defaults(k);
        c.epsilon = 0.1f;
        sweep.push_back(c);
    }
    auto j = AttackConfig::defaults(AttackKind::jsma);
    j.theta = 0.1f;
    sweep.push_back(j);
    const BoostConfig boost{0.1f, 1.0f};
    constexpr int kSeeds = 5;

    // The trained fixture pair; each seed reshuffles the 200-sample draw
    // and reseeds the attacks.
    ModelRegistry reg;
    reg.models["QUB1"] = fixture_model(Arch::qub1);
    reg.models["QUB2"] = fixture_model(Arch::qub2);
    reg.datasets["synth"] = fixture_dataset();

    // [direction][attack]
    double base[2][4] = {}, boosted[2][4] = {};
    for (int s = 1; s <= kSeeds; ++s) {
        for (int d = 0; d < 2; ++d) {
            ScenarioSpec spec;
            spec.kind = ScenarioKind::cross_model;
            spec.source = d == 0 ? Endpoint{"QUB2", Arch::qub2, "synth"} : Endpoint{"QUB1", Arch::qub1, "synth"};
            spec.target = d == 0 ? Endpoint{"QUB1", Arch::qub1, "synth"} : Endpoint{"QUB2", Arch::qub2, "synth"};
            spec.attack_sweep = sweep;
            spec.n_samples = 200;
            const auto plain = run_scenario(spec, reg, std::uint64_t(s));
            spec.boost = boost;
            const auto deep = run_scenario(spec, reg, std::uint64_t(s));
            for (std::size_t a = 0; a < 4; ++a) {
                base[d][a] += plain.rows[a].asr_tn / kSeeds;
                boosted[d][a] += deep.rows[a].asr_tn / kSeeds;
            }
        }
    }
    std::string summary;
    for (int d = 0; d < 2; ++d) {
        const std::string dir = d == 0 ? "QUB2->QUB1" : "QUB1->QUB2";
        int above = 0;
        summary += (d ? "; " : "") + dir + ":";
        for (std::size_t a = 0; a < 4; ++a) {
            o.require(boosted[d][a] >= base[d][a], dir + " " + sweep[a].describe() + " boosted " +
                                                       fmt("%.3f", boosted[d][a]) + " < baseline " +
                                                       fmt("%.3f", base[d][a]));
            above += boosted[d][a] > kTransferThreshold;
            summary += " " + std::string(attack_label(sweep[a].kind)) + " " + fmt("%.3f", base[d][a]) + "->" +
                       fmt("%.3f", boosted[d][a]);
        }
        o.require(above >= 3, dir + ": only " + std::to_string(above) + " attacks above 0.40");
    }
    if (o.pass) o.detail = "seed-mean ASR(TN) baseline->boosted, " + summary;
    else o.detail += " [" + summary + "]";
    return o;
}

// ---- 7 ----------------------------------------------------------------------

Outcome linear_closed_forms() {
    Outcome o;
    // FGSM: z0 = x0 - 2 x1 + 1, z1 = 0 at x = (0.5, 0.5), y = 0
    Tensor w({2, 2});
    w[0] = 1.0f;
    w[1] = -2.0f;
    const LinearClassifier lin(w, Tensor::vector({1.0f, 0.0f}));
    auto fc = AttackConfig::defaults(AttackKind::fgsm);
    fc.epsilon = 0.1f;
    const auto f = fgsm(lin, Tensor::vector({0.5f, 0.5f}), 0, fc);
    const double fgsm_err = std::max(std::fabs(f.adversarial[0] - 0.4), std::fabs(f.adversarial[1] - 0.6));
    o.require(fgsm_err <= 1e-4, "FGSM error " + fmt("%.3g", fgsm_err));

    // DeepFool on a random linear binary model
    std::mt19937_64 rng(707);
    double df_err = 0;
    std::size_t df_cases = 0;
    while (df_cases < 20) {
        const auto wr = random_tensor(rng, {2, 16});
        const LinearClassifier m(wr, Tensor::vector({0.0f, 0.0f}));
        const Tensor x({16}, 0.5f);
        const auto z = m.logits(x);
        const std::size_t y = argmax_class(z), k = 1 - y;
        double ww = 0;
        for (std::size_t i = 0; i < 16; ++i) ww += std::pow(double(wr[k * 16 + i]) - wr[y * 16 + i], 2);
        const double dist = std::fabs(double(z[k]) - z[y]) / std::sqrt(ww);
        if (1.02 * dist > 0.4) continue;
        ++df_cases;
        const auto r = deepfool(m, x, y, AttackConfig::defaults(AttackKind::deepfool));
        df_err = std::max(df_err, std::fabs(l2_distance(r.adversarial, x) - 1.02 * dist));
        o.require(r.iterations_used == 1 && r.success, "DeepFool did not converge in one iteration");
    }
    o.require(df_err <= 1e-4, "DeepFool distance error " + fmt("%.3g", df_err));

    // boost on m(x) = x - 0.4 from x' = 0.5 (m = 0.1) to delta 0.5: analytic 0.9
    Tensor w1({2, 1});
    w1[1] = 1.0f;
    const LinearClassifier line(w1, Tensor::vector({0.0f, -0.4f}));
    BoostConfig bc{1.0f, 0.5f, 0.0625f, 100};
    const auto b = boost_margin(line, Tensor::vector({0.3f}), Tensor::vector({0.5f}), 0, bc);
    const double overshoot = b.boosted[0] - 0.9;
    o.require(b.reached_delta && overshoot >= -1e-4 && overshoot <= bc.step_size + 1e-4,
              "boost landed at " + fmt("%.6f", b.boosted[0]));
    BoostConfig grid{1.0f, 0.5f, 0.0625f, 100};
    const LinearClassifier line2(w1, Tensor::vector({0.0f, -0.375f}));
    const auto b2 = boost_margin(line2, Tensor::vector({0.3f}), Tensor::vector({0.5f}), 0, grid);
    o.require(std::fabs(b2.boosted[0] - 0.875) <= 1e-4, "boost grid case landed at " + fmt("%.6f", b2.boosted[0]));
    if (o.pass) {
        o.detail = "FGSM err " + fmt("%.2g", fgsm_err) + ", DeepFool err " + fmt("%.2g", df_err) +
                   ", boost " + fmt("%.4f", b.boosted[0]) + " (analytic 0.9 + <1 step), " + fmt("%.4f", b2.boosted[0]) +
                   " (analytic 0.875)";
    }
    return o;
}

// ---- 8 ----------------------------------------------------------------------

Outcome determinism_and_formats() {
    Outcome o;
    const auto d = synth_dataset(808, 100, 4.0, 8);
    const auto spec = build_spec(Arch::qub1, 8, 4);
    const TrainConfig tc{.epochs = 3, .seed = 5};
    const auto c1 = encode_checkpoint(train(spec, d, tc));
    const auto c2 = encode_checkpoint(train(spec, d, tc));
    o.require(c1 == c2, "checkpoints differ between identical runs");
    o.require(encode_checkpoint(decode_checkpoint(c1)) == c1, "checkpoint round-trip not bit-exact");
    const auto ds = encode_dataset(d);
    o.require(encode_dataset(decode_dataset(ds)) == ds && decode_dataset(ds) == d, "dataset round-trip");

    auto rejects = [](auto decode, std::vector<std::uint8_t> bytes, std::size_t at) {
        bytes[at] ^= 0x5a;
        try {
            decode(bytes);
        } catch (const FormatError&) {
            return true;
        }
        return false;
    };
    auto dc = [](const std::vector<std::uint8_t>& b) { decode_checkpoint(b); };
    auto dd = [](const std::vector<std::uint8_t>& b) { decode_dataset(b); };
    o.require(rejects(dc, c1, 0) && rejects(dc, c1, c1.size() / 2) && rejects(dc, c1, c1.size() - 1),
              "corrupted checkpoint accepted");
    o.require(rejects(dd, ds, 2) && rejects(dd, ds, ds.size() / 2) && rejects(dd, ds, ds.size() - 2),
              "corrupted dataset accepted");

    ModelRegistry reg;
    reg.models["q1"] = fixture_model(Arch::qub1);
    reg.models["q2"] = fixture_model(Arch::qub2);
    reg.datasets["synth"] = fixture_dataset();
    ScenarioSpec s;
    s.kind = ScenarioKind::cross_model;
    s.source = {"q1", Arch::qub1, "synth"};
    s.target = {"q2", Arch::qub2, "synth"};
    s.attack_sweep = {AttackConfig::defaults(AttackKind::pgd), AttackConfig::defaults(AttackKind::jsma)};
    s.boost = BoostConfig{};
    s.n_samples = 30;
    const auto r1 = render_report(run_scenario(s, reg, 42), ReportFormat::csv);
    s.workers = 2;
    const auto r2 = render_report(run_scenario(s, reg, 42), ReportFormat::csv);
    o.require(r1 == r2, "reports differ between identical runs");
    if (o.pass) o.detail = "checkpoints, datasets and reports byte-identical; corruption rejected";
    return o;
}

// ---- 9 ----------------------------------------------------------------------

Outcome report_fidelity() {
    Outcome o;
    ModelRegistry reg;
    reg.models["q1"] = fixture_model(Arch::qub1);
    reg.models["q2"] = fixture_model(Arch::qub2);
    reg.datasets["synth"] = fixture_dataset();
    ScenarioSpec s;
    s.kind = ScenarioKind::cross_model;
    s.source = {"q2", Arch::qub2, "synth"};
    s.target = {"q1", Arch::qub1, "synth"};
    auto fc = AttackConfig::defaults(AttackKind::ifgsm);
    s.attack_sweep = {fc};
    s.n_samples = 20;
    const auto rep = run_scenario(s, reg, 3);
    const auto md = render_report(rep, ReportFormat::markdown);
    const auto csv = render_report(rep, ReportFormat::csv);
    std::istringstream md_in(md), csv_in(csv);
    std::string md_head, md_rule, md_row, csv_head, csv_row;
    std::getline(md_in, md_head);
    std::getline(md_in, md_rule);
    std::getline(md_in, md_row);
    std::getline(csv_in, csv_head);
    std::getline(csv_in, csv_row);
    o.require(md_head == "| SN | TN | Attack Type | PSNR | L1 dist | Max dist | ASR(SN) | ASR(TN) |",
              "markdown header '" + md_head + "'");
    o.require(csv_head == "sn,tn,attack,psnr,l1,maxdist,asr_sn,asr_tn,n,seed", "CSV header '" + csv_head + "'");

    auto cells = [](const std::string& line, char sep) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, sep)) out.push_back(c);
        return out;
    };
    auto decimals = [](std::string v) {
        while (!v.empty() && v.front() == ' ') v.erase(0, 1);
        while (!v.empty() && v.back() == ' ') v.pop_back();
        const auto dot = v.find('.');
        return dot == std::string::npos ? std::size_t(0) : v.size() - dot - 1;
    };
    const auto mc = cells(md_row, '|');  // leading empty cell from the first '|'
    o.require(mc.size() == 9, "markdown row has " + std::to_string(mc.size()) + " cells");
    if (mc.size() == 9) {
        for (std::size_t i : {4, 5, 6}) o.require(decimals(mc[i]) == 2, "markdown distortion cell '" + mc[i] + "'");
        for (std::size_t i : {7, 8}) o.require(decimals(mc[i]) == 4, "markdown ASR cell '" + mc[i] + "'");
    }
    const auto cc = cells(csv_row, ',');
    o.require(cc.size() == 10, "CSV row has " + std::to_string(cc.size()) + " cells");
    if (cc.size() == 10) {
        for (std::size_t i : {3, 4, 5}) o.require(decimals(cc[i]) == 2, "CSV distortion cell '" + cc[i] + "'");
        for (std::size_t i : {6, 7}) o.require(decimals(cc[i]) == 4, "CSV ASR cell '" + cc[i] + "'");
    }
    TransferReport one;
    one.rows.push_back(rep.rows[0]);
    one.rows[0].asr_tn = 0.9;
    o.require(render_report(one, ReportFormat::markdown).find("| 0.9000 |") != std::string::npos,
              "0.9 not rendered as 0.9000");
    if (o.pass) o.detail = "headers exact; row: " + md_row;
    return o;
}

} // namespace

int main() {
    std::setvbuf(stdout, nullptr, _IONBF, 0);
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "gradient correctness", gradient_correctness},
        {2, "oracle equivalence", oracle_equivalence},
        {3, "fixture training accuracy >= 0.95", fixture_training},
        {4, "source ASR >= 0.99 for all seven attacks", source_asr},
        {5, "boost contracts on 200 samples", boost_contracts},
        {6, "boosted transfer dominates baseline", transfer_improvement},
        {7, "linear closed forms", linear_closed_forms},
        {8, "determinism and file formats", determinism_and_formats},
        {9, "report schema", report_fidelity},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %d: %s (%.1f s) - %s\n", r.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                    r.detail.c_str());
        failed += r.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
