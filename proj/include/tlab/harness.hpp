#pragma once

// Transferability scenarios: sample inputs the source model gets right,
// attack (and optionally boost) them on the source, then score the results
// on both source and target. Reports follow the column layout
// SN | TN | Attack Type | PSNR | L1 dist | Max dist | ASR(SN) | ASR(TN).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "attacks.hpp"
#include "boost.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "parallel.hpp"

namespace tlab {

enum class ScenarioKind { cross_training, cross_model, cross_model_and_training };

inline ScenarioKind parse_scenario_kind(const std::string& s) {
    if (s == "cross-training") return ScenarioKind::cross_training;
    if (s == "cross-model") return ScenarioKind::cross_model;
    if (s == "cross-model-training" || s == "cross-model-and-training") return ScenarioKind::cross_model_and_training;
    throw UsageError("unknown scenario '" + s + "' (cross-training, cross-model, cross-model-training)");
}

inline const char* scenario_name(ScenarioKind k) {
    switch (k) {
    case ScenarioKind::cross_training: return "cross-training";
    case ScenarioKind::cross_model: return "cross-model";
    case ScenarioKind::cross_model_and_training: return "cross-model-training";
    }
    return "?";
}

struct Endpoint {
    std::string model_id;    // registry key, also the SN/TN column label
    Arch arch = Arch::qub2;
    std::string dataset_id;  // dataset the model was trained on
};

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::cross_model;
    Endpoint source;
    Endpoint target;
    std::vector<AttackConfig> attack_sweep;
    std::optional<BoostConfig> boost;
    std::size_t n_samples = 500;
    std::string pool_dataset_id;  // test inputs; empty means the source's dataset
    std::size_t workers = 1;

    void validate() const {
        const bool same_arch = source.arch == target.arch;
        const bool same_data = source.dataset_id == target.dataset_id;
        switch (kind) {
        case ScenarioKind::cross_training:
            if (!same_arch || same_data) {
                throw ConfigError("cross-training needs the same architecture and different training datasets");
            }
            break;
        case ScenarioKind::cross_model:
            if (same_arch || !same_data) {
                throw ConfigError("cross-model needs different architectures and the same training dataset");
            }
            break;
        case ScenarioKind::cross_model_and_training:
            if (same_arch || same_data) {
                throw ConfigError("cross-model-training needs different architectures and different datasets");
            }
            break;
        }
        if (n_samples == 0) throw ConfigError("n_samples must be positive");
        for (const auto& a : attack_sweep) a.validate();
        if (boost) boost->validate();
    }
};

struct ModelRegistry {
    std::map<std::string, TrainedModel> models;
    std::map<std::string, Dataset> datasets;

    const TrainedModel& model(const std::string& id) const {
        const auto it = models.find(id);
        if (it == models.end()) throw RegistryError("no checkpoint registered for '" + id + "'");
        return it->second;
    }
    const Dataset& dataset(const std::string& id) const {
        const auto it = datasets.find(id);
        if (it == datasets.end()) throw RegistryError("no dataset registered for '" + id + "'");
        return it->second;
    }
};

struct ReportRow {
    std::string sn;
    std::string tn;
    std::string attack;
    double psnr = 0.0;  // mean over samples with finite PSNR
    double l1 = 0.0;
    double maxdist = 0.0;
    double asr_sn = 0.0;
    double asr_tn = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    // Diagnostics, not part of the rendered schema.
    std::size_t psnr_excluded = 0;
    std::size_t reached_delta = 0;
    std::size_t attack_failed = 0;
};

struct TransferReport {
    ScenarioKind kind = ScenarioKind::cross_model;
    std::optional<BoostConfig> boost;
    std::vector<ReportRow> rows;
};

// Seeded, class-stratified draw of n test inputs the source labels correctly.
inline std::vector<std::size_t> sample_pool(const TrainedModel& source, const Dataset& data, std::size_t n,
                                            std::uint64_t seed) {
    std::array<std::vector<std::size_t>, 2> correct;
    for (auto i : data.indices(Split::test)) {
        const auto& p = data.patches[i];
        if (predicted_class(source, to_unit(p)) == p.label) correct[p.label].push_back(i);
    }
    const std::size_t total = correct[0].size() + correct[1].size();
    if (total < n) {
        throw DataError("need " + std::to_string(n) + " correctly classified test inputs, only " +
                        std::to_string(total) + " available (shortfall " + std::to_string(n - total) + ")");
    }
    std::size_t n0 = static_cast<std::size_t>(std::llround(double(n) * double(correct[0].size()) / double(total)));
    n0 = std::clamp(n0, n > correct[1].size() ? n - correct[1].size() : 0, std::min(n, correct[0].size()));
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < 2; ++c) {
        std::shuffle(correct[c].begin(), correct[c].end(), rng);
        const std::size_t take = c == 0 ? n0 : n - n0;
        out.insert(out.end(), correct[c].begin(), correct[c].begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline TransferReport run_scenario(const ScenarioSpec& spec, const ModelRegistry& registry, std::uint64_t seed) {
    spec.validate();
    const TrainedModel& sn = registry.model(spec.source.model_id);
    const TrainedModel& tn = registry.model(spec.target.model_id);
    if (sn.spec().arch != spec.source.arch || tn.spec().arch != spec.target.arch) {
        throw ConfigError("registered checkpoint architecture does not match the scenario endpoints");
    }
    const Dataset& data =
        registry.dataset(spec.pool_dataset_id.empty() ? spec.source.dataset_id : spec.pool_dataset_id);
    const auto pool = sample_pool(sn, data, spec.n_samples, seed);

    std::vector<Tensor> inputs;
    std::vector<std::size_t> labels;
    for (auto i : pool) {
        inputs.push_back(to_unit(data.patches[i]));
        labels.push_back(data.patches[i].label);
    }

    TransferReport report;
    report.kind = spec.kind;
    report.boost = spec.boost;
    for (std::size_t a = 0; a < spec.attack_sweep.size(); ++a) {
        const std::size_t n = inputs.size();
        std::vector<Tensor> finals(n);
        std::vector<char> reached(n, 0), failed(n, 0);
        parallel_for(n, spec.workers, [&](std::size_t i) {
            AttackConfig cfg = spec.attack_sweep[a];
            cfg.seed = mix_seed(seed, a, i);
            auto res = attack_with_escalation(sn, inputs[i], labels[i], cfg);
            if (spec.boost) {
                auto b = boost_attack_result(sn, inputs[i], labels[i], res, *spec.boost);
                reached[i] = b.reached_delta;
                failed[i] = b.attack_failed;
                finals[i] = std::move(b.boosted);
            } else {
                failed[i] = !res.success;
                finals[i] = std::move(res.adversarial);
            }
        });

        ReportRow row;
        row.sn = spec.source.model_id;
        row.tn = spec.target.model_id;
        row.attack = spec.attack_sweep[a].describe();
        row.n = n;
        row.seed = seed;
        std::vector<DistortionStats> dist;
        for (std::size_t i = 0; i < n; ++i) dist.push_back(distortion(inputs[i], finals[i]));
        const auto mp = mean_psnr(dist);
        row.psnr = mp.mean_db;
        row.psnr_excluded = mp.excluded;
        for (const auto& d : dist) {
            row.l1 += d.l1_mean / double(n);
            row.maxdist += d.max_abs / double(n);
        }
        row.asr_sn = asr(transfer_success(sn, std::span<const Tensor>(finals), labels));
        row.asr_tn = asr(transfer_success(tn, std::span<const Tensor>(finals), labels));
        for (std::size_t i = 0; i < n; ++i) {
            row.reached_delta += reached[i] ? 1 : 0;
            row.attack_failed += failed[i] ? 1 : 0;
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

// The attack rows of the standard report tables. DeepFool is opt-in.
inline std::vector<AttackConfig> default_sweep(bool with_deepfool = false) {
    std::vector<AttackConfig> out;
    for (auto kind : {AttackKind::ifgsm, AttackKind::fgsm}) {
        for (float eps : {0.1f, 0.01f, 0.001f}) {
            auto c = AttackConfig::defaults(kind);
            c.epsilon = eps;
            out.push_back(c);
        }
    }
    for (float theta : {0.1f, 0.01f}) {
        auto c = AttackConfig::defaults(AttackKind::jsma);
        c.theta = theta;
        out.push_back(c);
    }
    out.push_back(AttackConfig::defaults(AttackKind::lbfgs));
    out.push_back(AttackConfig::defaults(AttackKind::pgd));
    out.push_back(AttackConfig::defaults(AttackKind::cw));
    if (with_deepfool) out.push_back(AttackConfig::defaults(AttackKind::deepfool));
    return out;
}

namespace detail {

inline AttackKind parse_attack_kind(std::string s) {
    s = lower(s);
    if (s == "fgsm") return AttackKind::fgsm;
    if (s == "ifgsm" || s == "i-fgsm" || s == "bim") return AttackKind::ifgsm;
    if (s == "pgd") return AttackKind::pgd;
    if (s == "jsma") return AttackKind::jsma;
    if (s == "lbfgs" || s == "l-bfgs") return AttackKind::lbfgs;
    if (s == "cw" || s == "cw2" || s == "cw-l2") return AttackKind::cw;
    if (s == "deepfool") return AttackKind::deepfool;
    throw ConfigError("unknown attack kind '" + s + "'");
}

inline double parse_number(const std::string& s, const std::string& key) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc{} || ptr != end || !std::isfinite(v)) {
        throw ConfigError("value '" + s + "' for '" + key + "' is not a number");
    }
    return v;
}

inline std::size_t parse_count(const std::string& s, const std::string& key) {
    const double v = parse_number(s, key);
    if (v < 1 || v != std::floor(v)) throw ConfigError("'" + key + "' must be a positive integer");
    return static_cast<std::size_t>(v);
}

} // namespace detail

// One sweep record: `kind key=value ...`.
inline AttackConfig parse_attack_line(const std::string& line) {
    std::istringstream in(line);
    std::string kind;
    in >> kind;
    AttackConfig c = AttackConfig::defaults(detail::parse_attack_kind(kind));
    std::string tok;
    while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + tok + "'");
        const std::string key = detail::lower(tok.substr(0, eq));
        const std::string val = tok.substr(eq + 1);
        if (key == "eps" || key == "epsilon") c.epsilon = float(detail::parse_number(val, key));
        else if (key == "steps") c.steps = detail::parse_count(val, key);
        else if (key == "step" || key == "step_size") c.step_size = float(detail::parse_number(val, key));
        else if (key == "theta") c.theta = float(detail::parse_number(val, key));
        else if (key == "budget") c.jsma_budget = float(detail::parse_number(val, key));
        else if (key == "c") c.c = float(detail::parse_number(val, key));
        else if (key == "kappa") c.kappa = float(detail::parse_number(val, key));
        else if (key == "lr") c.cw_learning_rate = float(detail::parse_number(val, key));
        else if (key == "iters") {
            const auto n = detail::parse_count(val, key);
            c.cw_steps = c.lbfgs_max_iter = c.deepfool_max_iter = n;
        } else if (key == "overshoot") c.deepfool_overshoot = float(detail::parse_number(val, key));
        else throw ConfigError("unknown attack parameter '" + key + "'");
    }
    c.validate();
    return c;
}

// Blank lines and lines starting with '#' are skipped.
inline std::vector<AttackConfig> parse_attack_sweep(std::istream& in) {
    std::vector<AttackConfig> out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        try {
            out.push_back(parse_attack_line(t));
        } catch (const ConfigError& e) {
            throw ParseError(e.what(), row, 1);
        }
    }
    return out;
}

// "eps=0.1,delta=1.0[,step=..][,iters=..]"
inline BoostConfig parse_boost(const std::string& text) {
    BoostConfig b;
    std::istringstream in(text);
    std::string tok;
    bool have_eps = false, have_delta = false;
    while (std::getline(in, tok, ',')) {
        tok = detail::trim(tok);
        if (tok.empty()) continue;
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw UsageError("boost setting '" + tok + "' is not key=value");
        const std::string key = detail::lower(tok.substr(0, eq));
        const std::string val = tok.substr(eq + 1);
        try {
            if (key == "eps" || key == "epsilon") {
                b.epsilon = float(detail::parse_number(val, key));
                have_eps = true;
            } else if (key == "delta") {
                b.delta = float(detail::parse_number(val, key));
                have_delta = true;
            } else if (key == "step") {
                b.step_size = float(detail::parse_number(val, key));
            } else if (key == "iters" || key == "max_iter") {
                b.max_iter = detail::parse_count(val, key);
            } else {
                throw UsageError("unknown boost setting '" + key + "'");
            }
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }
    if (!have_eps || !have_delta) throw UsageError("boost settings need eps and delta");
    try {
        b.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    return b;
}

enum class ReportFormat { csv, markdown };

inline ReportFormat parse_report_format(const std::string& s) {
    if (s == "csv") return ReportFormat::csv;
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    throw UsageError("unknown report format '" + s + "' (csv or markdown)");
}

inline constexpr const char* kReportCsvHeader = "sn,tn,attack,psnr,l1,maxdist,asr_sn,asr_tn,n,seed";

namespace detail {

inline std::string fixed(double v, int decimals) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

} // namespace detail

inline std::string render_report(const TransferReport& report, ReportFormat format) {
    std::string out;
    if (format == ReportFormat::csv) {
        out = std::string(kReportCsvHeader) + "\n";
        for (const auto& r : report.rows) {
            out += detail::csv_field(r.sn) + "," + detail::csv_field(r.tn) + "," + detail::csv_field(r.attack) + "," +
                   detail::fixed(r.psnr, 2) + "," + detail::fixed(r.l1, 2) + "," + detail::fixed(r.maxdist, 2) + "," +
                   detail::fixed(r.asr_sn, 4) + "," + detail::fixed(r.asr_tn, 4) + "," + std::to_string(r.n) + "," +
                   std::to_string(r.seed) + "\n";
        }
        return out;
    }
    out = "| SN | TN | Attack Type | PSNR | L1 dist | Max dist | ASR(SN) | ASR(TN) |\n"
          "|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : report.rows) {
        out += "| " + r.sn + " | " + r.tn + " | " + r.attack + " | " + detail::fixed(r.psnr, 2) + " | " +
               detail::fixed(r.l1, 2) + " | " + detail::fixed(r.maxdist, 2) + " | " + detail::fixed(r.asr_sn, 4) +
               " | " + detail::fixed(r.asr_tn, 4) + " |\n";
    }
    return out;
}

inline TransferReport parse_report_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != kReportCsvHeader) {
        throw ParseError("report CSV header must be exactly '" + std::string(kReportCsvHeader) + "'", 1, 1);
    }
    TransferReport report;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(detail::trim(line));
        if (cells.size() != 10) throw ParseError("expected 10 report columns", row_no, cells.size());
        ReportRow r;
        r.sn = cells[0];
        r.tn = cells[1];
        r.attack = cells[2];
        auto num = [&](std::size_t col) {
            const auto& s = cells[col];
            if (s == "inf") return std::numeric_limits<double>::infinity();
            try {
                return detail::parse_number(s, "column");
            } catch (const ConfigError&) {
                throw ParseError("non-numeric report cell '" + s + "'", row_no, col + 1);
            }
        };
        r.psnr = num(3);
        r.l1 = num(4);
        r.maxdist = num(5);
        r.asr_sn = num(6);
        r.asr_tn = num(7);
        r.n = static_cast<std::size_t>(num(8));
        const auto& sc = cells[9];
        const auto [ptr, ec] = std::from_chars(sc.data(), sc.data() + sc.size(), r.seed);
        if (sc.empty() || ec != std::errc{} || ptr != sc.data() + sc.size()) {
            throw ParseError("bad seed '" + sc + "'", row_no, 10);
        }
        report.rows.push_back(std::move(r));
    }
    return report;
}

inline constexpr double kTransferThreshold = 0.40;

struct RowComparison {
    std::string sn, tn, attack;
    double baseline_asr_tn = 0.0;
    double boosted_asr_tn = 0.0;
    double delta = 0.0;
    bool transfers = false;  // boosted ASR(TN) strictly above 0.40
    bool improved = false;   // boosted ASR(TN) strictly above baseline
};

inline std::vector<RowComparison> compare_reports(const TransferReport& baseline, const TransferReport& boosted) {
    using Key = std::tuple<std::string, std::string, std::string>;
    std::map<Key, const ReportRow*> base;
    for (const auto& r : baseline.rows) base[{r.sn, r.tn, r.attack}] = &r;
    std::set<Key> matched;
    std::vector<std::string> unmatched;
    std::vector<RowComparison> out;
    for (const auto& r : boosted.rows) {
        const Key k{r.sn, r.tn, r.attack};
        const auto it = base.find(k);
        if (it == base.end()) {
            unmatched.push_back("boosted:" + r.sn + "/" + r.tn + "/" + r.attack);
            continue;
        }
        matched.insert(k);
        RowComparison c{r.sn, r.tn, r.attack, it->second->asr_tn, r.asr_tn, r.asr_tn - it->second->asr_tn,
                        r.asr_tn > kTransferThreshold, r.asr_tn > it->second->asr_tn};
        out.push_back(std::move(c));
    }
    for (const auto& [k, r] : base) {
        if (!matched.count(k)) unmatched.push_back("baseline:" + r->sn + "/" + r->tn + "/" + r->attack);
    }
    if (!unmatched.empty()) {
        std::string msg = "report rows do not match:";
        for (const auto& u : unmatched) msg += " " + u;
        throw DataError(msg);
    }
    return out;
}

} // namespace tlab
