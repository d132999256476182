// tlab: command-line front end.
//
//   tlab synth   --out DATASET --n N --sep S --side P --seed N
//   tlab ingest  --csv PATH --label-col NAME --out DATASET --split 0.6,0.2,0.2 --seed N
//   tlab train   --arch qub1|qub2 --width F --data DATASET --out CKPT --seed N
//   tlab run     --scenario KIND --sn CKPT --tn CKPT --data DATASET [--attacks FILE]
//                [--boost "eps=0.1,delta=1.0"] --n 500 --seed N --out REPORT.csv
//   tlab report  --in REPORT.csv --format markdown|csv
//   tlab compare --baseline A.csv --boosted B.csv
//
// Exit codes: 0 success, 2 usage, 3 data or format error, 4 contract violation.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tlab/tlab.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitContract = 4;

tlab::SplitFractions parse_split(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            v.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw tlab::UsageError("--split value '" + tok + "' is not a number");
        }
    }
    if (v.size() != 3) throw tlab::UsageError("--split needs three comma-separated fractions");
    return {v[0], v[1], v[2]};
}

std::string stem(const std::string& path) { return std::filesystem::path(path).stem().string(); }

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw tlab::DataError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw tlab::DataError("cannot write '" + path + "'");
    out << text;
}

void print_counts(const tlab::Dataset& d) {
    const auto c = tlab::split_counts(d);
    for (auto s : {tlab::Split::train, tlab::Split::validation, tlab::Split::test}) {
        const auto& row = c[static_cast<std::size_t>(s)];
        std::printf("%-10s class0 %zu  class1 %zu\n", tlab::split_name(s), row[0], row[1]);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial transferability toolkit for flow-patch CNN classifiers"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic patch dataset");
    std::string synth_out, synth_split = "0.6,0.2,0.2";
    std::size_t synth_n = 500, synth_side = 16;
    double synth_sep = 4.0;
    std::uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "Output dataset file")->required();
    synth->add_option("--n", synth_n, "Patches per class")->check(CLI::PositiveNumber);
    synth->add_option("--sep", synth_sep, "Class separation in noise standard deviations");
    synth->add_option("--side", synth_side, "Patch side in pixels")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--split", synth_split, "train,validation,test fractions");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Convert a flow-feature CSV into a patch dataset");
    std::string csv_path, label_col, ingest_out, ingest_split = "0.6,0.2,0.2";
    std::uint64_t ingest_seed = 0;
    std::size_t ingest_side = 64;
    ingest->add_option("--csv", csv_path, "Flow-feature CSV with header row")->required();
    ingest->add_option("--label-col", label_col, "Name of the label column")->required();
    ingest->add_option("--out", ingest_out, "Output dataset file")->required();
    ingest->add_option("--split", ingest_split, "train,validation,test fractions");
    ingest->add_option("--seed", ingest_seed, "Split seed");
    ingest->add_option("--side", ingest_side, "Patch side in pixels")->check(CLI::PositiveNumber);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train QUB1 or QUB2 on a dataset");
    std::string arch, train_data, train_out;
    std::size_t width = 64;
    tlab::TrainConfig tcfg;
    train_cmd->add_option("--arch", arch, "qub1 or qub2")->required();
    train_cmd->add_option("--width", width, "Base channel width")->check(CLI::PositiveNumber);
    train_cmd->add_option("--data", train_data, "Dataset file")->required();
    train_cmd->add_option("--out", train_out, "Output checkpoint")->required();
    train_cmd->add_option("--seed", tcfg.seed, "Init and shuffle seed");
    train_cmd->add_option("--epochs", tcfg.epochs, "Epochs")->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", tcfg.learning_rate, "Adam learning rate");
    train_cmd->add_option("--batch", tcfg.batch_train, "Training batch size")->check(CLI::PositiveNumber);

    // run
    auto* run = app.add_subcommand("run", "Run one transferability scenario");
    std::string scenario, sn_path, tn_path, attacks_path, boost_text, run_data, run_out, sn_data_id, tn_data_id;
    std::size_t n_samples = 500, workers = tlab::default_workers();
    std::uint64_t run_seed = 0;
    bool with_deepfool = false;
    run->add_option("--scenario", scenario, "cross-training | cross-model | cross-model-training")->required();
    run->add_option("--sn", sn_path, "Source network checkpoint")->required();
    run->add_option("--tn", tn_path, "Target network checkpoint")->required();
    run->add_option("--data", run_data, "Dataset whose test split supplies the inputs")->required();
    run->add_option("--attacks", attacks_path, "Attack sweep file (default: the standard table sweep)");
    run->add_option("--boost", boost_text, "Margin boost, e.g. \"eps=0.1,delta=1.0\"");
    run->add_option("--n", n_samples, "Samples per attack row")->check(CLI::PositiveNumber);
    run->add_option("--seed", run_seed, "Sampling and attack seed");
    run->add_option("--out", run_out, "Report CSV")->required();
    run->add_option("--sn-data-id", sn_data_id, "Training dataset id of the source (default: --data stem)");
    run->add_option("--tn-data-id", tn_data_id, "Training dataset id of the target (default: --data stem)");
    run->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    run->add_flag("--with-deepfool", with_deepfool, "Add DeepFool to the default sweep");

    // report
    auto* report = app.add_subcommand("report", "Render a report CSV");
    std::string report_in, report_format = "markdown";
    report->add_option("--in", report_in, "Report CSV")->required();
    report->add_option("--format", report_format, "markdown or csv");

    // compare
    auto* compare = app.add_subcommand("compare", "Compare baseline and boosted reports");
    std::string base_path, boosted_path;
    compare->add_option("--baseline", base_path, "Baseline report CSV")->required();
    compare->add_option("--boosted", boosted_path, "Boosted report CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*synth) {
            auto d = tlab::synth_dataset(synth_seed, synth_n, synth_sep, synth_side, parse_split(synth_split));
            tlab::save_dataset(d, synth_out);
            print_counts(d);
        } else if (*ingest) {
            auto d = tlab::ingest_flows(csv_path, label_col, parse_split(ingest_split), ingest_seed, ingest_side);
            tlab::save_dataset(d, ingest_out);
            std::printf("%zu features, labels '%s' -> 0, '%s' -> 1\n", d.schema.features.size(),
                        d.schema.label_values[0].c_str(), d.schema.label_values[1].c_str());
            print_counts(d);
        } else if (*train_cmd) {
            const auto data = tlab::load_dataset(train_data);
            const auto spec = tlab::build_spec(tlab::parse_arch(arch), data.input_side, width);
            const auto model = tlab::train(spec, data, tcfg);
            tlab::save_checkpoint(model, train_out);
            std::printf("%s width %zu: validation accuracy %.4f, test accuracy %.4f\n",
                        tlab::arch_name(spec.arch).c_str(), width, model.meta().validation_accuracy,
                        tlab::accuracy(model, data, tlab::Split::test));
        } else if (*run) {
            tlab::ScenarioSpec spec;
            spec.kind = tlab::parse_scenario_kind(scenario);
            tlab::ModelRegistry reg;
            const std::string data_id = stem(run_data);
            reg.datasets[data_id] = tlab::load_dataset(run_data);
            const auto sn = tlab::load_checkpoint(sn_path);
            const auto tn = tlab::load_checkpoint(tn_path);
            spec.source = {stem(sn_path), sn.spec().arch, sn_data_id.empty() ? data_id : sn_data_id};
            spec.target = {stem(tn_path), tn.spec().arch, tn_data_id.empty() ? data_id : tn_data_id};
            if (spec.source.model_id == spec.target.model_id) spec.target.model_id += "'";
            reg.models[spec.source.model_id] = sn;
            reg.models[spec.target.model_id] = tn;
            spec.pool_dataset_id = data_id;
            spec.n_samples = n_samples;
            spec.workers = workers;
            if (attacks_path.empty()) {
                spec.attack_sweep = tlab::default_sweep(with_deepfool);
            } else {
                std::ifstream in(attacks_path);
                if (!in) throw tlab::DataError("cannot open attack sweep '" + attacks_path + "'");
                spec.attack_sweep = tlab::parse_attack_sweep(in);
            }
            if (!boost_text.empty()) spec.boost = tlab::parse_boost(boost_text);
            try {
                spec.validate();
            } catch (const tlab::ConfigError& e) {
                throw tlab::UsageError(e.what());
            }
            const auto rep = tlab::run_scenario(spec, reg, run_seed);
            write_text(run_out, tlab::render_report(rep, tlab::ReportFormat::csv));
            std::cout << tlab::render_report(rep, tlab::ReportFormat::markdown);
            for (const auto& r : rep.rows) {
                if (r.psnr_excluded) {
                    std::fprintf(stderr, "%s: %zu unchanged samples left out of mean PSNR\n", r.attack.c_str(),
                                 r.psnr_excluded);
                }
            }
        } else if (*report) {
            const auto fmt = tlab::parse_report_format(report_format);
            std::istringstream in(read_text(report_in));
            std::cout << tlab::render_report(tlab::parse_report_csv(in), fmt);
        } else if (*compare) {
            std::istringstream a(read_text(base_path)), b(read_text(boosted_path));
            const auto rows = tlab::compare_reports(tlab::parse_report_csv(a), tlab::parse_report_csv(b));
            std::printf("| SN | TN | Attack Type | ASR(TN) baseline | ASR(TN) boosted | Delta | Verdict |\n");
            std::printf("|---|---|---|---|---|---|---|\n");
            for (const auto& r : rows) {
                std::string verdict;
                if (r.transfers) verdict += "TRANSFERS";
                if (r.improved) verdict += verdict.empty() ? "IMPROVED" : ", IMPROVED";
                if (verdict.empty()) verdict = "-";
                std::printf("| %s | %s | %s | %.4f | %.4f | %+.4f | %s |\n", r.sn.c_str(), r.tn.c_str(),
                            r.attack.c_str(), r.baseline_asr_tn, r.boosted_asr_tn, r.delta, verdict.c_str());
            }
        }
    } catch (const tlab::UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const tlab::ContractError& e) {
        std::fprintf(stderr, "contract violation: %s\n", e.what());
        return kExitContract;
    } catch (const tlab::ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kExitUsage;
    } catch (const tlab::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return 0;
}
