#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "advdet/errors.hpp"
#include "advdet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace advdet;

namespace {

struct Options {
    fs::path config_path;
    fs::path out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::vector<std::string> attacks;
    bool verbose = false;
};

class Session {
public:
    explicit Session(const Options& opts) : opts_(opts), config_(load_config(opts.config_path)) {
        if (opts.seed) {
            config_.seed = *opts.seed;
            config_.source["seed"] = *opts.seed;
        }
        if (!opts.attacks.empty()) filter_attacks(config_, opts.attacks);
        fs::create_directories(opts.out_dir);
    }

    void train() {
        log("training on " + std::to_string(data().train.size()) + " samples");
        const TrainingOutcome t = run_training(config_, data());
        log("test accuracy " + format_double(t.test_accuracy) + ", cpu " + format_double(t.cpu_seconds) + " s");
        write_json(path("model.json"), model_to_json(t.model));
        write_json(path("train_report.json"), json{{"train_accuracy", t.train_accuracy},
                                                   {"test_accuracy", t.test_accuracy},
                                                   {"initial_loss", t.report.initial_loss},
                                                   {"final_loss", t.report.final_loss},
                                                   {"epoch_losses", t.report.epoch_losses},
                                                   {"train_size", data().train.size()},
                                                   {"test_size", data().test.size()}});
        model_ = t.model;
        record({"model.json", "train_report.json"});
    }

    void attack() {
        const AttackOutcome a = run_attacks(config_, model(), data().test, [this](AttackKind kind, std::size_t n) {
            if (opts_.verbose && n % 50 == 0) log(std::string(to_string(kind)) + ": " + std::to_string(n) + " samples");
        });
        write_attack_results(path("attacks.jsonl"), a.results);
        write_attack_stats_csv(path("attack_stats.csv"), a.results);
        std::ofstream skipped(path("skipped.csv"), std::ios::binary);
        skipped << "sample_id,reason\n";
        for (const auto& s : a.skipped) skipped << s.sample_id << ',' << s.reason << '\n';
        skipped.close();
        log(std::to_string(a.sample_ids.size()) + " samples attacked, " + std::to_string(a.skipped.size()) + " skipped");
        results_ = a.results;
        record({"attacks.jsonl", "attack_stats.csv", "skipped.csv"});
    }

    void features() {
        const ClassFeatureBank bank = fit_feature_bank(config_, model(), data().train);
        log("bandwidth " + format_double(bank.bandwidth()));
        const auto rows = extract_feature_rows(config_, model(), bank, data().test, results());
        const auto ids = attacked_ids();
        const auto walks = run_density_walks(config_, model(), bank, data().test, ids);
        write_json(path("bank.json"), bank_to_json(bank));
        write_feature_csv(path("features.csv"), rows);
        write_density_walk_csv(path("density_walks.csv"), walks);
        rows_ = rows;
        record({"bank.json", "features.csv", "density_walks.csv"});
    }

    void detect() {
        const DetectorSplit s = split_for_detector(config_, rows());
        LogRegReport report;
        const DetectorModel d = train_detector(config_, s.train, &report);
        write_json(path("detector.json"), detector_to_json(d));
        write_json(path("detector_report.json"), json{{"train_rows", s.train.size()},
                                                      {"eval_rows", s.eval.size()},
                                                      {"initial_loss", report.initial_loss},
                                                      {"final_loss", report.final_loss}});
        detector_ = d;
        record({"detector.json", "detector_report.json"});
    }

    void evaluate() {
        const DetectorSplit s = split_for_detector(config_, rows());
        const EvaluationOutcome e = evaluate_all(s.eval, detector());
        std::vector<std::string> written;
        for (const auto& [kind, eval] : e.by_kind) {
            const std::string k(to_string(kind));
            for (const auto& [attack, curve] : eval.per_attack) {
                written.push_back("roc/" + k + "_" + std::string(to_string(attack)) + ".csv");
                write_roc_csv(path(written.back()), curve);
            }
            written.push_back("roc/" + k + "_overall.csv");
            write_roc_csv(path(written.back()), eval.overall);
        }
        const json summary = evaluation_summary(config_.name, e);
        write_json(path("summary.json"), summary);
        if (opts_.verbose) std::cerr << summary.dump(2) << '\n';

        const DirectionalityReport dir = feature_directionality(rows());
        std::ofstream csv(path("directionality.csv"), std::ios::binary);
        csv << "attack_kind,reference,count,uncertainty_up,density_down\n";
        for (const auto& [name, table] : {std::pair{"normal", &dir.vs_normal}, std::pair{"noisy", &dir.vs_noisy}}) {
            for (const auto& [attack, d] : *table) {
                csv << to_string(attack) << ',' << name << ',' << d.count << ',' << format_double(d.uncertainty_up) << ','
                    << format_double(d.density_down) << '\n';
            }
        }
        csv.close();
        written.insert(written.end(), {"summary.json", "directionality.csv"});
        record(written);
    }

    void undecided() {
        const UndecidedOutcome u = run_undecided(config_, model(), data().test, attacked_ids(), rows());
        write_json(path("undecided.json"), json{{"percentile", config_.undecided.percentile},
                                                {"cutoff", u.cutoff},
                                                {"validation_samples", u.validation_count},
                                                {"undecided_rates", u.rates}});
        log("undecided cutoff " + format_double(u.cutoff));
        record({"undecided.json"});
    }

private:
    fs::path path(const std::string& name) const { return opts_.out_dir / name; }

    void log(const std::string& msg) const {
        if (opts_.verbose) std::cerr << "[advdet] " << msg << '\n';
    }

    void record(const std::vector<std::string>& names) {
        std::vector<fs::path> paths;
        for (const auto& n : names) paths.push_back(path(n));
        update_manifest(opts_.out_dir, config_, paths);
    }

    const ExperimentData& data() {
        if (!data_) data_ = prepare_data(config_);
        return *data_;
    }

    const NetworkModel& model() {
        if (!model_) model_ = model_from_json(read_json(path("model.json")));
        return *model_;
    }

    bool wanted(AttackKind kind) const {
        for (const auto& p : config_.attacks.attacks) {
            if (kind_of(p) == kind) return true;
        }
        return false;
    }

    const std::vector<AttackResult>& results() {
        if (!results_) {
            results_.emplace();
            for (auto& r : read_attack_results(path("attacks.jsonl"))) {
                if (wanted(r.kind)) results_->push_back(std::move(r));
            }
        }
        return *results_;
    }

    std::vector<std::size_t> attacked_ids() {
        std::set<std::size_t> ids;
        for (const auto& r : results()) ids.insert(r.sample_id);
        return {ids.begin(), ids.end()};
    }

    const std::vector<LabeledFeatures>& rows() {
        if (!rows_) {
            rows_.emplace();
            for (const auto& r : read_feature_csv(path("features.csv"))) {
                if (wanted(r.attack)) rows_->push_back(r);
            }
        }
        return *rows_;
    }

    const DetectorModel& detector() {
        if (!detector_) detector_ = detector_from_json(read_json(path("detector.json")));
        return *detector_;
    }

    Options opts_;
    ExperimentConfig config_;
    std::optional<ExperimentData> data_;
    std::optional<NetworkModel> model_;
    std::optional<std::vector<AttackResult>> results_;
    std::optional<std::vector<LabeledFeatures>> rows_;
    std::optional<DetectorModel> detector_;
};

void write_error(const fs::path& out_dir, const std::string& stage, const Error& e) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream out(out_dir / "error.json", std::ios::binary);
    if (out) {
        out << json{{"stage", stage}, {"code", to_string(e.code())}, {"message", e.what()}}.dump(2) << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial sample detection from density and uncertainty artifacts"};
    app.require_subcommand(1);
    app.fallthrough();

    Options opts;
    std::string attack_list;
    app.add_option("--config", opts.config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
    app.add_option("--seed", opts.seed, "Master seed, overrides the config");
    app.add_option("--attack", attack_list, "Comma-separated attack filter: fgsm,bim-a,bim-b,jsma,cw");
    app.add_flag("-v,--verbose", opts.verbose, "Progress on stderr");

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"train", "Train the network"},
        {"attack", "Craft adversarial and noisy samples"},
        {"features", "Fit the density bank and extract artifact features"},
        {"detect", "Train the combined logistic-regression detector"},
        {"evaluate", "ROC curves and AUC summary for all three detectors"},
        {"undecided", "Uncertainty cutoff and undecided rates"},
        {"run", "All stages in order"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    if (!attack_list.empty()) {
        std::stringstream ss(attack_list);
        for (std::string name; std::getline(ss, name, ',');) {
            if (!name.empty()) opts.attacks.push_back(name);
        }
    }

    try {
        Session s(opts);
        if (stage == "train" || stage == "run") s.train();
        if (stage == "attack" || stage == "run") s.attack();
        if (stage == "features" || stage == "run") s.features();
        if (stage == "detect" || stage == "run") s.detect();
        if (stage == "evaluate" || stage == "run") s.evaluate();
        if (stage == "undecided" || stage == "run") s.undecided();
    } catch (const Error& e) {
        std::cerr << "advdet " << stage << ": " << e.what() << '\n';
        write_error(opts.out_dir, stage, e);
        return e.code() == ErrorCode::ConfigError ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "advdet " << stage << ": " << e.what() << '\n';
        write_error(opts.out_dir, stage, Error(ErrorCode::IoError, e.what()));
        return 3;
    }
    return 0;
}
