#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advdet/artifacts.hpp"
#include "advdet/attacks.hpp"
#include "advdet/data_io.hpp"
#include "advdet/detector.hpp"
#include "advdet/nn.hpp"
#include "advdet/serialize.hpp"

namespace advdet {

struct DatasetConfig {
    std::filesystem::path root;  // resolved directory for relative paths
    std::filesystem::path images;
    std::filesystem::path labels;
    std::filesystem::path csv;  // used instead of the IDX pair when set
    std::optional<Shape> csv_shape;
    std::size_t train_size = 8000;
    std::size_t test_size = 2000;
    bool stratified = true;
};

struct ModelConfig {
    std::vector<LayerSpec> layers;  // empty means lenet-small
    TrainConfig train;
};

struct AttackStageConfig {
    std::size_t samples = 300;
    std::vector<AttackParams> attacks;  // one entry per enabled kind, in kAllAttacks order
};

struct FeatureConfig {
    std::size_t mc_samples = 50;
    std::vector<double> bandwidth_grid;  // explicit grid; empty means the default scaled grid
    std::size_t grid_count = 20;
    double grid_lo = 1e-2;
    double grid_hi = 1e2;
    std::size_t bank_cap = 0;
    std::size_t walks = 20;
    BimB walk;
};

struct DetectorStageConfig {
    std::size_t train_samples = 100;
    LogRegConfig logreg;
};

struct UndecidedConfig {
    double percentile = 25.0;
    std::size_t valid_samples = 200;
    Fgsm attack;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    DatasetConfig dataset;
    ModelConfig model;
    AttackStageConfig attacks;
    FeatureConfig features;
    DetectorStageConfig detector;
    UndecidedConfig undecided;
    json source;  // document the config was parsed from
};

/// Relative dataset paths resolve against dataset.root, which itself resolves
/// against `base_dir`; without a root the data directory default applies.
ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Keeps only the listed attack kinds. Throws ConfigError on an unknown or disabled name.
void filter_attacks(ExperimentConfig& config, const std::vector<std::string>& names);

enum class Stage : std::uint64_t { Data = 1, Init, Train, Attack, Features, Bank, Detector, Undecided };

std::uint64_t stage_seed(const ExperimentConfig& config, Stage stage);

struct ExperimentData {
    Dataset train;
    Dataset test;
};

ExperimentData prepare_data(const ExperimentConfig& config);

struct TrainingOutcome {
    NetworkModel model;
    TrainReport report;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double cpu_seconds = 0.0;
};

TrainingOutcome run_training(const ExperimentConfig& config, const ExperimentData& data);

struct SkippedSample {
    std::size_t sample_id = 0;
    std::string reason;
};

struct AttackOutcome {
    std::vector<std::size_t> sample_ids;  // attacked test indices, selection order
    std::vector<AttackResult> results;    // grouped by attack kind
    std::vector<SkippedSample> skipped;
};

/// Attacks the same correctly classified test samples with every configured attack.
AttackOutcome run_attacks(const ExperimentConfig& config, const NetworkModel& model, const Dataset& test,
                          const std::function<void(AttackKind, std::size_t)>& progress = {});

ClassFeatureBank fit_feature_bank(const ExperimentConfig& config, const NetworkModel& model, const Dataset& train);

/// Normal, noisy, and adversarial rows for every attack result; one normal
/// feature computation per sample, repeated under each attack tag.
std::vector<LabeledFeatures> extract_feature_rows(const ExperimentConfig& config, const NetworkModel& model,
                                                  const ClassFeatureBank& bank, const Dataset& test,
                                                  std::span<const AttackResult> results);

std::vector<std::vector<DensityWalkRecord>> run_density_walks(const ExperimentConfig& config,
                                                              const NetworkModel& model,
                                                              const ClassFeatureBank& bank, const Dataset& test,
                                                              std::span<const std::size_t> sample_ids);

struct DetectorSplit {
    std::vector<LabeledFeatures> train;
    std::vector<LabeledFeatures> eval;
};

/// Seeded partition by sample id: detector.train_samples ids go to training.
DetectorSplit split_for_detector(const ExperimentConfig& config, std::span<const LabeledFeatures> rows);

/// Fits on the normal and adversarial training rows (noisy rows excluded).
DetectorModel train_detector(const ExperimentConfig& config, std::span<const LabeledFeatures> train_rows,
                             LogRegReport* report = nullptr);

struct EvaluationOutcome {
    std::map<DetectorKind, DetectorEvaluation> by_kind;
};

EvaluationOutcome evaluate_all(std::span<const LabeledFeatures> eval_rows, const DetectorModel& detector);

/// {dataset, per_attack: {name: {auc_uncertainty, auc_density, auc_combined}}, overall: {...}}
json evaluation_summary(const std::string& dataset, const EvaluationOutcome& outcome);

struct Directionality {
    std::size_t count = 0;
    double uncertainty_up = 0.0;  // fraction with u(x*) > u(x)
    double density_down = 0.0;    // fraction with -log K(x*) > -log K(x)
};

struct DirectionalityReport {
    std::map<AttackKind, Directionality> vs_normal;
    std::map<AttackKind, Directionality> vs_noisy;
};

DirectionalityReport feature_directionality(std::span<const LabeledFeatures> rows);

struct UndecidedOutcome {
    double cutoff = 0.0;
    std::size_t validation_count = 0;
    std::map<std::string, double> rates;  // "<attack>/<set>" and "overall/<set>"
};

/// Cutoff from FGSM validation samples drawn from test indices outside `attacked`.
UndecidedOutcome run_undecided(const ExperimentConfig& config, const NetworkModel& model, const Dataset& test,
                               std::span<const std::size_t> attacked, std::span<const LabeledFeatures> rows);

json attack_stats_json(std::span<const AttackResult> results);
void write_attack_stats_csv(const std::filesystem::path& path, std::span<const AttackResult> results);

/// manifest.json in `out_dir`: config hash, seeds, and sha256 of every output
/// recorded so far. Entries from earlier stages are kept.
void update_manifest(const std::filesystem::path& out_dir, const ExperimentConfig& config,
                     const std::vector<std::filesystem::path>& outputs);

std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace advdet
