#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "advdet/artifacts.hpp"
#include "advdet/attacks.hpp"
#include "advdet/nn.hpp"

namespace advdet {

/// (uncertainty, negative log density)
using FeaturePair = std::array<double, 2>;

inline FeaturePair to_pair(const ArtifactFeatures& f) { return {f.uncertainty, f.neg_log_density}; }

struct ZScoreParams {
    FeaturePair mean{};
    FeaturePair stddev{};

    friend bool operator==(const ZScoreParams&, const ZScoreParams&) = default;
};

/// Per-feature mean and population standard deviation.
ZScoreParams zscore_fit(std::span<const FeaturePair> features);
FeaturePair zscore_apply(const ZScoreParams& params, const FeaturePair& v);

struct LogRegConfig {
    std::size_t iters = 2000;
    double learning_rate = 0.1;
    double l2_penalty = 1e-4;
};

struct DetectorModel {
    ZScoreParams zscore;
    FeaturePair weights{};
    double bias = 0.0;

    friend bool operator==(const DetectorModel&, const DetectorModel&) = default;
};

struct LogRegReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

/// Mean logistic loss plus l2_penalty * |w|^2 on already z-scored features.
double logreg_loss(const FeaturePair& weights, double bias, std::span<const FeaturePair> z, std::span<const int> labels,
                   double l2_penalty);

/// Gradient of logreg_loss as (dw0, dw1, db).
std::array<double, 3> logreg_gradient(const FeaturePair& weights, double bias, std::span<const FeaturePair> z,
                                      std::span<const int> labels, double l2_penalty);

/// Full-batch gradient descent from zero weights on z-scored features. Label 1 = adversarial.
DetectorModel train_logreg(std::span<const FeaturePair> features, std::span<const int> labels,
                           const LogRegConfig& config, LogRegReport* report = nullptr);

/// sigmoid(w . z + b) for raw (un-normalized) features.
double score(const DetectorModel& detector, const FeaturePair& features);

enum class DetectorKind { Uncertainty, Density, Combined };

inline constexpr DetectorKind kAllDetectors[] = {DetectorKind::Uncertainty, DetectorKind::Density,
                                                 DetectorKind::Combined};

std::string_view to_string(DetectorKind kind);

/// Scalar score thresholded by each classifier; `combined` requires a detector.
double threshold_score(DetectorKind kind, const ArtifactFeatures& features, const DetectorModel* detector = nullptr);

struct RocPoint {
    double threshold = 0.0;  // +inf for the (0, 0) vertex
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

/// Threshold sweep over distinct scores, descending; ties form one vertex. Label 1 = positive.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

enum class SampleSet { Normal, Noisy, Adversarial };

std::string_view to_string(SampleSet set);
SampleSet sample_set_from_string(std::string_view name);

struct LabeledFeatures {
    std::size_t sample_id = 0;
    SampleSet set = SampleSet::Normal;
    AttackKind attack = AttackKind::Fgsm;
    ArtifactFeatures features;
};

struct DetectorEvaluation {
    std::map<AttackKind, RocCurve> per_attack;
    RocCurve overall;
};

/// Positives are adversarial samples; negatives are the normal and noisy samples.
/// Per-attack curves use only the rows tagged with that attack.
DetectorEvaluation evaluate_detector(std::span<const LabeledFeatures> rows, DetectorKind kind,
                                     const DetectorModel* detector = nullptr);

/// Inclusive linear-interpolation percentile, p in [0, 100].
double percentile(std::vector<double> values, double p);

/// FGSM-attacks the correctly classified validation samples and returns the
/// p-th percentile of their uncertainties.
double uncertainty_threshold(const NetworkModel& model, const Tensor& valid_x, std::span<const int> valid_y,
                             double p, const Fgsm& attack, std::size_t samples, std::uint64_t seed);

inline constexpr int kUndecided = -1;

/// kUndecided when uncertainty exceeds the cutoff, otherwise the predicted class.
int classify_with_undecided(const NetworkModel& model, double cutoff, std::span<const double> x, std::size_t samples,
                            std::uint64_t seed);

}  // namespace advdet
