#include "advdet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "advdet/errors.hpp"
#include "advdet/rng.hpp"

namespace advdet {

ZScoreParams zscore_fit(std::span<const FeaturePair> features) {
    if (features.size() < 2) fail(ErrorCode::EmptyInput, "z-scoring needs at least two samples");
    ZScoreParams p;
    const auto n = static_cast<double>(features.size());
    for (std::size_t k = 0; k < 2; ++k) {
        double mean = 0.0;
        for (const auto& f : features) mean += f[k];
        mean /= n;
        double var = 0.0;
        for (const auto& f : features) var += (f[k] - mean) * (f[k] - mean);
        var /= n;
        if (!(var > 0.0) || !std::isfinite(var))
            fail(ErrorCode::DegenerateFeature, "feature " + std::to_string(k) + " has zero variance");
        p.mean[k] = mean;
        p.stddev[k] = std::sqrt(var);
    }
    return p;
}

FeaturePair zscore_apply(const ZScoreParams& params, const FeaturePair& v) {
    return {(v[0] - params.mean[0]) / params.stddev[0], (v[1] - params.mean[1]) / params.stddev[1]};
}

namespace {

double sigmoid(double s) {
    if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

/// log(1 + exp(s))
double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

void check_labels(std::span<const int> labels, std::size_t n) {
    if (labels.size() != n) fail(ErrorCode::ShapeMismatch, "feature and label counts differ");
    bool has0 = false, has1 = false;
    for (int l : labels) {
        if (l != 0 && l != 1) fail(ErrorCode::InvalidSpec, "labels must be 0 or 1");
        has0 |= l == 0;
        has1 |= l == 1;
    }
    if (!has0 || !has1) fail(ErrorCode::SingleClass, "both classes must be present");
}

}  // namespace

double logreg_loss(const FeaturePair& weights, double bias, std::span<const FeaturePair> z, std::span<const int> labels,
                   double l2_penalty) {
    double loss = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double s = weights[0] * z[i][0] + weights[1] * z[i][1] + bias;
        loss += softplus(s) - labels[i] * s;
    }
    return loss / static_cast<double>(z.size()) + l2_penalty * (weights[0] * weights[0] + weights[1] * weights[1]);
}

std::array<double, 3> logreg_gradient(const FeaturePair& weights, double bias, std::span<const FeaturePair> z,
                                      std::span<const int> labels, double l2_penalty) {
    std::array<double, 3> g{};
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double s = weights[0] * z[i][0] + weights[1] * z[i][1] + bias;
        const double r = sigmoid(s) - labels[i];
        g[0] += r * z[i][0];
        g[1] += r * z[i][1];
        g[2] += r;
    }
    const auto n = static_cast<double>(z.size());
    g[0] = g[0] / n + 2.0 * l2_penalty * weights[0];
    g[1] = g[1] / n + 2.0 * l2_penalty * weights[1];
    g[2] /= n;
    return g;
}

DetectorModel train_logreg(std::span<const FeaturePair> features, std::span<const int> labels,
                           const LogRegConfig& config, LogRegReport* report) {
    check_labels(labels, features.size());
    if (!(config.learning_rate > 0.0) || config.l2_penalty < 0.0)
        fail(ErrorCode::InvalidSpec, "learning rate must be positive and l2 penalty non-negative");

    DetectorModel model;
    model.zscore = zscore_fit(features);
    std::vector<FeaturePair> z;
    z.reserve(features.size());
    for (const auto& f : features) z.push_back(zscore_apply(model.zscore, f));

    const double initial = logreg_loss(model.weights, model.bias, z, labels, config.l2_penalty);
    for (std::size_t it = 0; it < config.iters; ++it) {
        const auto g = logreg_gradient(model.weights, model.bias, z, labels, config.l2_penalty);
        model.weights[0] -= config.learning_rate * g[0];
        model.weights[1] -= config.learning_rate * g[1];
        model.bias -= config.learning_rate * g[2];
    }
    const double final_loss = logreg_loss(model.weights, model.bias, z, labels, config.l2_penalty);
    if (!std::isfinite(final_loss)) fail(ErrorCode::NonFiniteLoss, "logistic regression diverged");
    if (report) *report = {initial, final_loss};
    return model;
}

double score(const DetectorModel& detector, const FeaturePair& features) {
    const FeaturePair z = zscore_apply(detector.zscore, features);
    return sigmoid(detector.weights[0] * z[0] + detector.weights[1] * z[1] + detector.bias);
}

std::string_view to_string(DetectorKind kind) {
    switch (kind) {
        case DetectorKind::Uncertainty: return "uncertainty";
        case DetectorKind::Density: return "density";
        case DetectorKind::Combined: return "combined";
    }
    return "unknown";
}

double threshold_score(DetectorKind kind, const ArtifactFeatures& features, const DetectorModel* detector) {
    switch (kind) {
        case DetectorKind::Uncertainty: return features.uncertainty;
        case DetectorKind::Density: return features.neg_log_density;
        case DetectorKind::Combined:
            if (!detector) fail(ErrorCode::InvalidSpec, "combined scores need a trained detector");
            return score(*detector, to_pair(features));
    }
    return 0.0;
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) fail(ErrorCode::ShapeMismatch, "score and label counts differ");
    check_labels(labels, scores.size());
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    const auto negatives = static_cast<double>(labels.size()) - positives;

    RocCurve curve;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    double tp = 0.0, fp = 0.0;
    for (std::size_t k = 0; k < order.size();) {
        const double threshold = scores[order[k]];
        while (k < order.size() && scores[order[k]] == threshold) {
            (labels[order[k]] == 1 ? tp : fp) += 1.0;
            ++k;
        }
        const RocPoint& prev = curve.points.back();
        RocPoint next{threshold, fp / negatives, tp / positives};
        curve.auc += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) * 0.5;
        curve.points.push_back(next);
    }
    return curve;
}

std::string_view to_string(SampleSet set) {
    switch (set) {
        case SampleSet::Normal: return "normal";
        case SampleSet::Noisy: return "noisy";
        case SampleSet::Adversarial: return "adversarial";
    }
    return "unknown";
}

SampleSet sample_set_from_string(std::string_view name) {
    for (SampleSet s : {SampleSet::Normal, SampleSet::Noisy, SampleSet::Adversarial}) {
        if (name == to_string(s)) return s;
    }
    fail(ErrorCode::ParseError, "unknown sample set '" + std::string(name) + "'");
}

DetectorEvaluation evaluate_detector(std::span<const LabeledFeatures> rows, DetectorKind kind,
                                     const DetectorModel* detector) {
    std::map<AttackKind, std::pair<std::vector<double>, std::vector<int>>> by_attack;
    std::vector<double> all_scores;
    std::vector<int> all_labels;
    for (const auto& row : rows) {
        const double s = threshold_score(kind, row.features, detector);
        const int label = row.set == SampleSet::Adversarial ? 1 : 0;
        auto& bucket = by_attack[row.attack];
        bucket.first.push_back(s);
        bucket.second.push_back(label);
        all_scores.push_back(s);
        all_labels.push_back(label);
    }
    DetectorEvaluation eval;
    for (const auto& [attack, bucket] : by_attack) {
        const auto& labels = bucket.second;
        const bool has_pos = std::count(labels.begin(), labels.end(), 1) > 0;
        const bool has_neg = std::count(labels.begin(), labels.end(), 0) > 0;
        if (!has_pos || !has_neg)
            fail(ErrorCode::MissingSet, std::string("attack ") + std::string(to_string(attack)) +
                                            (has_pos ? " has no normal/noisy samples" : " has no adversarial samples"));
        eval.per_attack[attack] = roc_curve(bucket.first, labels);
    }
    if (eval.per_attack.empty()) fail(ErrorCode::MissingSet, "no feature rows to evaluate");
    eval.overall = roc_curve(all_scores, all_labels);
    return eval;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) fail(ErrorCode::EmptyInput, "percentile of an empty set");
    if (!(p >= 0.0 && p <= 100.0)) fail(ErrorCode::InvalidSpec, "percentile must lie in [0, 100]");
    std::sort(values.begin(), values.end());
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double uncertainty_threshold(const NetworkModel& model, const Tensor& valid_x, std::span<const int> valid_y,
                             double p, const Fgsm& attack, std::size_t samples, std::uint64_t seed) {
    if (valid_x.rank() < 1 || valid_x.shape()[0] != valid_y.size())
        fail(ErrorCode::ShapeMismatch, "validation image and label counts differ");
    std::vector<double> uncertainties;
    for (std::size_t i = 0; i < valid_y.size(); ++i) {
        const auto x = valid_x.row(i);
        if (static_cast<int>(predict(model, x)) != valid_y[i]) continue;
        const int label = valid_y[i];
        const Tensor y = one_hot(std::span<const int>(&label, 1), model.num_classes()).reshaped({model.num_classes()});
        const AttackResult adv = fgsm(model, x, y.values(), attack);
        uncertainties.push_back(uncertainty(model, adv.x_adv.values(), samples, derive_seed(seed, i)));
    }
    if (uncertainties.empty()) fail(ErrorCode::EmptyValidation, "no correctly classified validation samples");
    return percentile(std::move(uncertainties), p);
}

int classify_with_undecided(const NetworkModel& model, double cutoff, std::span<const double> x, std::size_t samples,
                            std::uint64_t seed) {
    if (uncertainty(model, x, samples, seed) > cutoff) return kUndecided;
    return static_cast<int>(predict(model, x));
}

}  // namespace advdet
