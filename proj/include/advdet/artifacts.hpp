#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "advdet/attacks.hpp"
#include "advdet/nn.hpp"
#include "advdet/tensor.hpp"

namespace advdet {

/// Last-hidden-layer features of the training set, grouped by class, plus the
/// shared kernel bandwidth (zero until fitted).
class ClassFeatureBank {
public:
    ClassFeatureBank() = default;
    ClassFeatureBank(std::size_t dim, std::vector<std::vector<double>> rows_by_class, double bandwidth = 0.0);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t num_classes() const noexcept { return rows_.size(); }
    std::size_t class_size(std::size_t c) const { return rows_.at(c).size() / dim_; }
    std::size_t total_size() const;
    std::span<const double> point(std::size_t c, std::size_t i) const {
        return std::span<const double>(rows_[c]).subspan(i * dim_, dim_);
    }
    /// Flat row-major storage of class c.
    const std::vector<double>& class_rows(std::size_t c) const { return rows_.at(c); }

    double bandwidth() const noexcept { return bandwidth_; }
    bool fitted() const noexcept { return bandwidth_ > 0.0; }
    void set_bandwidth(double sigma);

    /// Keeps at most `cap` seeded-random points per class (cap 0 keeps everything).
    ClassFeatureBank capped(std::size_t cap, std::uint64_t seed) const;

    friend bool operator==(const ClassFeatureBank&, const ClassFeatureBank&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<std::vector<double>> rows_;
    double bandwidth_ = 0.0;
};

struct ArtifactFeatures {
    double uncertainty = 0.0;
    double neg_log_density = 0.0;
    int predicted_class = 0;

    friend bool operator==(const ArtifactFeatures&, const ArtifactFeatures&) = default;
};

/// phi(x) for every training sample, in deterministic mode. `images` is [n, ...].
ClassFeatureBank build_feature_bank(const NetworkModel& model, const Tensor& images, std::span<const int> labels);

/// Total leave-one-out log-likelihood of the bank under a normalized Gaussian
/// kernel of bandwidth sigma, each point scored against its own class.
double leave_one_out_log_likelihood(const ClassFeatureBank& bank, double sigma);

/// Grid value with the highest leave-one-out log-likelihood (smaller sigma on ties).
double fit_bandwidth(const ClassFeatureBank& bank, std::span<const double> candidate_grid);

/// `count` log-spaced values over [lo, hi] times the median within-class pairwise distance.
std::vector<double> default_bandwidth_grid(const ClassFeatureBank& bank, std::size_t count = 20, double lo = 1e-2,
                                           double hi = 1e2);

/// log sum_i exp(-|phi - phi_i|^2 / sigma^2) over class t.
double log_density(const ClassFeatureBank& bank, std::span<const double> phi, std::size_t cls);

/// Mean over output dimensions of the per-dimension variance of sampled softmax outputs.
double uncertainty_from_samples(std::span<const Tensor> samples);

double uncertainty(const NetworkModel& model, std::span<const double> x, std::size_t samples, std::uint64_t seed);

ArtifactFeatures extract_features(const NetworkModel& model, const ClassFeatureBank& bank, std::span<const double> x,
                                  std::size_t samples, std::uint64_t seed);

struct DensityWalkRecord {
    std::size_t iteration = 0;
    double log_density_source = 0.0;
    double log_density_adv = 0.0;
};

/// Log-density under the source class and the final adversarial class along a
/// fixed-length BIM trajectory. Records iterations 0 (unperturbed) .. n_iters.
std::vector<DensityWalkRecord> density_walk(const NetworkModel& model, const ClassFeatureBank& bank,
                                            std::span<const double> x, int label, const BimB& params);

}  // namespace advdet
