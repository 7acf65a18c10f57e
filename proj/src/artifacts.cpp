#include "advdet/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "advdet/errors.hpp"
#include "advdet/rng.hpp"

namespace advdet {

ClassFeatureBank::ClassFeatureBank(std::size_t dim, std::vector<std::vector<double>> rows_by_class, double bandwidth)
    : dim_(dim), rows_(std::move(rows_by_class)) {
    if (dim_ == 0) fail(ErrorCode::ShapeMismatch, "feature dimension must be positive");
    for (std::size_t c = 0; c < rows_.size(); ++c) {
        if (rows_[c].size() % dim_ != 0)
            fail(ErrorCode::ShapeMismatch, "class " + std::to_string(c) + " rows are not multiples of " + std::to_string(dim_));
    }
    if (bandwidth != 0.0) set_bandwidth(bandwidth);
}

std::size_t ClassFeatureBank::total_size() const {
    std::size_t n = 0;
    for (std::size_t c = 0; c < rows_.size(); ++c) n += class_size(c);
    return n;
}

void ClassFeatureBank::set_bandwidth(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) fail(ErrorCode::InvalidGrid, "bandwidth must be positive and finite");
    bandwidth_ = sigma;
}

ClassFeatureBank ClassFeatureBank::capped(std::size_t cap, std::uint64_t seed) const {
    if (cap == 0) return *this;
    std::vector<std::vector<double>> rows(rows_.size());
    for (std::size_t c = 0; c < rows_.size(); ++c) {
        const std::size_t n = class_size(c);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        if (n > cap) {
            Rng rng = Rng::stream(seed, c);
            for (std::size_t k = 0; k < cap; ++k) std::swap(idx[k], idx[k + rng.below(n - k)]);
            idx.resize(cap);
            std::sort(idx.begin(), idx.end());
        }
        for (std::size_t i : idx) {
            const auto p = point(c, i);
            rows[c].insert(rows[c].end(), p.begin(), p.end());
        }
    }
    return ClassFeatureBank(dim_, std::move(rows), bandwidth_);
}

ClassFeatureBank build_feature_bank(const NetworkModel& model, const Tensor& images, std::span<const int> labels) {
    if (images.rank() < 1 || images.shape()[0] != labels.size())
        fail(ErrorCode::ShapeMismatch, "image and label counts differ");
    const std::size_t classes = model.num_classes();
    std::vector<std::vector<double>> rows(classes);
    for (std::size_t s = 0; s < labels.size(); ++s) {
        if (labels[s] < 0 || static_cast<std::size_t>(labels[s]) >= classes)
            fail(ErrorCode::UnknownClass, "label " + std::to_string(labels[s]) + " out of range");
        const Tensor phi = forward(model, images.row(s)).hidden;
        auto& dst = rows[static_cast<std::size_t>(labels[s])];
        dst.insert(dst.end(), phi.values().begin(), phi.values().end());
    }
    for (std::size_t c = 0; c < classes; ++c) {
        if (rows[c].empty()) fail(ErrorCode::EmptyClass, "no training points for class " + std::to_string(c));
    }
    return ClassFeatureBank(model.hidden_size(), std::move(rows));
}

namespace {

/// Stable log(sum(exp(v))).
double log_sum_exp(std::span<const double> v) {
    if (v.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double sum = 0.0;
    for (double x : v) sum += std::exp(x - m);
    return m + std::log(sum);
}

/// Symmetric within-class squared distance matrix, row-major n x n.
std::vector<double> class_distances(const ClassFeatureBank& bank, std::size_t c) {
    const std::size_t n = bank.class_size(c);
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = squared_distance(bank.point(c, i), bank.point(c, j));
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    return d;
}

double loo_from_distances(const std::vector<std::vector<double>>& distances, std::size_t dim, double sigma) {
    const double inv_s2 = 1.0 / (sigma * sigma);
    const double log_norm = -0.5 * static_cast<double>(dim) * std::log(std::numbers::pi * sigma * sigma);
    double total = 0.0;
    std::vector<double> terms;
    for (const auto& d : distances) {
        const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d.size()))));
        terms.resize(n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t k = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) terms[k++] = -d[i * n + j] * inv_s2;
            }
            total += log_norm + log_sum_exp(terms) - std::log(static_cast<double>(n - 1));
        }
    }
    return total;
}

std::vector<std::vector<double>> all_class_distances(const ClassFeatureBank& bank) {
    std::vector<std::vector<double>> out;
    for (std::size_t c = 0; c < bank.num_classes(); ++c) {
        if (bank.class_size(c) < 2)
            fail(ErrorCode::EmptyClass, "class " + std::to_string(c) + " needs at least two points for bandwidth fitting");
        out.push_back(class_distances(bank, c));
    }
    return out;
}

void check_grid(std::span<const double> grid) {
    if (grid.empty()) fail(ErrorCode::InvalidGrid, "empty bandwidth grid");
    for (double s : grid) {
        if (!(s > 0.0) || !std::isfinite(s)) fail(ErrorCode::InvalidGrid, "bandwidth candidates must be positive");
    }
}

}  // namespace

double leave_one_out_log_likelihood(const ClassFeatureBank& bank, double sigma) {
    check_grid(std::span<const double>(&sigma, 1));
    return loo_from_distances(all_class_distances(bank), bank.dim(), sigma);
}

double fit_bandwidth(const ClassFeatureBank& bank, std::span<const double> candidate_grid) {
    check_grid(candidate_grid);
    if (candidate_grid.size() == 1) return candidate_grid[0];
    const auto distances = all_class_distances(bank);
    double best_sigma = candidate_grid[0];
    double best_ll = loo_from_distances(distances, bank.dim(), best_sigma);
    for (double sigma : candidate_grid.subspan(1)) {
        const double ll = loo_from_distances(distances, bank.dim(), sigma);
        if (ll > best_ll || (ll == best_ll && sigma < best_sigma)) {
            best_ll = ll;
            best_sigma = sigma;
        }
    }
    return best_sigma;
}

std::vector<double> default_bandwidth_grid(const ClassFeatureBank& bank, std::size_t count, double lo, double hi) {
    if (count == 0 || !(lo > 0.0) || !(hi >= lo)) fail(ErrorCode::InvalidGrid, "bad grid specification");
    std::vector<double> pairwise;
    for (std::size_t c = 0; c < bank.num_classes(); ++c) {
        const std::size_t n = bank.class_size(c);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) pairwise.push_back(squared_distance(bank.point(c, i), bank.point(c, j)));
        }
    }
    double scale = 1.0;
    if (!pairwise.empty()) {
        auto mid = pairwise.begin() + static_cast<std::ptrdiff_t>(pairwise.size() / 2);
        std::nth_element(pairwise.begin(), mid, pairwise.end());
        if (*mid > 0.0) scale = std::sqrt(*mid);
    }
    std::vector<double> grid(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double frac = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
        grid[k] = scale * lo * std::pow(hi / lo, frac);
    }
    return grid;
}

double log_density(const ClassFeatureBank& bank, std::span<const double> phi, std::size_t cls) {
    if (cls >= bank.num_classes() || bank.class_size(cls) == 0)
        fail(ErrorCode::UnknownClass, "no feature bank for class " + std::to_string(cls));
    if (!bank.fitted()) fail(ErrorCode::InvalidGrid, "bandwidth has not been fitted");
    if (phi.size() != bank.dim()) fail(ErrorCode::ShapeMismatch, "feature vector dimension mismatch");
    const double inv_s2 = 1.0 / (bank.bandwidth() * bank.bandwidth());
    const std::size_t n = bank.class_size(cls);
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) terms[i] = -squared_distance(phi, bank.point(cls, i)) * inv_s2;
    return log_sum_exp(terms);
}

double uncertainty_from_samples(std::span<const Tensor> samples) {
    if (samples.size() < 2) fail(ErrorCode::InvalidSpec, "uncertainty needs at least two samples");
    const std::size_t dims = samples[0].size();
    const auto count = static_cast<double>(samples.size());
    double total = 0.0;
    for (std::size_t k = 0; k < dims; ++k) {
        // Shifted by the first draw so identical draws give exactly zero.
        const double ref = samples[0][k];
        double mean = 0.0;
        for (const auto& s : samples) mean += s[k] - ref;
        mean /= count;
        double var = 0.0;
        for (const auto& s : samples) var += (s[k] - ref - mean) * (s[k] - ref - mean);
        total += var / count;
    }
    return total / static_cast<double>(dims);
}

double uncertainty(const NetworkModel& model, std::span<const double> x, std::size_t samples, std::uint64_t seed) {
    if (samples < 2) fail(ErrorCode::InvalidSpec, "uncertainty needs T >= 2");
    const auto draws = sample_predictions(model, x, samples, seed);
    return uncertainty_from_samples(draws);
}

ArtifactFeatures extract_features(const NetworkModel& model, const ClassFeatureBank& bank, std::span<const double> x,
                                  std::size_t samples, std::uint64_t seed) {
    const ForwardOutput out = forward(model, x);
    ArtifactFeatures f;
    f.predicted_class = static_cast<int>(argmax(out.probs.values()));
    f.neg_log_density = -log_density(bank, out.hidden.values(), static_cast<std::size_t>(f.predicted_class));
    f.uncertainty = uncertainty(model, x, samples, seed);
    return f;
}

std::vector<DensityWalkRecord> density_walk(const NetworkModel& model, const ClassFeatureBank& bank,
                                            std::span<const double> x, int label, const BimB& params) {
    validate(params);
    if (label < 0 || static_cast<std::size_t>(label) >= model.num_classes())
        fail(ErrorCode::UnknownClass, "label out of range");
    if (static_cast<int>(predict(model, x)) != label)
        fail(ErrorCode::NotCorrectlyClassified, "density walks start from correctly classified samples");

    std::vector<double> y(model.num_classes(), 0.0);
    y[static_cast<std::size_t>(label)] = 1.0;
    std::vector<Tensor> hidden;
    std::vector<double> current(x.begin(), x.end());
    hidden.push_back(forward(model, current).hidden);
    for (std::size_t i = 0; i < params.n_iters; ++i) {
        const Tensor grad = input_gradient(model, current, y);
        current = clip_to_ball(fgsm_step(current, grad.values(), params.eps_step), x, params.eps_clip);
        hidden.push_back(forward(model, current).hidden);
    }
    const std::size_t final_class = predict(model, current);

    std::vector<DensityWalkRecord> records;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        records.push_back({i, log_density(bank, hidden[i].values(), static_cast<std::size_t>(label)),
                           log_density(bank, hidden[i].values(), final_class)});
    }
    return records;
}

}  // namespace advdet
