#include "advdet/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "advdet/errors.hpp"
#include "advdet/rng.hpp"

namespace advdet {

std::string_view to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::Fgsm: return "fgsm";
        case AttackKind::BimA: return "bim-a";
        case AttackKind::BimB: return "bim-b";
        case AttackKind::Jsma: return "jsma";
        case AttackKind::CwL0: return "cw";
    }
    return "unknown";
}

AttackKind attack_kind_from_string(std::string_view name) {
    for (AttackKind kind : kAllAttacks) {
        if (name == to_string(kind)) return kind;
    }
    fail(ErrorCode::ConfigError, "unknown attack '" + std::string(name) + "'");
}

bool uses_gaussian_noise(AttackKind kind) {
    return kind == AttackKind::Fgsm || kind == AttackKind::BimA || kind == AttackKind::BimB;
}

AttackKind kind_of(const AttackParams& params) {
    struct Visitor {
        AttackKind operator()(const Fgsm&) const { return AttackKind::Fgsm; }
        AttackKind operator()(const BimA&) const { return AttackKind::BimA; }
        AttackKind operator()(const BimB&) const { return AttackKind::BimB; }
        AttackKind operator()(const Jsma&) const { return AttackKind::Jsma; }
        AttackKind operator()(const CwL0&) const { return AttackKind::CwL0; }
    };
    return std::visit(Visitor{}, params);
}

void validate(const AttackParams& params) {
    auto require = [](bool ok, const char* what) {
        if (!ok) fail(ErrorCode::InvalidSpec, what);
    };
    struct Visitor {
        decltype(require)& req;
        void operator()(const Fgsm& p) const { req(p.eps >= 0.0, "fgsm eps must be non-negative"); }
        void operator()(const BimA& p) const {
            req(p.eps_step > 0.0 && p.eps_clip > 0.0, "bim eps_step and eps_clip must be positive");
        }
        void operator()(const BimB& p) const {
            req(p.eps_step > 0.0 && p.eps_clip > 0.0, "bim eps_step and eps_clip must be positive");
        }
        void operator()(const Jsma& p) const {
            req(p.theta > 0.0, "jsma theta must be positive");
            req(p.max_fraction > 0.0 && p.max_fraction <= 1.0, "jsma max_fraction must lie in (0, 1]");
        }
        void operator()(const CwL0& p) const {
            req(p.kappa >= 0.0, "cw kappa must be non-negative");
            req(p.c > 0.0 && p.step_size > 0.0, "cw c and step_size must be positive");
            req(p.grad_threshold >= 0.0 && p.grad_threshold <= 1.0, "cw grad_threshold must lie in [0, 1]");
        }
    };
    std::visit(Visitor{require}, params);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::vector<double> fgsm_step(std::span<const double> x, std::span<const double> grad, double eps) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i] + eps * sign(grad[i]), 0.0, 1.0);
    return out;
}

std::vector<double> clip_to_ball(std::span<const double> candidate, std::span<const double> center, double eps) {
    std::vector<double> out(candidate.size());
    for (std::size_t i = 0; i < candidate.size(); ++i)
        out[i] = std::clamp(candidate[i], center[i] - eps, center[i] + eps);
    return out;
}

namespace {

int label_of(std::span<const double> y_onehot) { return static_cast<int>(argmax(y_onehot)); }

void require_correct(const NetworkModel& model, std::span<const double> x, int label) {
    const auto pred = predict(model, x);
    if (static_cast<int>(pred) != label)
        fail(ErrorCode::NotCorrectlyClassified,
             "sample predicted as " + std::to_string(pred) + " but labelled " + std::to_string(label));
}

void require_box(std::span<const double> x) {
    for (double v : x) {
        if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::OutOfRangePixel, "attack input outside [0, 1]");
    }
}

AttackResult finish(const NetworkModel& model, AttackKind kind, std::span<const double> x, std::vector<double> x_adv,
                    int true_label, std::optional<int> target, std::size_t iterations) {
    AttackResult r;
    r.kind = kind;
    r.x = Tensor(model.input_shape(), std::vector<double>(x.begin(), x.end()));
    r.x_adv = Tensor(model.input_shape(), std::move(x_adv));
    r.true_label = true_label;
    r.adv_label = static_cast<int>(predict(model, r.x_adv.values()));
    r.target = target;
    r.success = target ? r.adv_label == *target : r.adv_label != true_label;
    r.l2_norm = l2_distance(r.x_adv.values(), r.x.values());
    r.l0_count = count_changed(r.x_adv.values(), r.x.values());
    r.iterations = iterations;
    return r;
}

}  // namespace

AttackResult fgsm(const NetworkModel& model, std::span<const double> x, std::span<const double> y_onehot,
                  const Fgsm& params) {
    validate(params);
    const int label = label_of(y_onehot);
    require_box(x);
    require_correct(model, x, label);
    const Tensor grad = input_gradient(model, x, y_onehot);
    return finish(model, AttackKind::Fgsm, x, fgsm_step(x, grad.values(), params.eps), label, std::nullopt, 1);
}

AttackResult bim(const NetworkModel& model, std::span<const double> x, std::span<const double> y_onehot,
                 const std::variant<BimA, BimB>& params) {
    const bool stop_early = std::holds_alternative<BimA>(params);
    double eps_step = 0.0, eps_clip = 0.0;
    std::size_t iters = 0;
    if (stop_early) {
        const auto& p = std::get<BimA>(params);
        validate(p);
        eps_step = p.eps_step, eps_clip = p.eps_clip, iters = p.max_iters;
    } else {
        const auto& p = std::get<BimB>(params);
        validate(p);
        eps_step = p.eps_step, eps_clip = p.eps_clip, iters = p.n_iters;
    }
    const int label = label_of(y_onehot);
    require_box(x);
    require_correct(model, x, label);

    std::vector<double> current(x.begin(), x.end());
    std::size_t taken = 0;
    while (taken < iters) {
        const Tensor grad = input_gradient(model, current, y_onehot);
        current = clip_to_ball(fgsm_step(current, grad.values(), eps_step), x, eps_clip);
        ++taken;
        if (stop_early && static_cast<int>(predict(model, current)) != label) break;
    }
    return finish(model, stop_early ? AttackKind::BimA : AttackKind::BimB, x, std::move(current), label, std::nullopt,
                  taken);
}

std::vector<double> saliency_map(const Tensor& d_probs, std::size_t target) {
    const std::size_t classes = d_probs.shape()[0], n = d_probs.shape()[1];
    if (target >= classes) fail(ErrorCode::UnknownClass, "target class out of range");
    std::vector<double> others(n, 0.0);
    for (std::size_t j = 0; j < classes; ++j) {
        if (j == target) continue;
        const auto row = d_probs.row(j);
        for (std::size_t i = 0; i < n; ++i) others[i] += row[i];
    }
    const auto target_row = d_probs.row(target);
    std::vector<double> s(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (target_row[i] < 0.0 || others[i] > 0.0) continue;
        s[i] = target_row[i] * std::abs(others[i]);
    }
    return s;
}

std::optional<std::pair<std::size_t, std::size_t>> select_pair(std::span<const double> saliency,
                                                               const std::vector<bool>& admissible) {
    // S >= 0, so the best pair is the two largest admissible entries.
    std::optional<std::size_t> first, second;
    for (std::size_t i = 0; i < saliency.size(); ++i) {
        if (!admissible[i]) continue;
        if (!first || saliency[i] > saliency[*first]) {
            second = first;
            first = i;
        } else if (!second || saliency[i] > saliency[*second]) {
            second = i;
        }
    }
    if (!first || !second || saliency[*first] + saliency[*second] <= 0.0) return std::nullopt;
    return std::pair{std::min(*first, *second), std::max(*first, *second)};
}

AttackResult jsma(const NetworkModel& model, std::span<const double> x, int true_label, int target,
                  const Jsma& params) {
    validate(params);
    require_box(x);
    const auto classes = static_cast<int>(model.num_classes());
    if (target < 0 || target >= classes) fail(ErrorCode::UnknownClass, "target class out of range");
    if (target == true_label) fail(ErrorCode::InvalidSpec, "jsma target must differ from the true class");

    const std::size_t n = x.size();
    const auto max_changes = static_cast<std::size_t>(std::floor(params.max_fraction * static_cast<double>(n)));
    std::vector<double> current(x.begin(), x.end());
    std::vector<bool> admissible(n);
    for (std::size_t i = 0; i < n; ++i) admissible[i] = current[i] < 1.0;

    std::size_t iterations = 0;
    std::string note;
    while (true) {
        const ClassJacobians jac = class_jacobians(model, current);
        if (static_cast<int>(argmax(jac.probs.values())) == target) break;
        if (count_changed(current, x) + 2 > max_changes) {
            note = "perturbation budget exhausted";
            break;
        }
        const auto pair = select_pair(saliency_map(jac.d_probs, static_cast<std::size_t>(target)), admissible);
        if (!pair) {
            note = std::string(to_string(ErrorCode::NoAdmissiblePair));
            break;
        }
        for (std::size_t i : {pair->first, pair->second}) {
            current[i] = std::min(1.0, current[i] + params.theta);
            if (current[i] >= 1.0) admissible[i] = false;
        }
        ++iterations;
    }
    AttackResult r = finish(model, AttackKind::Jsma, x, std::move(current), true_label, target, iterations);
    if (!r.success) r.note = note;
    return r;
}

namespace {

constexpr double kTanhShrink = 1e-6;
// Changes this small only reflect the box shrink needed by atanh.
constexpr double kShrinkArtifact = 1e-5;

}  // namespace

std::string_view to_string(CwOptimizer opt) { return opt == CwOptimizer::Adam ? "adam" : "gd"; }

CwOptimizer cw_optimizer_from_string(std::string_view name) {
    if (name == "gd") return CwOptimizer::GradientDescent;
    if (name == "adam") return CwOptimizer::Adam;
    fail(ErrorCode::InvalidSpec, "unknown cw optimizer '" + std::string(name) + "'");
}

double to_tanh_space(double pixel) {
    return std::atanh(2.0 * std::clamp(pixel, kTanhShrink, 1.0 - kTanhShrink) - 1.0);
}

double from_tanh_space(double omega) { return 0.5 * (std::tanh(omega) + 1.0); }

namespace {

struct CwProblem {
    const NetworkModel& model;
    std::span<const double> x;
    std::size_t target;
    const CwL0& params;

    /// Weights e_{i*} - e_t picking the hinge's active logit difference, and that difference.
    std::pair<std::vector<double>, double> hinge(std::span<const double> z) const {
        const std::size_t classes = z.size();
        std::size_t best = target == 0 ? 1 : 0;
        for (std::size_t j = 0; j < classes; ++j) {
            if (j != target && z[j] > z[best]) best = j;
        }
        std::vector<double> w(classes, 0.0);
        w[best] = 1.0;
        w[target] = -1.0;
        return {w, z[best] - z[target]};
    }
};

struct CwDescent {
    std::vector<double> best;  // lowest-distance iterate reaching the target margin, empty if none
    std::size_t steps = 0;
    bool diverged = false;
};

CwDescent cw_descend(const CwProblem& p, std::vector<double>& omega) {
    const std::size_t n = p.x.size();
    const CwL0& params = p.params;
    std::vector<double> x_prime(n), grad(n);
    std::vector<double> m(n, 0.0), v(n, 0.0);  // Adam moments
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double beta1_t = 1.0, beta2_t = 1.0;
    double best_dist = std::numeric_limits<double>::infinity();
    CwDescent out;
    for (;; ++out.steps) {
        for (std::size_t i = 0; i < n; ++i) x_prime[i] = from_tanh_space(omega[i]);
        const Tensor z = logits(p.model, x_prime);
        const auto [weights, margin] = p.hinge(z.values());
        const double dist = squared_distance(x_prime, p.x);
        if (!std::isfinite(dist + params.c * std::max(margin, -params.kappa))) {
            out.diverged = true;
            return out;
        }
        // With kappa > 0 an iterate only counts once the target leads by kappa.
        if (argmax(z.values()) == p.target && margin <= -params.kappa && dist < best_dist) {
            best_dist = dist;
            out.best = x_prime;
        }
        if (out.steps == params.steps) return out;

        std::fill(grad.begin(), grad.end(), 0.0);
        if (margin > -params.kappa) {
            const Tensor g = logit_gradient(p.model, x_prime, weights);
            for (std::size_t i = 0; i < n; ++i) grad[i] = params.c * g[i];
        }
        beta1_t *= beta1;
        beta2_t *= beta2;
        for (std::size_t i = 0; i < n; ++i) {
            grad[i] += 2.0 * (x_prime[i] - p.x[i]);
            const double d_omega = grad[i] * 2.0 * x_prime[i] * (1.0 - x_prime[i]);
            if (params.optimizer == CwOptimizer::GradientDescent) {
                omega[i] -= params.step_size * d_omega;
            } else {
                m[i] = beta1 * m[i] + (1.0 - beta1) * d_omega;
                v[i] = beta2 * v[i] + (1.0 - beta2) * d_omega * d_omega;
                omega[i] -= params.step_size * (m[i] / (1.0 - beta1_t)) / (std::sqrt(v[i] / (1.0 - beta2_t)) + adam_eps);
            }
        }
    }
}

/// Keeps only coordinates whose hinge-gradient magnitude is significant.
std::vector<double> cw_restrict(const CwProblem& p, std::span<const double> unrestricted) {
    const Tensor z = logits(p.model, unrestricted);
    const Tensor g = logit_gradient(p.model, unrestricted, p.hinge(z.values()).first);
    double g_max = 0.0;
    for (double v : g.values()) g_max = std::max(g_max, std::abs(v));
    const double cutoff = p.params.grad_threshold * g_max;
    std::vector<double> x_adv(p.x.begin(), p.x.end());
    for (std::size_t i = 0; i < p.x.size(); ++i) {
        const double delta = unrestricted[i] - p.x[i];
        if (std::abs(g[i]) >= cutoff && std::abs(delta) > kShrinkArtifact) x_adv[i] = std::clamp(p.x[i] + delta, 0.0, 1.0);
    }
    return x_adv;
}

}  // namespace

AttackResult cw_l0(const NetworkModel& model, std::span<const double> x, int true_label, int target,
                   const CwL0& params) {
    validate(params);
    require_box(x);
    const std::size_t classes = model.num_classes();
    if (target < 0 || static_cast<std::size_t>(target) >= classes) fail(ErrorCode::UnknownClass, "target class out of range");
    if (target == true_label) fail(ErrorCode::InvalidSpec, "cw target must differ from the true class");
    const std::size_t n = x.size();
    const CwProblem problem{model, x, static_cast<std::size_t>(target), params};

    std::vector<double> omega(n);
    for (std::size_t i = 0; i < n; ++i) omega[i] = to_tanh_space(x[i]);
    CwDescent d = cw_descend(problem, omega);
    if (d.diverged) {
        AttackResult r = finish(model, AttackKind::CwL0, x, std::vector<double>(x.begin(), x.end()), true_label, target,
                                d.steps);
        r.note = std::string(to_string(ErrorCode::Divergence));
        return r;
    }
    if (d.best.empty()) {
        for (std::size_t i = 0; i < n; ++i) d.best.push_back(from_tanh_space(omega[i]));
    }
    return finish(model, AttackKind::CwL0, x, cw_restrict(problem, d.best), true_label, target, d.steps);
}

std::vector<double> matched_gaussian_perturbation(std::size_t size, double l2, std::uint64_t seed) {
    std::vector<double> noise(size, 0.0);
    if (l2 == 0.0 || size == 0) return noise;
    Rng rng(seed);
    double norm = 0.0;
    while (norm == 0.0) {
        for (double& v : noise) v = rng.normal();
        norm = std::sqrt(std::inner_product(noise.begin(), noise.end(), noise.begin(), 0.0));
    }
    for (double& v : noise) v *= l2 / norm;
    return noise;
}

Tensor noisy_counterpart(const Tensor& x, const Tensor& x_adv, AttackKind kind, std::uint64_t seed) {
    if (x.shape() != x_adv.shape())
        fail(ErrorCode::ShapeMismatch, "original " + shape_to_string(x.shape()) + " vs adversarial " +
                                           shape_to_string(x_adv.shape()));
    Tensor noisy = x;
    if (uses_gaussian_noise(kind)) {
        const auto noise = matched_gaussian_perturbation(x.size(), l2_distance(x_adv.values(), x.values()), seed);
        for (std::size_t i = 0; i < x.size(); ++i) noisy[i] = std::clamp(x[i] + noise[i], 0.0, 1.0);
        return noisy;
    }
    const std::size_t flips = count_changed(x_adv.values(), x.values());
    Rng rng(seed);
    std::vector<std::size_t> positions(x.size());
    std::iota(positions.begin(), positions.end(), 0);
    for (std::size_t k = 0; k < flips; ++k) {
        std::swap(positions[k], positions[k + rng.below(positions.size() - k)]);
        const std::size_t i = positions[k];
        // Draw a value that actually differs so the flip count is exact.
        double v = rng.bernoulli(0.5) ? 1.0 : 0.0;
        if (v == x[i]) v = 1.0 - v;
        noisy[i] = v;
    }
    return noisy;
}

int default_target(int true_label, std::size_t num_classes) {
    return static_cast<int>((static_cast<std::size_t>(true_label) + 1) % num_classes);
}

AttackResult run_attack(const NetworkModel& model, std::span<const double> x, int true_label,
                        const AttackParams& params, std::uint64_t seed) {
    validate(params);
    const Tensor y = one_hot(std::span<const int>(&true_label, 1), model.num_classes()).reshaped({model.num_classes()});
    AttackResult r;
    switch (kind_of(params)) {
        case AttackKind::Fgsm: r = fgsm(model, x, y.values(), std::get<Fgsm>(params)); break;
        case AttackKind::BimA: r = bim(model, x, y.values(), std::get<BimA>(params)); break;
        case AttackKind::BimB: r = bim(model, x, y.values(), std::get<BimB>(params)); break;
        case AttackKind::Jsma:
            require_correct(model, x, true_label);
            r = jsma(model, x, true_label, default_target(true_label, model.num_classes()), std::get<Jsma>(params));
            break;
        case AttackKind::CwL0:
            require_correct(model, x, true_label);
            r = cw_l0(model, x, true_label, default_target(true_label, model.num_classes()), std::get<CwL0>(params));
            break;
    }
    r.x_noisy = noisy_counterpart(r.x, r.x_adv, r.kind, seed);
    return r;
}

PerturbationStats perturbation_stats(std::span<const AttackResult> results) {
    if (results.empty()) fail(ErrorCode::EmptyInput, "no attack results");
    PerturbationStats s;
    s.count = results.size();
    std::size_t still_correct = 0;
    for (const auto& r : results) {
        s.mean_l2 += r.l2_norm;
        still_correct += r.adv_label == r.true_label;
    }
    s.mean_l2 /= static_cast<double>(results.size());
    s.adv_accuracy = static_cast<double>(still_correct) / static_cast<double>(results.size());
    return s;
}

}  // namespace advdet
