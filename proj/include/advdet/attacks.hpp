#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "advdet/nn.hpp"
#include "advdet/tensor.hpp"

namespace advdet {

enum class AttackKind { Fgsm, BimA, BimB, Jsma, CwL0 };

inline constexpr AttackKind kAllAttacks[] = {AttackKind::Fgsm, AttackKind::BimA, AttackKind::BimB, AttackKind::Jsma,
                                             AttackKind::CwL0};

/// CLI names: fgsm, bim-a, bim-b, jsma, cw.
std::string_view to_string(AttackKind kind);
AttackKind attack_kind_from_string(std::string_view name);

/// Gaussian-noise counterparts for the sign-gradient attacks, pixel flips for the rest.
bool uses_gaussian_noise(AttackKind kind);

struct Fgsm {
    double eps = 0.25;
};

struct BimA {
    double eps_step = 0.03;
    double eps_clip = 0.3;
    std::size_t max_iters = 50;
};

struct BimB {
    double eps_step = 0.03;
    double eps_clip = 0.3;
    std::size_t n_iters = 50;
};

struct Jsma {
    double theta = 1.0;
    double max_fraction = 0.1;
};

enum class CwOptimizer { GradientDescent, Adam };

std::string_view to_string(CwOptimizer opt);
CwOptimizer cw_optimizer_from_string(std::string_view name);

struct CwL0 {
    double kappa = 0.0;
    double c = 1.0;
    std::size_t steps = 1000;
    double step_size = 0.01;
    double grad_threshold = 0.01;
    CwOptimizer optimizer = CwOptimizer::GradientDescent;
};

using AttackParams = std::variant<Fgsm, BimA, BimB, Jsma, CwL0>;

AttackKind kind_of(const AttackParams& params);
/// Throws InvalidSpec when a parameter is outside its domain.
void validate(const AttackParams& params);

struct AttackResult {
    AttackKind kind = AttackKind::Fgsm;
    std::size_t sample_id = 0;  // index of x in the evaluation set
    Tensor x;
    Tensor x_adv;
    Tensor x_noisy;  // filled by run_attack / noisy_counterpart
    int true_label = 0;
    int adv_label = 0;
    std::optional<int> target;  // targeted attacks only
    bool success = false;
    double l2_norm = 0.0;
    std::size_t l0_count = 0;
    std::size_t iterations = 0;
    std::string note;  // reason for an aborted attack, empty otherwise
};

/// Sign with sign(0) = 0.
double sign(double v);

/// Single signed-gradient step clamped to the pixel box.
std::vector<double> fgsm_step(std::span<const double> x, std::span<const double> grad, double eps);

/// Projection of `candidate` onto the L-inf ball of radius eps around `center`.
std::vector<double> clip_to_ball(std::span<const double> candidate, std::span<const double> center, double eps);

AttackResult fgsm(const NetworkModel& model, std::span<const double> x, std::span<const double> y_onehot,
                  const Fgsm& params);

AttackResult bim(const NetworkModel& model, std::span<const double> x, std::span<const double> y_onehot,
                 const std::variant<BimA, BimB>& params);

/// Per-feature adversarial saliency for target class t from the softmax Jacobian rows.
std::vector<double> saliency_map(const Tensor& d_probs, std::size_t target);

/// Pair {i, j} (i < j) maximizing S[i] + S[j] over admissible features, lowest indices on ties.
/// Empty when fewer than two features are admissible or every admissible saliency is zero.
std::optional<std::pair<std::size_t, std::size_t>> select_pair(std::span<const double> saliency,
                                                               const std::vector<bool>& admissible);

AttackResult jsma(const NetworkModel& model, std::span<const double> x, int true_label, int target,
                  const Jsma& params);

/// tanh change of variables used by the L0 attack.
double to_tanh_space(double pixel);
double from_tanh_space(double omega);

AttackResult cw_l0(const NetworkModel& model, std::span<const double> x, int true_label, int target,
                   const CwL0& params);

/// Unit Gaussian direction scaled to exactly `l2` (before any clamping).
std::vector<double> matched_gaussian_perturbation(std::size_t size, double l2, std::uint64_t seed);

Tensor noisy_counterpart(const Tensor& x, const Tensor& x_adv, AttackKind kind, std::uint64_t seed);

/// Target used for the targeted attacks in experiment runs.
int default_target(int true_label, std::size_t num_classes);

/// Runs one attack on a correctly classified sample and attaches its noisy counterpart.
AttackResult run_attack(const NetworkModel& model, std::span<const double> x, int true_label,
                        const AttackParams& params, std::uint64_t seed);

struct PerturbationStats {
    double mean_l2 = 0.0;
    double adv_accuracy = 0.0;
    std::size_t count = 0;
};

PerturbationStats perturbation_stats(std::span<const AttackResult> results);

}  // namespace advdet
