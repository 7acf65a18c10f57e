#include "property_checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <sstream>

#include "advdet/artifacts.hpp"
#include "advdet/attacks.hpp"
#include "advdet/detector.hpp"
#include "advdet/nn.hpp"
#include "advdet/rng.hpp"
#include "advdet/serialize.hpp"

namespace propcheck {

using namespace advdet;

namespace {

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(3);
    ss << v;
    return ss.str();
}

std::vector<double> uniform_vector(std::size_t n, Rng& rng, double lo = 0.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

NetworkModel random_network(Rng& rng, std::uint64_t index, double dropout) {
    const std::size_t classes = 2 + rng.below(4);
    NetworkModel m;
    if (index % 2 == 0) {
        const std::size_t side = 6 + rng.below(3);
        m = build_model({LayerSpec::conv2d(1 + rng.below(3), 3), LayerSpec::relu(), LayerSpec::maxpool2d(2),
                         LayerSpec::dropout(dropout), LayerSpec::dense(4 + rng.below(6)), LayerSpec::relu(),
                         LayerSpec::dropout(dropout), LayerSpec::dense(classes), LayerSpec::softmax()},
                        {1 + rng.below(2), side, side}, classes, rng.next());
    } else {
        m = build_model({LayerSpec::dense(3 + rng.below(8)), LayerSpec::relu(), LayerSpec::dropout(dropout),
                         LayerSpec::dense(3 + rng.below(8)), LayerSpec::relu(), LayerSpec::dense(classes),
                         LayerSpec::softmax()},
                        {4 + rng.below(10)}, classes, rng.next());
    }
    for (auto& l : m.mutable_layers()) {
        if (!l.has_params()) continue;
        for (double& b : l.bias.values()) b = rng.uniform(-0.3, 0.3);
    }
    return m;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
    return std::sqrt(diff) / scale;
}

std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       const std::vector<double>& x, double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(xp) - f(xm)) / (2 * h);
    }
    return g;
}

Outcome gradient_checks(Rng& rng) {
    const std::size_t networks = 24;
    double worst = 0.0;
    for (std::size_t n = 0; n < networks; ++n) {
        const NetworkModel m = random_network(rng, n, 0.5);
        const auto x = uniform_vector(m.input_size(), rng);
        const std::size_t classes = m.num_classes();
        const std::size_t label = rng.below(classes);
        std::vector<double> y(classes, 0.0);
        y[label] = 1.0;

        const Tensor g = input_gradient(m, x, y);
        const auto ce = [&](const std::vector<double>& v) { return -std::log(forward(m, v).probs[label]); };
        worst = std::max(worst, relative_error(g.data(), central_difference(ce, x)));

        const ClassJacobians jac = class_jacobians(m, x);
        for (std::size_t j = 0; j < classes; ++j) {
            const auto zj = [&](const std::vector<double>& v) { return logits(m, v)[j]; };
            const auto pj = [&](const std::vector<double>& v) { return forward(m, v).probs[j]; };
            const auto dz = jac.d_logits.row(j), dp = jac.d_probs.row(j);
            worst = std::max(worst, relative_error({dz.begin(), dz.end()}, central_difference(zj, x)));
            worst = std::max(worst, relative_error({dp.begin(), dp.end()}, central_difference(pj, x)));
        }
    }
    return {"gradient and jacobian finite differences", worst <= 1e-4,
            std::to_string(networks) + " networks, worst relative error " + fmt(worst)};
}

Outcome kde_checks(Rng& rng) {
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t dim = 1 + rng.below(8), n = 1 + rng.below(40);
        const auto flat = uniform_vector(dim * n, rng, -1.0, 1.0);
        const double sigma = rng.uniform(0.3, 3.0);
        const ClassFeatureBank bank(dim, {flat}, sigma);
        const auto phi = uniform_vector(dim, rng, -1.0, 1.0);
        double naive = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = 0.0;
            for (std::size_t k = 0; k < dim; ++k) d += (phi[k] - flat[i * dim + k]) * (phi[k] - flat[i * dim + k]);
            naive += std::exp(-d / (sigma * sigma));
        }
        worst = std::max(worst, std::abs(log_density(bank, phi, 0) - std::log(naive)));
    }
    return {"kernel density vs naive sum", worst <= 1e-10, "50 banks, worst abs error " + fmt(worst)};
}

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            pairs += 1.0;
            wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    }
    return wins / pairs;
}

Outcome auc_checks(Rng& rng) {
    double worst = 0.0, worst_monotone = 0.0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 2 + rng.below(200);
        std::vector<double> s(n);
        std::vector<int> y(n);
        const bool coarse = rng.bernoulli(0.5);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = coarse ? static_cast<double>(rng.below(8)) : rng.normal();
            y[i] = rng.bernoulli(0.4) ? 1 : 0;
        }
        y[0] = 1;
        y[1] = 0;
        const double auc = roc_curve(s, y).auc;
        worst = std::max(worst, std::abs(auc - pairwise_auc(s, y)));
        std::vector<double> mapped(n);
        for (std::size_t i = 0; i < n; ++i) mapped[i] = 3.0 * std::tanh(s[i] / 10.0) + 1.0;
        worst_monotone = std::max(worst_monotone, std::abs(roc_curve(mapped, y).auc - auc));
    }
    return {"roc sweep vs pairwise auc", worst <= 1e-12 && worst_monotone <= 1e-12,
            "100 score sets, worst error " + fmt(worst) + ", monotone-map change " + fmt(worst_monotone)};
}

Outcome zero_dropout_checks(Rng& rng) {
    double worst = 0.0;
    for (std::uint64_t n = 0; n < 20; ++n) {
        const NetworkModel m = random_network(rng, n, 0.0);
        worst = std::max(worst, uncertainty(m, uniform_vector(m.input_size(), rng), 2 + rng.below(20), rng.next()));
    }
    return {"uncertainty is zero without dropout", worst == 0.0, "20 networks, max U " + fmt(worst)};
}

Outcome noisy_checks(Rng& rng) {
    double worst_l2 = 0.0;
    std::size_t l0_mismatch = 0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 10 + rng.below(800);
        const double l2 = rng.uniform(0.0, 8.0);
        const auto v = matched_gaussian_perturbation(n, l2, rng.next());
        double s = 0.0;
        for (double e : v) s += e * e;
        worst_l2 = std::max(worst_l2, std::abs(std::sqrt(s) - l2) / std::max(l2, 1e-12));

        Tensor x(Shape{n});
        for (double& p : x.values()) p = rng.bernoulli(0.5) ? rng.uniform() : static_cast<double>(rng.below(2));
        Tensor adv = x;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.bernoulli(0.1)) adv[i] = x[i] == 1.0 ? 0.0 : 1.0;
        }
        const AttackKind kind = rng.bernoulli(0.5) ? AttackKind::Jsma : AttackKind::CwL0;
        const Tensor noisy = noisy_counterpart(x, adv, kind, rng.next());
        if (count_changed(noisy.values(), x.values()) != count_changed(adv.values(), x.values())) ++l0_mismatch;
    }
    return {"noisy counterpart matches L2 and L0", worst_l2 <= 1e-12 && l0_mismatch == 0,
            "worst relative L2 error " + fmt(worst_l2) + ", L0 mismatches " + std::to_string(l0_mismatch)};
}

Outcome box_ball_checks(Rng& rng) {
    std::size_t violations = 0, runs = 0;
    for (std::uint64_t n = 0; n < 20; ++n) {
        const NetworkModel m = random_network(rng, n, 0.5);
        for (int k = 0; k < 3; ++k) {
            auto x = uniform_vector(m.input_size(), rng);
            for (double& p : x) {
                if (rng.bernoulli(0.2)) p = static_cast<double>(rng.below(2));
            }
            const int label = static_cast<int>(predict(m, x));
            const double eps = rng.uniform(0.01, 0.5);
            std::vector<std::pair<AttackParams, double>> attacks{
                {Fgsm{eps}, eps},
                {BimA{eps / 5, eps, 1 + rng.below(15)}, eps},
                {BimB{eps / 5, eps, 1 + rng.below(15)}, eps},
            };
            for (const auto& [params, radius] : attacks) {
                const AttackResult r = run_attack(m, x, label, params, rng.next());
                ++runs;
                for (std::size_t i = 0; i < x.size(); ++i) {
                    const double v = r.x_adv[i];
                    if (!(v >= 0.0 && v <= 1.0) || std::abs(v - x[i]) > radius + 1e-12) {
                        ++violations;
                        break;
                    }
                }
                for (double v : r.x_noisy.values()) {
                    if (!(v >= 0.0 && v <= 1.0)) {
                        ++violations;
                        break;
                    }
                }
            }
        }
    }
    return {"fgsm and bim stay in the pixel box and the eps ball", violations == 0,
            std::to_string(runs) + " attacks, " + std::to_string(violations) + " violations"};
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_bits(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!same_bits(a[i], b[i])) return false;
    }
    return true;
}

Outcome persistence_checks(Rng& rng) {
    std::size_t failures = 0;
    const auto dir = std::filesystem::temp_directory_path() / "advdet_property_roundtrip";
    std::filesystem::create_directories(dir);

    for (std::uint64_t n = 0; n < 10; ++n) {
        const NetworkModel m = random_network(rng, n, 0.5);
        write_json(dir / "model.json", model_to_json(m));
        const NetworkModel back = model_from_json(read_json(dir / "model.json"));
        if (back.specs() != m.specs() || back.input_shape() != m.input_shape()) ++failures;
        for (std::size_t i = 0; i < m.layers().size(); ++i) {
            if (!same_bits(back.layers()[i].weight, m.layers()[i].weight) ||
                !same_bits(back.layers()[i].bias, m.layers()[i].bias))
                ++failures;
        }
    }

    const std::size_t dim = 7;
    std::vector<std::vector<double>> rows(3);
    for (auto& r : rows) {
        r = uniform_vector(dim * (1 + rng.below(10)), rng, -5, 5);
        r[0] = 1.0 / 3.0;
    }
    const ClassFeatureBank bank(dim, rows, rng.uniform(0.1, 2));
    write_json(dir / "bank.json", bank_to_json(bank));
    const ClassFeatureBank bank_back = bank_from_json(read_json(dir / "bank.json"));
    if (!same_bits(bank_back.bandwidth(), bank.bandwidth())) ++failures;
    for (std::size_t c = 0; c < 3; ++c) {
        const auto& a = bank.class_rows(c);
        const auto& b = bank_back.class_rows(c);
        if (a.size() != b.size() || !std::equal(a.begin(), a.end(), b.begin(), [](double u, double v) { return same_bits(u, v); }))
            ++failures;
    }

    DetectorModel d;
    d.zscore = {{rng.normal(), rng.normal()}, {rng.uniform(), rng.uniform()}};
    d.weights = {rng.normal(), rng.normal()};
    d.bias = rng.normal() / 3.0;
    write_json(dir / "detector.json", detector_to_json(d));
    const DetectorModel d_back = detector_from_json(read_json(dir / "detector.json"));
    for (std::size_t k = 0; k < 2; ++k) {
        if (!same_bits(d_back.weights[k], d.weights[k]) || !same_bits(d_back.zscore.mean[k], d.zscore.mean[k]) ||
            !same_bits(d_back.zscore.stddev[k], d.zscore.stddev[k]))
            ++failures;
    }
    if (!same_bits(d_back.bias, d.bias)) ++failures;

    std::vector<AttackResult> results(5);
    for (std::size_t k = 0; k < results.size(); ++k) {
        auto& r = results[k];
        r.kind = kAllAttacks[k];
        r.sample_id = k;
        r.x = Tensor(Shape{1, 3, 3}, uniform_vector(9, rng));
        r.x_adv = Tensor(Shape{1, 3, 3}, uniform_vector(9, rng));
        r.x_noisy = Tensor(Shape{1, 3, 3}, uniform_vector(9, rng));
        r.l2_norm = l2_distance(r.x.values(), r.x_adv.values());
        r.l0_count = 9;
    }
    write_attack_results(dir / "attacks.jsonl", results);
    const auto results_back = read_attack_results(dir / "attacks.jsonl");
    for (std::size_t k = 0; k < results.size(); ++k) {
        const auto& a = results[k];
        const auto& b = results_back.at(k);
        if (!same_bits(a.x, b.x) || !same_bits(a.x_adv, b.x_adv) || !same_bits(a.x_noisy, b.x_noisy) ||
            !same_bits(a.l2_norm, b.l2_norm) || a.kind != b.kind)
            ++failures;
    }

    std::vector<LabeledFeatures> feats;
    for (std::size_t i = 0; i < 60; ++i) {
        feats.push_back({i, static_cast<SampleSet>(i % 3), kAllAttacks[i % 5],
                         {rng.uniform() * std::pow(10.0, -rng.uniform(0, 8)), rng.normal() * 1e3,
                          static_cast<int>(rng.below(10))}});
    }
    write_feature_csv(dir / "features.csv", feats);
    const auto feats_back = read_feature_csv(dir / "features.csv");
    for (std::size_t i = 0; i < feats.size(); ++i) {
        if (!same_bits(feats[i].features.uncertainty, feats_back.at(i).features.uncertainty) ||
            !same_bits(feats[i].features.neg_log_density, feats_back.at(i).features.neg_log_density))
            ++failures;
    }
    std::filesystem::remove_all(dir);
    return {"persistence round trips are bit-exact", failures == 0,
            "models, bank, detector, attacks, features; " + std::to_string(failures) + " mismatches"};
}

}  // namespace

std::vector<Outcome> run_all(std::uint64_t seed) {
    std::vector<Outcome> out;
    std::uint64_t stream = 0;
    for (auto check : {gradient_checks, kde_checks, auc_checks, zero_dropout_checks, noisy_checks, box_ball_checks,
                       persistence_checks}) {
        Rng rng = Rng::stream(seed, ++stream);
        try {
            out.push_back(check(rng));
        } catch (const std::exception& e) {
            out.push_back({"check " + std::to_string(stream), false, std::string("threw: ") + e.what()});
        }
    }
    return out;
}

}  // namespace propcheck
