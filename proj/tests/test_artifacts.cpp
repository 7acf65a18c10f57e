#include <cmath>
#include <numbers>

#include "advdet/artifacts.hpp"
#include "test_util.hpp"

using namespace advdet;

namespace {

// Leave-one-out log-likelihood with the normalized Gaussian kernel, computed directly.
double brute_loo(const std::vector<double>& pts, double sigma) {
    double total = 0.0;
    const double norm = std::pow(std::numbers::pi * sigma * sigma, -0.5);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (j != i) s += norm * std::exp(-(pts[i] - pts[j]) * (pts[i] - pts[j]) / (sigma * sigma));
        }
        total += std::log(s / static_cast<double>(pts.size() - 1));
    }
    return total;
}

double naive_log_density(const std::vector<std::vector<double>>& pts, const std::vector<double>& phi, double sigma) {
    double s = 0.0;
    for (const auto& p : pts) {
        double d = 0.0;
        for (std::size_t k = 0; k < phi.size(); ++k) d += (phi[k] - p[k]) * (phi[k] - p[k]);
        s += std::exp(-d / (sigma * sigma));
    }
    return std::log(s);
}

ClassFeatureBank bank_of(const std::vector<std::vector<double>>& pts, double sigma) {
    std::vector<double> flat;
    for (const auto& p : pts) flat.insert(flat.end(), p.begin(), p.end());
    return ClassFeatureBank(pts[0].size(), {flat}, sigma);
}

}  // namespace

TEST_CASE("bandwidth fit on a one-dimensional bank") {
    const std::vector<double> pts{0.0, 0.1, 2.0, 2.1};
    const ClassFeatureBank bank(1, {pts});
    const std::vector<double> grid{0.01, 0.1, 10.0};
    double best = 0.0, best_ll = -1e300;
    for (double s : grid) {
        const double ll = brute_loo(pts, s);
        CHECK(leave_one_out_log_likelihood(bank, s) == doctest::Approx(ll).epsilon(1e-12));
        if (ll > best_ll) best_ll = ll, best = s;
    }
    CHECK(best == 0.1);
    CHECK(fit_bandwidth(bank, grid) == 0.1);
    CHECK(fit_bandwidth(bank, std::vector<double>{3.0}) == 3.0);
    CHECK_ERROR_CODE(fit_bandwidth(bank, std::vector<double>{}), ErrorCode::InvalidGrid);
    CHECK_ERROR_CODE(fit_bandwidth(bank, std::vector<double>{0.1, -1.0}), ErrorCode::InvalidGrid);
    CHECK_ERROR_CODE(fit_bandwidth(ClassFeatureBank(1, {{0.0}, {1.0, 2.0}}), grid), ErrorCode::EmptyClass);
}

TEST_CASE("bandwidth grid scales with the median distance") {
    const ClassFeatureBank bank(1, {{0.0, 1.0, 3.0}});
    // pairwise distances 1, 2, 3; median 2
    const auto g = default_bandwidth_grid(bank, 3, 0.1, 10.0);
    REQUIRE(g.size() == 3);
    CHECK(g[0] == doctest::Approx(0.2));
    CHECK(g[1] == doctest::Approx(2.0));
    CHECK(g[2] == doctest::Approx(20.0));
    CHECK_ERROR_CODE(default_bandwidth_grid(bank, 0), ErrorCode::InvalidGrid);
}

TEST_CASE("kernel density agrees with the naive sum") {
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        std::vector<std::vector<double>> pts(30, std::vector<double>(5));
        for (auto& p : pts) p = testutil::random_vector(5, rng);
        const double sigma = rng.uniform(0.2, 2.0);
        const auto bank = bank_of(pts, sigma);
        const auto phi = testutil::random_vector(5, rng);
        CHECK(std::abs(log_density(bank, phi, 0) - naive_log_density(pts, phi, sigma)) <= 1e-10);
    }
}

TEST_CASE("kernel density special cases") {
    const auto single = bank_of({{0.3, 0.4}}, 0.5);
    CHECK(log_density(single, std::vector<double>{0.3, 0.4}, 0) == 0.0);

    const double d = 0.7, sigma = 0.5;
    const auto pair = bank_of({{d, 0.0}, {-d, 0.0}}, sigma);
    CHECK(log_density(pair, std::vector<double>{0.0, 0.0}, 0) ==
          doctest::Approx(std::log(2.0) - d * d / (sigma * sigma)).epsilon(1e-14));

    const auto dup = bank_of({{0.1, 0.2}, {0.1, 0.2}}, sigma);
    CHECK(log_density(dup, std::vector<double>{0.1, 0.2}, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    CHECK_ERROR_CODE(log_density(ClassFeatureBank(2, {{0.0, 0.0}}), std::vector<double>{0, 0}, 0), ErrorCode::InvalidGrid);
    CHECK_ERROR_CODE(log_density(pair, std::vector<double>{0, 0}, 1), ErrorCode::UnknownClass);
    CHECK_ERROR_CODE(log_density(pair, std::vector<double>{0}, 0), ErrorCode::ShapeMismatch);
}

TEST_CASE("kernel density ignores the bank order") {
    Rng rng(2);
    std::vector<std::vector<double>> pts(12);
    for (auto& p : pts) p = testutil::random_vector(3, rng);
    const auto phi = testutil::random_vector(3, rng);
    const double base = log_density(bank_of(pts, 0.8), phi, 0);
    for (int t = 0; t < 10; ++t) {
        for (std::size_t k = pts.size() - 1; k > 0; --k) std::swap(pts[k], pts[rng.below(k + 1)]);
        CHECK(std::abs(log_density(bank_of(pts, 0.8), phi, 0) - base) <= 1e-12);
    }
}

TEST_CASE("duplicating a coincident point adds exactly one kernel unit") {
    Rng rng(3);
    std::vector<std::vector<double>> pts(8);
    for (auto& p : pts) p = testutil::random_vector(4, rng);
    const auto phi = testutil::random_vector(4, rng);
    const double before = std::exp(log_density(bank_of(pts, 0.6), phi, 0));
    pts.push_back(phi);
    const double after = std::exp(log_density(bank_of(pts, 0.6), phi, 0));
    CHECK(after - before == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bank capping") {
    const ClassFeatureBank bank(1, {{0, 1, 2, 3, 4, 5}, {6, 7}}, 0.5);
    const auto c = bank.capped(3, 9);
    CHECK(c.class_size(0) == 3);
    CHECK(c.class_size(1) == 2);
    CHECK(c.bandwidth() == 0.5);
    CHECK(c == bank.capped(3, 9));
    CHECK(bank.capped(0, 1) == bank);
    CHECK(bank.total_size() == 8);
    CHECK_ERROR_CODE(ClassFeatureBank(2, {{1.0, 2.0, 3.0}}), ErrorCode::ShapeMismatch);
}

TEST_CASE("uncertainty from samples") {
    const std::vector<Tensor> same{Tensor::vector({0.2, 0.8}), Tensor::vector({0.2, 0.8})};
    CHECK(uncertainty_from_samples(same) == 0.0);

    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
        const auto a = testutil::random_vector(4, rng), b = testutil::random_vector(4, rng);
        double expect = 0.0;
        for (std::size_t k = 0; k < 4; ++k) expect += ((a[k] - b[k]) / 2) * ((a[k] - b[k]) / 2);
        expect /= 4;
        const std::vector<Tensor> s{Tensor(Shape{4}, a), Tensor(Shape{4}, b)};
        CHECK(uncertainty_from_samples(s) == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK_ERROR_CODE(uncertainty_from_samples(std::vector<Tensor>{same[0]}), ErrorCode::InvalidSpec);
}

TEST_CASE("uncertainty vanishes without dropout") {
    Rng rng(5);
    const auto m = build_model({LayerSpec::dense(6), LayerSpec::relu(), LayerSpec::dropout(0.0), LayerSpec::dense(3),
                                LayerSpec::softmax()},
                               {4}, 3, 2);
    CHECK(uncertainty(m, testutil::random_vector(4, rng), 10, 3) == 0.0);
    CHECK_ERROR_CODE(uncertainty(m, testutil::random_vector(4, rng), 1, 3), ErrorCode::InvalidSpec);
}

TEST_CASE("feature extraction and density walks") {
    Rng rng(6);
    auto m = build_model({LayerSpec::dense(5), LayerSpec::relu(), LayerSpec::dropout(0.5), LayerSpec::dense(2),
                          LayerSpec::softmax()},
                         {3}, 2, 7);
    testutil::randomize_biases(m, rng);
    Tensor images(Shape{20, 3});
    std::vector<int> labels(20);
    for (std::size_t i = 0; i < 20; ++i) {
        for (double& v : images.row(i)) v = rng.uniform();
        labels[i] = static_cast<int>(predict(m, images.row(i)));
    }
    labels[0] = 0;
    labels[1] = 1;
    auto bank = build_feature_bank(m, images, labels);
    CHECK(bank.dim() == 5);
    CHECK(bank.total_size() == 20);
    bank.set_bandwidth(1.0);

    const auto x = images.row(2);
    const auto f = extract_features(m, bank, x, 8, 11);
    CHECK(f == extract_features(m, bank, x, 8, 11));
    CHECK(f.predicted_class == static_cast<int>(predict(m, x)));
    CHECK(f.neg_log_density ==
          doctest::Approx(-log_density(bank, forward(m, x).hidden.values(), static_cast<std::size_t>(f.predicted_class))));
    CHECK(f.uncertainty >= 0.0);

    const int label = static_cast<int>(predict(m, x));
    const auto walk = density_walk(m, bank, x, label, BimB{0.05, 0.3, 6});
    REQUIRE(walk.size() == 7);
    CHECK(walk[0].iteration == 0);
    CHECK(walk[6].iteration == 6);
    CHECK(walk[0].log_density_source == doctest::Approx(log_density(bank, forward(m, x).hidden.values(), label)));
    CHECK_ERROR_CODE(density_walk(m, bank, x, 1 - label, BimB{}), ErrorCode::NotCorrectlyClassified);
}
