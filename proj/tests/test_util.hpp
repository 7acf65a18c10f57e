#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"

#include "advdet/errors.hpp"
#include "advdet/nn.hpp"
#include "advdet/rng.hpp"
#include "advdet/tensor.hpp"

#define CHECK_ERROR_CODE(expr, expected)                                 \
    do {                                                                 \
        bool advdet_thrown_ = false;                                     \
        try {                                                            \
            (void)(expr);                                                \
        } catch (const advdet::Error& advdet_e_) {                       \
            advdet_thrown_ = true;                                       \
            CHECK_MESSAGE(advdet_e_.code() == (expected), advdet_e_.what()); \
        }                                                                \
        CHECK_MESSAGE(advdet_thrown_, "expected " #expected);            \
    } while (0)

namespace testutil {

/// dense(out) -> softmax on a flat input with the given weights.
inline advdet::NetworkModel linear_softmax(const advdet::Tensor& w, const advdet::Tensor& b) {
    using namespace advdet;
    const std::size_t out = w.shape()[0];
    const std::size_t in = w.shape()[1];
    NetworkModel m = build_model({LayerSpec::dense(out), LayerSpec::softmax()}, {in}, out, 1);
    m.mutable_layers()[0].weight = w;
    m.mutable_layers()[0].bias = b;
    return m;
}

inline std::vector<double> random_vector(std::size_t n, advdet::Rng& rng, double lo = 0.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

/// Biases drawn uniformly so ReLU kinks are not all at the origin.
inline void randomize_biases(advdet::NetworkModel& m, advdet::Rng& rng) {
    for (auto& l : m.mutable_layers()) {
        if (!l.has_params()) continue;
        for (double& b : l.bias.values()) b = rng.uniform(-0.3, 0.3);
    }
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("advdet_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
