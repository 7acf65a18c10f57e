#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace advdet {

/// Mixes a (seed, stream) pair into an independent 64-bit seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Seedable generator with portable draws.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The standard distributions are not, so the floating-point and
/// integer draws below are defined here to keep results identical across
/// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Generator for sub-stream `stream` of `seed`.
    static Rng stream(std::uint64_t seed, std::uint64_t stream) {
        return Rng(derive_seed(seed, stream));
    }

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal (Box-Muller, second variate cached).
    double normal();

    /// Uniform integer in [0, n). Requires n > 0.
    std::size_t below(std::size_t n);

    /// True with probability p.
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace advdet
