#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tsi {

// Deterministic random stream. All stochastic code in the library draws from
// one of these so a fixed seed reproduces every result bit-for-bit on a given
// platform. Normal draws use an explicit Box-Muller step instead of
// std::normal_distribution to avoid hidden distribution state.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // Uniform in [0, 1).
    double uniform() {
        return std::generate_canonical<double, 53>(gen_);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; consumes exactly two uniforms per call.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Uniform integer in [0, n).
    uint64_t integer(uint64_t n) {
        return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

}  // namespace tsi
