#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace loja {

/// Deterministic random stream. Gaussian draws use the Marsaglia polar method
/// on top of mt19937_64 rather than std::normal_distribution, whose output is
/// implementation-defined; the sequence here is pinned by this file alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform in [a, b).
    double uniform(double a, double b) { return a + uniform01() * (b - a); }

    /// Standard normal draw.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Per-repetition seed: base seed plus repetition index.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return base + index;
}

}  // namespace loja
