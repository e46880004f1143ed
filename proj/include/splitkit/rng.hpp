#ifndef SPLITKIT_RNG_HPP
#define SPLITKIT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>

namespace splitkit {

// Deterministic splitmix64 generator with named sub-streams.
//
// All randomness in the toolkit flows from one user seed; independent
// components draw from streams derived by name so that adding a draw in one
// place cannot perturb another. The uniform mapping is fixed (53-bit
// mantissa) so outputs are byte-identical across platforms, unlike
// std::uniform_real_distribution.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : base_(seed), state_(seed) {}

    // Independent generator derived from the base seed and a label.
    Rng stream(std::string_view name) const {
        std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        return Rng(mix(base_ ^ h));
    }

    Rng stream(std::string_view name, std::uint64_t index) const {
        Rng s = stream(name);
        return Rng(mix(s.base_ + 0x9E3779B97F4A7C15ULL * (index + 1)));
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    bool coin(double p = 0.5) { return uniform() < p; }

    // Standard normal via Box-Muller; consumes two uniforms per call.
    double gaussian() {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        const double v = uniform();
        return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586 * v);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t base_;
    std::uint64_t state_;
};

}  // namespace splitkit

#endif
