#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace cfgain {

// Deterministic random stream with an explicit substream-splitting rule.
//
// Splitting rule: substream i of root seed s is seeded with
//   splitmix64(splitmix64(s) + i)
// so chunked consumers (Monte Carlo particle chunks, optimizer starts)
// draw identical values regardless of scheduling or thread count.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(mix(seed)) {}

    static std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static RngStream substream(std::uint64_t root, std::uint64_t index) {
        return RngStream(mix(root) + index);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via the Box-Muller transform; consumes two uniforms
    // per pair and caches the second draw.
    double gaussian01() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform01(); // (0, 1], keeps log finite
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace cfgain
