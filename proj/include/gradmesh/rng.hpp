#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace gradmesh {

// Stable seed derivation for independent RNG streams (dataset noise,
// partition shuffle, model init) from one experiment seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// mt19937_64 with hand-rolled double mappings. std::*_distribution is
// implementation-defined, which would break the bitwise-reproducibility
// contract across standard libraries.
class DetRng {
public:
    explicit DetRng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in [-half_range, half_range).
    double symmetric(double half_range) { return (2.0 * uniform() - 1.0) * half_range; }

    // Standard normal via Box-Muller; one draw per call, spare cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) {
        // Rejection sampling keeps the draw unbiased and deterministic.
        const std::uint64_t limit = ~0ULL - ~0ULL % bound;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % bound;
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace gradmesh
