#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace irispad {

// Seeded random source used everywhere randomness is needed (filter synthesis,
// fold shuffles, data splits, vote tie-breaks). All draws go through mt19937_64
// with explicitly coded transforms, so identical seeds give identical streams
// on every platform; std::uniform_*_distribution is avoided because its output
// is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t draw;
        do {
            draw = next_u64();
        } while (draw >= limit);
        return draw % n;
    }

    bool coin() { return (next_u64() & 1u) != 0; }

    /// Fisher-Yates shuffle driven by below(); deterministic for a fixed seed.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace irispad
