#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>

#include "jdna/core/error.hpp"

namespace jdna {

// splitmix64 finalizer, used to derive independent seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return mix64(mix64(master) ^ (stream * 0xD1B54A32D192ED03ULL));
}

// Deterministic generator: std::mt19937_64 (its output sequence is fixed by the standard)
// with distribution code implemented here, since std:: distributions vary across libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), rejection-sampled (no modulo bias).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw Error("Rng::below requires n > 0");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    template <typename Container>
    void shuffle(Container& c) {
        shuffle(std::span(c.data(), c.size()));
    }

    // Child generator whose stream depends only on this generator's seed and `stream`.
    Rng fork(std::uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

}  // namespace jdna
