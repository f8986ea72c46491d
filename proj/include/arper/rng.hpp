#ifndef ARPER_RNG_HPP
#define ARPER_RNG_HPP

#include <cstdint>
#include <vector>

namespace arper {

// splitmix64 generator. Small, fast, and its output is fully specified by
// the seed, so streams are reproducible across platforms and compilers
// (std::shuffle / std::uniform_int_distribution are not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Unbiased uniform integer in [0, bound). bound must be > 0.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t threshold = (0ULL - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derives a decorrelated child seed from (seed, salt).
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
        Rng r(seed ^ (salt * 0xD6E8FEB86659FD93ULL + 0x2545F4914F6CDD1DULL));
        return r.next_u64();
    }

private:
    std::uint64_t state_;
};

}  // namespace arper

#endif
