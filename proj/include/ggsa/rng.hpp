#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace ggsa {

// Deterministic RNG used everywhere. Wraps a SplitMix64 stream; distributions
// are implemented by hand so results do not depend on the standard library's
// unspecified algorithms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
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

    // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t threshold = (~n + 1) % n; // 2^64 mod n
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller (pair cached).
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        u2 = next_double();
        double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(6.283185307179586476925286766559 * u2);
        have_spare_ = true;
        return mag * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::vector<double> gaussians(std::size_t n) {
        std::vector<double> out(n);
        for (auto& v : out) v = next_gaussian();
        return out;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Derives an independent stream for a named phase of a seeded computation.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed ^ (0xa076'1d64'78bd'642full * (stream + 1)));
    return r.next_u64();
}

} // namespace ggsa
