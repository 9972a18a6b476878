#pragma once

#include <cmath>
#include <cstdint>

#include "mrt/error.hpp"

namespace mrt {

// splitmix64: used to expand a user seed into generator state and to derive
// independent per-replication seeds. Output is a pure function of the input.
inline std::uint64_t splitmix64(std::uint64_t& state)
{
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// xoshiro256++ with Box-Muller normals. Each Monte Carlo replication owns one
// generator seeded as a pure function of (seed, replication index), so
// parallel execution order cannot change any stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed)
    {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
        have_spare_ = false;
    }

    // Independent substream for replication `rep` of a study seeded by `seed`.
    static Rng substream(std::uint64_t seed, std::uint64_t rep)
    {
        std::uint64_t sm = seed ^ (0x9E3779B97F4A7C15ULL * (rep + 1));
        return Rng(splitmix64(sm));
    }

    std::uint64_t next_u64()
    {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) { return uniform01() < p; }

    double normal(double mu = 0.0, double sd = 1.0)
    {
        if (have_spare_) {
            have_spare_ = false;
            return mu + sd * spare_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return mu + sd * r * std::cos(theta);
    }

    // Normal truncated below at `lo`, by rejection. Acceptance probability is
    // the upper-tail mass, which is large in every scenario this library uses.
    double truncated_normal_lower(double mu, double sd, double lo)
    {
        for (int attempt = 0; attempt < 100000; ++attempt) {
            const double draw = normal(mu, sd);
            if (draw >= lo) return draw;
        }
        throw MrtError(Err::NotConverged, "truncated normal rejection sampling stalled");
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k)
    {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool have_spare_;
};

} // namespace mrt
