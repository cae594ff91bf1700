#pragma once

// Reproducible random streams.
//
// Each stream is a std::mt19937_64 (whose output sequence is fixed by the C++
// standard) seeded with splitmix64(splitmix64(seed) + stream_id). Uniforms take
// the top 53 bits of each draw; normals use the Box-Muller transform on pairs
// of uniforms. No std::*_distribution is involved, since their algorithms are
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace spikeglm {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Reserved stream ids. Neuron i uses stream i.
inline constexpr std::uint64_t kStimulusStream = 0xffffffff00000001ULL;
inline constexpr std::uint64_t kFitStartStream = 0xffffffff00000002ULL;

class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream_id)
        : engine_(splitmix64(splitmix64(seed) + stream_id))
    {
    }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace spikeglm
