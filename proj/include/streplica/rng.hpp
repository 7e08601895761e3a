#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "streplica/common.hpp"

namespace streplica {

// Counter-based splittable PRNG. A stream is keyed by (master seed, purpose
// tag, index); every draw is a pure function of (key, counter), so distinct
// streams never need coordination and any stream can be regenerated
// independently. Output mixing is splitmix64 applied to the counter; the key
// itself is derived by the same mixer so nearby (seed, tag, index) triples
// land far apart.
class Rng {
  public:
    Rng(std::uint64_t master_seed, std::string_view purpose, std::uint64_t index = 0) {
        std::uint64_t k = mix(master_seed ^ 0x9e3779b97f4a7c15ULL);
        for (char c : purpose) k = mix(k ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
        key_ = mix(k ^ mix(index + 0x2545f4914f6cdd1dULL));
    }

    std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

    // uniform in [0, 1), 53-bit resolution
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // standard normal via Box-Muller (deterministic across platforms, unlike
    // std::normal_distribution)
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * kPi * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }

    bool next_bernoulli(double p) { return next_double() < p; }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace streplica
