#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace autood {

// mt19937_64 with our own variate transforms so that sampled streams are
// reproducible independent of the standard library's distribution
// implementations.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : eng_(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return (eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    int uniform_int(int n) {
        return static_cast<int>(eng_() % static_cast<uint64_t>(n));
    }

    // standard normal via Box-Muller with a cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    uint64_t next_u64() { return eng_(); }

    // derive an independent child stream; useful for giving each run phase
    // its own seed without coupling consumption orders
    Rng fork() { return Rng(eng_()); }

    static uint64_t mix(uint64_t seed, uint64_t salt) {
        // splitmix64 finalizer over seed^salt
        uint64_t z = seed ^ (salt + 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static uint64_t hash_str(const std::string& s) {
        uint64_t h = 1469598103934665603ULL;  // FNV-1a
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return h;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace autood
