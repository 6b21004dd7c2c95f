#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace chanform {

// Sequential RNG for generators and training loops. Wraps mt19937_64 but
// derives doubles from raw 64-bit draws so streams are identical across
// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive bounds.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next() % span);
    }

    // Marsaglia polar method; consumes a variable number of draws but is
    // fully determined by the seed.
    double normal() {
        for (;;) {
            double u = uniform(-1.0, 1.0);
            double v = uniform(-1.0, 1.0);
            double s = u * u + v * v;
            if (s > 0.0 && s < 1.0) {
                return u * std::sqrt(-2.0 * std::log(s) / s);
            }
        }
    }

private:
    std::mt19937_64 eng_;
};

// splitmix64 finalizer: stateless position/seed hashing for noise fields.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

inline double hash_unit(std::uint64_t h) {
    double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return u > 0.0 ? u : 0x1.0p-53;
}

// Standard normal from a lattice coordinate, independent of evaluation order.
inline double hash_normal(std::uint64_t seed, std::int64_t i, std::int64_t j,
                          std::uint64_t stream = 0) {
    std::uint64_t h = hash_combine(seed, stream);
    h = hash_combine(h, static_cast<std::uint64_t>(i) * 0x9e3779b97f4a7c15ull + 11400714819323198485ull);
    h = hash_combine(h, static_cast<std::uint64_t>(j));
    double u1 = hash_unit(h);
    double u2 = hash_unit(mix64(h ^ 0xD1B54A32D192ED03ull));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

} // namespace chanform
