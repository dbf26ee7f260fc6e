#pragma once

#include <cstdint>
#include <random>

namespace idan {

// Deterministic RNG. mt19937_64 output is fully specified by the standard,
// but the std distributions are not, so the mapping to floats/ints is done
// here by hand and is identical on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(eng_() % span);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Derived stream for per-sample work (seed = global_seed ^ mixed(index)).
    static Rng with_salt(std::uint64_t seed, std::uint64_t salt) {
        return Rng(seed ^ (salt * 0x9e3779b97f4a7c15ull));
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace idan
