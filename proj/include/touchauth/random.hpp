#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace touchauth {

// Distributions are implemented here rather than taken from <random>: the
// standard leaves their algorithms unspecified, and every draw must be
// reproducible on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller (no cached second value).
    double normal();

    double normal(double mean, double sd) { return mean + sd * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    /// k distinct indices from [0, n), returned in ascending order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_string(std::string_view s);

/// Order-sensitive seed derivation: every component is folded into the
/// running state, so the same tuple yields the same seed in any execution
/// order.
class SeedBuilder {
public:
    explicit SeedBuilder(std::uint64_t master) : state_(mix64(master ^ 0x5eedc0ffee123457ULL)) {}

    SeedBuilder& add(std::uint64_t v) {
        state_ = mix64(state_ ^ mix64(v + 0x9e3779b97f4a7c15ULL));
        return *this;
    }
    SeedBuilder& add(std::string_view s) { return add(hash_string(s)); }
    SeedBuilder& add(double v);

    std::uint64_t seed() const { return state_; }

private:
    std::uint64_t state_;
};

} // namespace touchauth
