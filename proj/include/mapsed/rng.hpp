#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mapsed {

/// Seeded 64-bit Mersenne Twister with explicitly defined derived draws, so
/// sequences are reproducible across standard library implementations.
/// State round-trips through a string for checkpoint resumption.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n);
    bool coin() { return (engine_() >> 63) != 0; }
    double normal();
    /// Poisson draw by inversion; intended for small means.
    std::uint64_t poisson(double mean);

    /// Child generator seeded from this one's output stream.
    Rng split() { return Rng(engine_() ^ 0x9E3779B97F4A7C15ULL); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

    std::string state() const;
    void restore(const std::string& state);

    friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace mapsed
