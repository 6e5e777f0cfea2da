#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dnae {

/// Deterministic random source. All draws go through explicit mappings from
/// the raw mt19937_64 stream so that sequences are reproducible across
/// platforms and standard library versions (std::uniform_real_distribution
/// and friends make no such guarantee).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t raw() { return gen_(); }

    /// Uniform in [0,1) with 53 bits of mantissa.
    double u01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo,hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    /// Standard normal via Box-Muller. Pairs are generated lazily; the spare
    /// value is cached so each call consumes a deterministic amount of stream.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = u01();
        double u2 = u01();
        while (u1 <= 0.0) u1 = u01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Normal(mu, sigma) truncated to +/- 3 sigma by rejection.
    double truncated_normal(double mu, double sigma) {
        double z = normal();
        while (z < -3.0 || z > 3.0) z = normal();
        return mu + sigma * z;
    }

    /// Integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return gen_() % n; }

    /// Derive an independent stream for sub-task k of the stream seeded by
    /// `seed`. Used so that per-sample work is order- and thread-independent.
    static std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t k) {
        return seed ^ (0x9E3779B97F4A7C15ULL * (k + 1));
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Fisher-Yates shuffle driven by Rng::below, for reproducible permutations.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace dnae
