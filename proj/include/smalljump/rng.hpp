#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace smalljump {

// Stream tags for keyed generators. Each (seed, path, tag, sub) tuple owns an
// independent xoshiro256++ sequence.
enum class StreamTag : std::uint32_t {
    band_jumps = 1,     // counts, times and split draws of one band
    brownian_end = 2,   // terminal Brownian value
    brownian_grid = 3,  // bridge values on the fine grid
    brownian_event = 4, // bridge values at jump times
    bootstrap = 5,
    kde_split = 6,
    rank_gauss = 7,     // Gaussian pool for rank couplings
    test = 99
};

[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    std::uint64_t s = x;
    return splitmix64(s);
}

[[nodiscard]] constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t path, StreamTag tag,
                                                 std::uint64_t sub = 0) noexcept {
    std::uint64_t h = mix64(seed ^ 0x5851f42d4c957f2dULL);
    h = mix64(h ^ path);
    h = mix64(h ^ (static_cast<std::uint64_t>(tag) << 40) ^ 0x14057b7ef767814fULL);
    h = mix64(h ^ sub);
    return h;
}

class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t key = 0) noexcept { reseed(key); }
    Rng(std::uint64_t seed, std::uint64_t path, StreamTag tag, std::uint64_t sub = 0) noexcept {
        reseed(stream_key(seed, path, tag, sub));
    }

    void reseed(std::uint64_t key) noexcept {
        std::uint64_t sm = key;
        for (auto& w : s_) w = splitmix64(sm);
        has_spare_ = false;
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform on the open interval (0,1).
    double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double a, double b) noexcept { return a + (b - a) * uniform(); }

    // Box-Muller with a cached spare.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double exponential() noexcept { return -std::log(uniform()); }

    std::uint64_t poisson(double lambda) noexcept {
        if (!(lambda > 0.0)) return 0;
        if (lambda < 12.0) return poisson_inversion(lambda);
        return poisson_ptrs(lambda);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t x;
        do {
            x = (*this)();
        } while (x >= limit);
        return x % n;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::uint64_t poisson_inversion(double lambda) noexcept {
        double p = std::exp(-lambda);
        double f = p;
        const double u = uniform();
        std::uint64_t k = 0;
        while (u > f && k < 1000) {
            ++k;
            p *= lambda / static_cast<double>(k);
            f += p;
        }
        return k;
    }

    // Hormann's transformed rejection with squeeze.
    std::uint64_t poisson_ptrs(double lambda) noexcept {
        const double slam = std::sqrt(lambda);
        const double loglam = std::log(lambda);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        while (true) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::fabs(u);
            const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
            if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
            if (k < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
                -lambda + k * loglam - std::lgamma(k + 1.0))
                return static_cast<std::uint64_t>(k);
        }
    }

    std::uint64_t s_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace smalljump
