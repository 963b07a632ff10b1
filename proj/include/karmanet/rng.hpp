#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace karmanet {

// Deterministic PRNG with explicitly coded distributions so that corpora,
// parameter draws and subsampling reproduce bit-for-bit across platforms.
// Core engine is splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Derives an independent stream, e.g. one per synthetic thread.
    Rng fork(std::uint64_t stream_id) {
        std::uint64_t z = state_ ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1));
        Rng child(z);
        child.next_u64();
        return child;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_below(std::uint64_t n) {
        // multiply-shift; bias is negligible for the n used here (<< 2^32)
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(uniform_below(
                        static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // Standard normal via Box-Muller, one spare cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double exponential(double mean) {
        double u = uniform01();
        while (u <= 0.0) u = uniform01();
        return -mean * std::log(u);
    }

    // Knuth's product method; fine for the small means used by the generator.
    int poisson(double mean) {
        if (mean <= 0.0) return 0;
        double limit = std::exp(-mean);
        double p = 1.0;
        int k = 0;
        do {
            ++k;
            p *= uniform01();
        } while (p > limit);
        return k - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace karmanet
