#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace samq {

/**
Deterministic random source. std::mt19937_64 output is specified bit-for-bit
by the standard, but the std:: distributions are not, so sampling is done by
hand here: simulation results must be byte-identical across platforms and
standard libraries for a given seed.
*/
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /** Uniform double in [0, 1) with 53 random bits. */
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    /** Uniform double in [lo, hi). */
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /** Uniform integer in [0, n). */
    std::size_t index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::index: n must be positive");
        // rejection sampling avoids modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % n);
    }

    /**
    Sample an index from an unnormalized weight vector by inverse CDF.
    Weights must be non-negative with a positive sum.
    */
    int discrete(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw std::invalid_argument("Rng::discrete: negative weight");
            total += w;
        }
        if (total <= 0.0) throw std::invalid_argument("Rng::discrete: weights sum to zero");
        double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size()) - 1;
    }

private:
    std::mt19937_64 gen_;
};

/**
Mix a base seed with a stream index into an independent substream seed
(splitmix64 finalizer). Used to hand each replication / worker its own
generator without correlated streams.
*/
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace samq
