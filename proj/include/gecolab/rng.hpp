// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "gecolab/tensor.hpp"

namespace gecolab {

// Deterministic random stream. Normal deviates use an explicit Box-Muller so
// regeneration from a seed is bit-identical regardless of libstdc++ internals
// (std::normal_distribution is implementation-defined).
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0,1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    void fill_normal(Tensor& t, double stddev = 1.0) {
        for (size_t i = 0; i < t.size(); ++i) t[i] = stddev * normal();
    }

    Tensor normal_tensor(std::vector<int> shape, double stddev = 1.0) {
        Tensor t(std::move(shape));
        fill_normal(t, stddev);
        return t;
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// SplitMix64-style mixer for deriving independent child seeds from a root seed
// and a stream label, so pipeline phases never share streams.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
    std::uint64_t z = root + 0x9E3779B97f4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Gaussian noise shaped like a multi-view image set, regenerable from its seed.
struct NoiseSample {
    Tensor values;
    std::uint64_t seed = 0;

    static NoiseSample generate(std::uint64_t seed, std::vector<int> shape) {
        RngStream rng(seed);
        NoiseSample n;
        n.seed = seed;
        n.values = rng.normal_tensor(std::move(shape));
        return n;
    }
};

} // namespace gecolab
