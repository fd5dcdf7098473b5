#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "focalforge/tensor.hpp"

namespace focalforge {

/// Deterministic random source. mt19937_64 is bit-specified by the standard
/// and all derived distributions below are written out explicitly, so seeded
/// streams reproduce byte-for-byte (library distribution objects are
/// implementation-defined and deliberately avoided).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform in [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] via rejection-free modulo of a wide draw.
    int uniform_int(int lo, int hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

    /// Standard normal via Box-Muller (explicit formula, cached pair).
    double normal() {
        if (has_cache_) {
            has_cache_ = false;
            return cache_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        cache_ = r * std::sin(a);
        has_cache_ = true;
        return r * std::cos(a);
    }

    Tensor normal_tensor(std::vector<int> shape, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = normal() * stddev;
        return t;
    }

    Tensor uniform_tensor(std::vector<int> shape, double lo, double hi) {
        Tensor t(std::move(shape));
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = uniform(lo, hi);
        return t;
    }

    /// Derive an independent stream for a named purpose. splitmix64 mixing of
    /// (seed material, stream id) keeps sibling streams decorrelated.
    Rng fork(std::uint64_t stream) {
        std::uint64_t x = gen_() ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return Rng(x);
    }

    std::string state() const {
        std::ostringstream ss;
        ss << gen_;
        return ss.str();
    }

    std::uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
    double cache_ = 0.0;
    bool has_cache_ = false;
};

}  // namespace focalforge
