#pragma once

#include "ipro/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace ipro {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// Named substream derivation: every random draw in the project flows from one
/// root seed through (stream label, indices). Ablation variants therefore see
/// identical data, init, and noise unless the varied dimension itself differs.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
    return detail::splitmix64(root ^ detail::fnv1a(stream));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t a) {
    return detail::splitmix64(derive_seed(root, stream) ^ detail::splitmix64(a));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t a, std::uint64_t b) {
    return detail::splitmix64(derive_seed(root, stream, a) ^ detail::splitmix64(~b));
}

/// Deterministic RNG. Uniform and normal draws are implemented directly on the
/// mt19937_64 bit stream (std::*_distribution is not bit-stable across
/// standard libraries).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) { return gen_() % n; }

    /// Standard normal via Box-Muller; second draw of each pair is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    Array normal_array(std::int64_t n) {
        Array a(n);
        for (std::int64_t i = 0; i < n; ++i) a(i) = normal();
        return a;
    }

    Tensor normal_tensor(std::vector<std::int64_t> shape) {
        auto n = shape_product(shape);
        return Tensor(std::move(shape), normal_array(n));
    }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ipro
