#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace qscf {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Derives an independent stream seed from a base seed and up to two
/// stream labels (iteration, coordinate, ...). Every source of randomness
/// in a run is a pure function of the run seed and such labels, so results
/// do not depend on evaluation order.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t label_a = 0,
                                 std::uint64_t label_b = 0) {
    std::uint64_t s = base;
    std::uint64_t h = detail::splitmix64(s);
    s ^= label_a + 0x9e3779b97f4a7c15ull;
    h ^= detail::splitmix64(s);
    s ^= label_b + 0xbf58476d1ce4e5b9ull;
    h ^= detail::splitmix64(s);
    return h;
}

/// Deterministic random stream. Doubles are produced from the raw 64-bit
/// output of std::mt19937_64 (whose sequence the standard fully specifies),
/// not from std::uniform_real_distribution, so streams are identical across
/// standard-library implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Uniform integer in [0, n), unbiased (rejection sampling).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// m distinct values from [0, n), uniform without replacement (partial
/// Fisher-Yates). Order of the result is the sampling order.
inline std::vector<int> sample_without_replacement(int m, int n, Rng& rng) {
    if (m < 0 || m > n) throw std::invalid_argument("sample_without_replacement: need 0 <= m <= n");
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    std::vector<int> out(m);
    for (int i = 0; i < m; ++i) {
        const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(pool[i], pool[j]);
        out[i] = pool[i];
    }
    return out;
}

}  // namespace qscf
