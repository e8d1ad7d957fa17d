#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace tivac {

namespace detail {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// Counter-keyed xoshiro256++ stream.  A stream is fully determined by
// (seed, k1, k2, k3), so replicate-level work keyed on e.g.
// (seed, bootstrap_b, bootstrap_m) reproduces bit-identical draws no matter
// how many threads run or in which order tasks are scheduled.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t k1 = 0, std::uint64_t k2 = 0,
                       std::uint64_t k3 = 0) {
        std::uint64_t x = seed;
        detail::splitmix64_next(x);
        x ^= detail::splitmix64_next(k1);
        detail::splitmix64_next(x);
        x ^= detail::splitmix64_next(k2);
        detail::splitmix64_next(x);
        x ^= detail::splitmix64_next(k3);
        for (auto& word : state_) word = detail::splitmix64_next(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    // uniform on [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform on [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n); multiply-shift mapping (bias < n / 2^64)
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // standard normal via Box-Muller; the spare keeps consumption deterministic
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(angle);
        has_spare_ = true;
        return r * std::cos(angle);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Fisher-Yates; std::shuffle is implementation-defined, this is not
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // k distinct integers from {lo, ..., hi}, ascending
    std::vector<int> sample_without_replacement(int lo, int hi, int k) {
        std::vector<int> pool(static_cast<std::size_t>(hi - lo + 1));
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = lo + static_cast<int>(i);
        // partial Fisher-Yates: fill the tail with the sample
        const std::size_t n = pool.size();
        for (int drawn = 0; drawn < k; ++drawn) {
            std::size_t i = n - static_cast<std::size_t>(drawn);
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(pool[i - 1], pool[j]);
        }
        std::vector<int> out(pool.end() - k, pool.end());
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace tivac
