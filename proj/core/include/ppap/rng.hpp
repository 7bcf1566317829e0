#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace ppap {

/// xoshiro256** stream with splitmix64 seeding. Self-contained so that seeded
/// runs reproduce bit-identically across platforms and standard libraries.
class RngStream {
public:
    explicit RngStream(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& s : state_) s = splitmix64(x);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// uniform integer in [0, n)
    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

    /// standard normal via Box-Muller; consumes two uniforms per draw, no
    /// cached spare, so the stream state alone determines every value.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// independent child stream (for per-purpose substreams derived from one seed)
    RngStream fork(uint64_t salt) {
        RngStream child;
        uint64_t x = state_[0] ^ (salt * 0x9E3779B97f4A7C15ull);
        for (auto& s : child.state_) s = splitmix64(x);
        return child;
    }

    const std::array<uint64_t, 4>& state() const { return state_; }
    void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

private:
    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9E3779B97f4A7C15ull;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::array<uint64_t, 4> state_{};
};

}  // namespace ppap
