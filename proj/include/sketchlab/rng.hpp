#pragma once

// Deterministic random number generation. All randomness in the project flows
// through SplitMix64 streams keyed by (seed, stream ids), so results are
// reproducible across runs and platforms regardless of iteration order.

#include <cstdint>
#include <cmath>
#include <vector>
#include <initializer_list>

namespace sketchlab {

inline uint64_t splitmix64_next(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Mixes a seed with a list of stream ids into a fresh SplitMix64 state. The
// result is a finalized output, not the raw counter state, so nearby ids land
// far apart; callers may use it directly as a hash rank.
inline uint64_t mix_stream(uint64_t seed, std::initializer_list<uint64_t> ids) {
    uint64_t s = seed;
    splitmix64_next(s);
    for (uint64_t id : ids) {
        s ^= id + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
        splitmix64_next(s);
    }
    return splitmix64_next(s);
}

class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) { splitmix64_next(state_); }

    static Rng substream(uint64_t seed, std::initializer_list<uint64_t> ids) {
        Rng r(0);
        r.state_ = mix_stream(seed, ids);
        return r;
    }

    uint64_t next_u64() { return splitmix64_next(state_); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n). Rejection sampling keeps the draw unbiased.
    uint64_t below(uint64_t n) {
        if (n <= 1) return 0;
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do { v = next_u64(); } while (v >= limit);
        return v % n;
    }

    // Standard normal via Box-Muller. The spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do { u1 = uniform01(); } while (u1 <= 0.0);
        u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Normal clipped by resampling to |z| <= 2 standard deviations.
    double truncated_normal(double stddev) {
        double z;
        do { z = normal(); } while (std::fabs(z) > 2.0);
        return z * stddev;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace sketchlab
