#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gfc {

// Counter-based uniform stream: every variate is a pure function of
// (seed, replication, unit, time, variable, extra). Parallel workers can
// draw for any (unit, time) without shared state, and results do not
// depend on scheduling order.
namespace rng {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix(uint64_t state, uint64_t field) {
    return splitmix64(state ^ (field + 0x9e3779b97f4a7c15ULL));
}

struct Stream {
    uint64_t state;

    explicit Stream(uint64_t seed) : state(splitmix64(seed)) {}

    Stream with(uint64_t field) const {
        Stream s(*this);
        s.state = mix(s.state, field);
        return s;
    }

    // Uniform in [0, 1). 53-bit mantissa.
    double uniform(uint64_t counter) const {
        const uint64_t bits = mix(state, counter);
        return static_cast<double>(bits >> 11) * 0x1.0p-53;
    }
};

// Stream for one simulated variate: id fields are folded in fixed order.
inline double uniform_at(uint64_t seed, uint64_t replication, uint64_t unit,
                         uint64_t time, uint64_t variable, uint64_t extra = 0) {
    Stream s(seed);
    s = s.with(replication).with(unit).with(time).with(variable);
    return s.uniform(extra);
}

// Inverse-CDF draw from an unnormalized row of probabilities.
inline int categorical(std::span<const double> probs, double u) {
    double total = 0.0;
    for (double p : probs) total += p;
    double acc = 0.0;
    const double target = u * total;
    for (size_t k = 0; k + 1 < probs.size(); ++k) {
        acc += probs[k];
        if (target < acc) return static_cast<int>(k);
    }
    return static_cast<int>(probs.size()) - 1;
}

// Pairwise tree reduction; summation order is independent of how work was
// distributed across threads, so totals are bitwise stable.
inline double pairwise_sum(std::span<const double> v) {
    if (v.empty()) return 0.0;
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const size_t half = v.size() / 2;
    return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

} // namespace rng
} // namespace gfc
