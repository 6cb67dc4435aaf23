#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>

namespace lulc {

// Error categories map onto CLI exit codes (see tools/).
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};
struct DivergenceError : Error {
    explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

#define LULC_CHECK(cond, msg)                        \
    do {                                             \
        if (!(cond)) {                               \
            std::ostringstream oss_;                 \
            oss_ << msg;                             \
            throw ::lulc::Error(oss_.str());         \
        }                                            \
    } while (0)

#define LULC_CHECK_T(cond, ex_type, msg)             \
    do {                                             \
        if (!(cond)) {                               \
            std::ostringstream oss_;                 \
            oss_ << msg;                             \
            throw ex_type(oss_.str());               \
        }                                            \
    } while (0)

inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64(s);
}

// Self-contained RNG so that identical seeds give identical streams on any
// platform (std:: distributions are implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // burn-in decorrelates small consecutive seeds
        splitmix64(state_);
        splitmix64(state_);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    /// uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// uniform integer in [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        LULC_CHECK(hi >= lo, "uniform_int: empty range [" << lo << ", " << hi << "]");
        uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    /// standard normal via Box-Muller
    double normal() {
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    uint64_t state_;
};

/// Derive an independent stream from a base seed and a list of stream tags.
inline Rng derive_rng(uint64_t seed, std::initializer_list<uint64_t> tags) {
    uint64_t h = seed;
    for (uint64_t t : tags) h = hash_combine(h, t);
    return Rng(h);
}

/// FNV-1a over raw bytes; used for parameter/config fingerprints.
inline uint64_t fnv1a(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Round half-to-even (IEEE default rounding mode).
inline int round_half_even(double v) {
    return static_cast<int>(std::nearbyint(v));
}

}  // namespace lulc
