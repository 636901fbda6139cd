#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace faultline {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument values.
struct ValidationError : Error {
    using Error::Error;
};

/// DRAM command issued in an illegal bank/row state.
struct ProtocolViolation : Error {
    using Error::Error;
};

/// Malformed input file (trace, profile, checkpoint, descriptor).
struct ParseError : Error {
    using Error::Error;
};

/// An artifact was produced for a different chip than the one in use.
struct FingerprintMismatch : Error {
    using Error::Error;
};

/// The search ran out of feasible weight bits.
struct ProfileExhausted : Error {
    using Error::Error;
};

/// A physically committed flip did not land as intended.
struct PhysicalFlipMismatch : Error {
    using Error::Error;
};

/// A physical commit produced collateral flips while they were forbidden.
struct CollateralForbidden : Error {
    using Error::Error;
};

/// Filesystem / IO failure.
struct IoError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// Self-contained xoshiro256++ seeded through splitmix64 so that every stream
// is reproducible bit-for-bit across platforms and standard libraries.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Rng {
  public:
    explicit Rng(uint64_t seed, uint64_t stream = 0) {
        uint64_t x = seed ^ (stream * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull);
        for (auto& s : state_) s = splitmix64(x);
    }

    uint64_t next() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform integer in [0, bound). bound must be > 0.
    uint64_t uniform(uint64_t bound) {
        // Rejection sampling keeps the distribution exact.
        const uint64_t threshold = -bound % bound;
        while (true) {
            uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    /// Uniform integer in [lo, hi] inclusive.
    uint64_t uniform_range(uint64_t lo, uint64_t hi) {
        return lo + uniform(hi - lo + 1);
    }

    /// Uniform double in [0, 1).
    double real() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    bool coin(double p_true) { return real() < p_true; }

    /// Integer drawn log-uniformly from [lo, hi] inclusive. lo must be >= 1.
    uint64_t log_uniform(uint64_t lo, uint64_t hi) {
        if (lo == hi) return lo;
        const double llo = std::log(static_cast<double>(lo));
        const double lhi = std::log(static_cast<double>(hi) + 1.0);
        double v = std::exp(llo + (lhi - llo) * real());
        auto r = static_cast<uint64_t>(v);
        if (r < lo) r = lo;
        if (r > hi) r = hi;
        return r;
    }

    /// Standard normal via Box-Muller (portable, no stdlib distributions).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_normal_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = real();
        const double u2 = real();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        constexpr double two_pi = 6.283185307179586476925286766559;
        spare_normal_ = mag * std::sin(two_pi * u2);
        has_spare_ = true;
        return mag * std::cos(two_pi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t state_[4];
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Stable hashing (FNV-1a, 64-bit) for chip fingerprints.
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace faultline
